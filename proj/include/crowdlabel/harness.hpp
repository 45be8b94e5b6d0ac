#pragma once

#include <atomic>
#include <climits>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "crowdlabel/aggregate.hpp"
#include "crowdlabel/common.hpp"
#include "crowdlabel/exponent.hpp"
#include "crowdlabel/model.hpp"

namespace crowdlabel {

inline constexpr long long kEnumerationCap = 10'000'000;
inline constexpr long long kMinErrorsForFit = 10;

enum class Rule { kMajorityVote, kOracleMle, kPluginMle, kEm, kOneCoinPlugin };

inline const char* rule_name(Rule r) {
  switch (r) {
    case Rule::kMajorityVote: return "mv";
    case Rule::kOracleMle: return "oracle";
    case Rule::kPluginMle: return "plugin";
    case Rule::kEm: return "em";
    case Rule::kOneCoinPlugin: return "onecoin-plugin";
  }
  return "?";
}

inline Rule parse_rule(const std::string& s) {
  if (s == "mv") return Rule::kMajorityVote;
  if (s == "oracle") return Rule::kOracleMle;
  if (s == "plugin") return Rule::kPluginMle;
  if (s == "em") return Rule::kEm;
  if (s == "onecoin-plugin") return Rule::kOneCoinPlugin;
  throw ValidationError("unknown rule '" + s +
                        "' (expected mv, oracle, plugin, em, onecoin-plugin)");
}

/// A per-column decision: argmax over g of sum_i table[i][x_i][g], ties to
/// the smallest g. Majority vote and likelihood rules are both score tables,
/// and the accumulation order matches the aggregation routines exactly, so
/// enumeration and simulation decide every column identically.
class ColumnRule {
 public:
  static ColumnRule majority_vote(int m, int k) {
    if (m < 1 || k < 2) throw ValidationError("column rule needs m >= 1 and k >= 2");
    std::vector<double> t(static_cast<std::size_t>(m) * k * k, 0.0);
    for (int i = 0; i < m; ++i)
      for (int x = 1; x <= k; ++x)
        t[(static_cast<std::size_t>(i) * k + (x - 1)) * k + (x - 1)] = 1.0;
    return ColumnRule(m, k, std::move(t));
  }

  /// Likelihood scoring under the given (true or estimated) pool.
  static ColumnRule likelihood(const WorkerPool& scoring_pool) {
    const int m = scoring_pool.worker_count();
    const int k = scoring_pool.label_count();
    const std::vector<double> logp = detail::log_pool_table(scoring_pool);
    std::vector<double> t(static_cast<std::size_t>(m) * k * k);
    for (int i = 0; i < m; ++i)
      for (int x = 1; x <= k; ++x)
        for (int g = 1; g <= k; ++g)
          t[(static_cast<std::size_t>(i) * k + (x - 1)) * k + (g - 1)] =
              logp[(static_cast<std::size_t>(i) * k + (g - 1)) * k + (x - 1)];
    return ColumnRule(m, k, std::move(t));
  }

  int worker_count() const { return m_; }
  int label_count() const { return k_; }

  /// Scores added for worker i reporting x (1-based), one per candidate g.
  const double* table(int i, int x) const {
    return table_.data() + (static_cast<std::size_t>(i) * k_ + (x - 1)) * k_;
  }

  int decide(std::span<const std::int32_t> column) const {
    std::vector<double> s(k_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const double* t = table(i, column[i]);
      for (int g = 0; g < k_; ++g) s[g] += t[g];
    }
    int best = 0;
    for (int g = 1; g < k_; ++g)
      if (s[g] > s[best]) best = g;
    return best + 1;
  }

 private:
  ColumnRule(int m, int k, std::vector<double> t) : m_(m), k_(k), table_(std::move(t)) {}
  int m_, k_;
  std::vector<double> table_;
};

/// Exact per-item misclassification probability of a column rule, by
/// enumerating all k^m worker answer columns for one true label.
/// Feasible only while k^m stays within the enumeration cap.
inline double exact_error(const WorkerPool& pool, const ColumnRule& rule, int true_label) {
  const int m = pool.worker_count();
  const int k = pool.label_count();
  if (rule.worker_count() != m || rule.label_count() != k)
    throw ValidationError("rule and pool disagree on shape");
  if (true_label < 1 || true_label > k)
    throw ValidationError("true label must lie in 1..k");
  double columns = 1.0;
  for (int i = 0; i < m; ++i) columns *= k;
  if (columns > static_cast<double>(kEnumerationCap))
    throw DomainError("enumeration of k^m = " + std::to_string(columns) +
                      " columns exceeds the cap of " + std::to_string(kEnumerationCap));

  // Incremental state per depth: log column probability and rule scores.
  std::vector<double> scores(static_cast<std::size_t>(m + 1) * k, 0.0);
  std::vector<double> logp(m + 1, 0.0);
  double err = 0.0, comp = 0.0;  // Kahan accumulator

  std::function<void(int)> rec = [&](int i) {
    if (i == m) {
      const double* s = scores.data() + static_cast<std::size_t>(m) * k;
      int best = 0;
      for (int g = 1; g < k; ++g)
        if (s[g] > s[best]) best = g;
      if (best + 1 != true_label) {
        const double y = std::exp(logp[m]) - comp;
        const double t = err + y;
        comp = (t - err) - y;
        err = t;
      }
      return;
    }
    for (int x = 1; x <= k; ++x) {
      const double pe = pool.worker(i).at(true_label, x);
      if (pe == 0.0) continue;
      logp[i + 1] = logp[i] + std::log(pe);
      const double* add = rule.table(i, x);
      const double* cur = scores.data() + static_cast<std::size_t>(i) * k;
      double* nxt = scores.data() + static_cast<std::size_t>(i + 1) * k;
      for (int g = 0; g < k; ++g) nxt[g] = cur[g] + add[g];
      rec(i + 1);
    }
  };
  rec(0);
  return std::min(1.0, err);
}

/// How the worker pool of an experiment is specified. One-coin kinds define
/// an unbounded worker stream whose prefix of length m is the pool at m, so
/// accuracies never change as the grid grows.
struct PoolSpec {
  enum class Kind { kOneCoinConst, kOneCoinCycle, kOneCoinUniform, kExplicit };
  Kind kind = Kind::kOneCoinConst;
  double p = 0.0;                        // const
  std::vector<double> values;            // cycle
  double low = 0.0, high = 0.0;          // uniform
  std::vector<ConfusionMatrix> workers;  // explicit

  bool one_coin() const { return kind != Kind::kExplicit; }
  int label_count() const { return one_coin() ? 2 : workers.front().label_count(); }
  int max_workers() const {
    return one_coin() ? INT_MAX : static_cast<int>(workers.size());
  }

  void validate() const {
    switch (kind) {
      case Kind::kOneCoinConst:
        if (!(p >= 0.0 && p <= 1.0))
          throw ValidationError("one-coin accuracy must lie in [0,1]");
        break;
      case Kind::kOneCoinCycle:
        if (values.empty()) throw ValidationError("cycle pool needs at least one accuracy");
        for (double v : values)
          if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("one-coin accuracy must lie in [0,1]");
        break;
      case Kind::kOneCoinUniform:
        if (!(low >= 0.0 && high <= 1.0 && low <= high))
          throw ValidationError("uniform pool needs 0 <= low <= high <= 1");
        break;
      case Kind::kExplicit:
        if (workers.empty()) throw ValidationError("explicit pool needs at least one worker");
        break;
    }
  }

  std::vector<double> accuracies(int m, std::uint64_t seed) const {
    std::vector<double> acc(m);
    const std::uint64_t s = derive_seed(seed, kSaltPool);
    for (int i = 0; i < m; ++i) {
      switch (kind) {
        case Kind::kOneCoinConst: acc[i] = p; break;
        case Kind::kOneCoinCycle: acc[i] = values[i % values.size()]; break;
        case Kind::kOneCoinUniform:
          acc[i] = low + (high - low) * cell_uniform(s, 0, static_cast<std::uint64_t>(i));
          break;
        case Kind::kExplicit:
          throw ValidationError("explicit pools have no one-coin accuracies");
      }
    }
    return acc;
  }

  OneCoinPool one_coin_prefix(int m, std::uint64_t seed) const {
    return OneCoinPool(accuracies(m, seed));
  }

  WorkerPool prefix(int m, std::uint64_t seed) const {
    if (m < 1) throw ValidationError("pool prefix length must be >= 1");
    if (!one_coin()) {
      if (m > static_cast<int>(workers.size()))
        throw ValidationError("grid asks for " + std::to_string(m) +
                              " workers but the pool defines " +
                              std::to_string(workers.size()));
      return WorkerPool({workers.begin(), workers.begin() + m});
    }
    return one_coin_prefix(m, seed).to_pool();
  }
};

struct ExperimentConfig {
  PoolSpec pool;
  std::vector<int> m_grid;
  long long n = 0;
  int trials = 1;
  std::vector<Rule> rules;
  std::uint64_t seed = 0;
  double gamma = 0.5;   // P(truth = 2) when k = 2; truth is uniform otherwise
  double lambda = 0.5;  // smoothing weight for em and onecoin-plugin

  void validate() const {
    pool.validate();
    if (m_grid.empty()) throw ValidationError("m_grid must not be empty");
    for (std::size_t i = 0; i < m_grid.size(); ++i) {
      if (m_grid[i] < 1) throw ValidationError("m_grid entries must be >= 1");
      if (i > 0 && m_grid[i] <= m_grid[i - 1])
        throw ValidationError("m_grid must be strictly increasing");
    }
    if (m_grid.back() > pool.max_workers())
      throw ValidationError("m_grid exceeds the worker count of the explicit pool");
    if (n < 1) throw ValidationError("n must be >= 1");
    if (trials < 1) throw ValidationError("trials must be >= 1");
    if (rules.empty()) throw ValidationError("rules must not be empty");
    for (std::size_t i = 0; i < rules.size(); ++i)
      for (std::size_t j = i + 1; j < rules.size(); ++j)
        if (rules[i] == rules[j]) throw ValidationError("duplicate rule in config");
    for (Rule r : rules)
      if (r == Rule::kPluginMle)
        throw ValidationError(
            "rule 'plugin' needs an explicit estimate; use the aggregate command "
            "or onecoin-plugin");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0,1]");
    if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
  }
};

struct ExperimentPoint {
  int m = 0;
  long long errors = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
  double predicted_exponent = 0.0;
  bool predicted_defined = false;
};

struct RuleSeries {
  Rule rule = Rule::kMajorityVote;
  std::vector<ExperimentPoint> points;
  double fitted_slope = 0.0;
  bool slope_defined = false;
};

struct ExperimentResult {
  long long n = 0;
  int trials = 0;
  std::uint64_t seed = 0;
  std::vector<RuleSeries> series;
};

/// Least-squares slope of log(error) against m.
inline double fit_exponent(const std::vector<std::pair<double, double>>& points) {
  std::vector<std::pair<double, double>> use;
  for (const auto& [m, e] : points)
    if (e > 0.0) use.emplace_back(m, std::log(e));
  if (use.size() < 3)
    throw DomainError("need at least 3 points with positive error rates to fit a slope");
  double mx = 0.0, mz = 0.0;
  for (const auto& [x, z] : use) {
    mx += x;
    mz += z;
  }
  mx /= use.size();
  mz /= use.size();
  double sxx = 0.0, sxz = 0.0;
  for (const auto& [x, z] : use) {
    sxx += (x - mx) * (x - mx);
    sxz += (x - mx) * (z - mz);
  }
  if (sxx <= 0.0) throw DomainError("slope needs at least two distinct m values");
  return sxz / sxx;
}

namespace detail {

inline GroundTruth sample_truth(int k, double gamma, std::uint64_t truth_seed, long long n) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (long long j = 0; j < n; ++j) {
    const double u = cell_uniform(truth_seed, 0, static_cast<std::uint64_t>(j));
    if (k == 2)
      y[j] = u < gamma ? 2 : 1;
    else
      y[j] = 1 + std::min(k - 1, static_cast<int>(u * k));
  }
  return GroundTruth(std::move(y));
}

inline GroundTruth apply_rule(Rule rule, const LabelMatrix& labels, const WorkerPool& pool,
                              double lambda) {
  switch (rule) {
    case Rule::kMajorityVote:
      return majority_vote(labels);
    case Rule::kOracleMle:
      return oracle_mle(labels, pool);
    case Rule::kEm: {
      const auto init = PosteriorMatrix::from_labels(majority_vote(labels),
                                                     labels.label_count(), 0.9);
      return em_run(labels, init, 100, 1e-8, lambda).labels;
    }
    case Rule::kOneCoinPlugin: {
      const auto est = one_coin_estimate(labels);
      return plugin_mle(labels, OneCoinPool(est.p_hat).to_pool());
    }
    case Rule::kPluginMle:
      throw ValidationError("rule 'plugin' needs an explicit estimate");
  }
  throw ValidationError("unknown rule");
}

/// Runs body(t) for t in [0, trials); results must land in per-t slots.
inline void parallel_trials(int trials, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || trials <= 1) {
    for (int t = 0; t < trials; ++t) body(t);
    return;
  }
  const int w = std::min(threads, trials);
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> team;
  team.reserve(w);
  for (int i = 0; i < w; ++i)
    team.emplace_back([&] {
      while (true) {
        const int t = next.fetch_add(1);
        if (t >= trials) break;
        try {
          body(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          break;
        }
      }
    });
  for (auto& th : team) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

/// Monte Carlo error rates over the m grid, one series per rule, with the
/// predicted exponent per point and a fitted slope per rule. Identical
/// configs give identical results for any thread count: every random draw is
/// addressed by (seed, m, trial, cell) and error counts are integers.
inline ExperimentResult run_experiment(const ExperimentConfig& config, int threads = 1,
                                       const std::function<void(int)>& on_m_done = {}) {
  config.validate();
  const int k = config.pool.label_count();
  ExperimentResult result;
  result.n = config.n;
  result.trials = config.trials;
  result.seed = config.seed;
  result.series.resize(config.rules.size());
  for (std::size_t r = 0; r < config.rules.size(); ++r)
    result.series[r].rule = config.rules[r];

  for (int m : config.m_grid) {
    const WorkerPool pool = config.pool.prefix(m, config.seed);

    std::vector<std::vector<long long>> wrong(config.trials,
                                              std::vector<long long>(config.rules.size(), 0));
    detail::parallel_trials(config.trials, threads, [&](int t) {
      const GroundTruth truth = detail::sample_truth(
          k, config.gamma, derive_seed(config.seed, kSaltTruth, m, t), config.n);
      const LabelMatrix labels =
          generate_labels(pool, truth, derive_seed(config.seed, kSaltLabels, m, t));
      for (std::size_t r = 0; r < config.rules.size(); ++r) {
        const GroundTruth est = detail::apply_rule(config.rules[r], labels, pool, config.lambda);
        long long w = 0;
        for (int j = 0; j < truth.item_count(); ++j)
          if (est.label(j) != truth.label(j)) ++w;
        wrong[t][r] = w;
      }
    });

    const double draws = static_cast<double>(config.n) * config.trials;
    for (std::size_t r = 0; r < config.rules.size(); ++r) {
      ExperimentPoint pt;
      pt.m = m;
      for (int t = 0; t < config.trials; ++t) pt.errors += wrong[t][r];
      pt.mean_error = static_cast<double>(pt.errors) / draws;
      pt.std_error = std::sqrt(pt.mean_error * (1.0 - pt.mean_error) / draws);
      try {
        if (config.rules[r] == Rule::kMajorityVote) {
          if (config.pool.one_coin()) {
            pt.predicted_exponent =
                majority_vote_exponent(config.pool.one_coin_prefix(m, config.seed)).value;
            pt.predicted_defined = true;
          }
        } else if (config.pool.one_coin()) {
          pt.predicted_exponent = one_coin_exponent(config.pool.one_coin_prefix(m, config.seed));
          pt.predicted_defined = true;
        } else if (pool.strictly_positive()) {
          pt.predicted_exponent = minimax_exponent(pool).i_pi;
          pt.predicted_defined = true;
        }
      } catch (const DomainError&) {
        pt.predicted_defined = false;
      }
      result.series[r].points.push_back(pt);
    }
    if (on_m_done) on_m_done(m);
  }

  for (auto& series : result.series) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& pt : series.points)
      if (pt.errors >= kMinErrorsForFit) pts.emplace_back(pt.m, pt.mean_error);
    if (pts.size() >= 3) {
      series.fitted_slope = fit_exponent(pts);
      series.slope_defined = true;
    }
  }
  return result;
}

struct SampleSizeConfig {
  PoolSpec pool;
  long long n = 0;
  double epsilon = 0.0;
  int trials = 1;
  std::uint64_t seed = 0;
  double gamma = 0.5;

  void validate() const {
    pool.validate();
    if (n < 1) throw ValidationError("n must be >= 1");
    if (trials < 1) throw ValidationError("trials must be >= 1");
    if (!(epsilon > 0.0 && epsilon <= 1.0))
      throw ValidationError("epsilon must lie in (0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0,1]");
  }
};

struct SampleSizeReport {
  double exponent = 0.0;
  long long m_star = 0;
  long long m_sim = 0;
  double frac_within_epsilon = 0.0;
  double frac_perfect = 0.0;
  bool perfect_applicable = false;  // epsilon at or below 1/n targets perfect recovery
  double mean_error = 0.0;
};

/// Plans m from the pool's exponent and checks the plan by simulation with a
/// 1.3x safety margin, deciding with the likelihood rule under the true pool.
inline SampleSizeReport verify_sample_size(const SampleSizeConfig& config, int threads = 1) {
  config.validate();
  SampleSizeReport rep;
  switch (config.pool.kind) {
    case PoolSpec::Kind::kOneCoinConst:
      rep.exponent = one_coin_exponent(config.pool.one_coin_prefix(1, config.seed));
      break;
    case PoolSpec::Kind::kOneCoinCycle:
      rep.exponent = one_coin_exponent(
          config.pool.one_coin_prefix(static_cast<int>(config.pool.values.size()), config.seed));
      break;
    case PoolSpec::Kind::kOneCoinUniform:
      // Representative long prefix of the accuracy stream.
      rep.exponent = one_coin_exponent(config.pool.one_coin_prefix(64, config.seed));
      break;
    case PoolSpec::Kind::kExplicit:
      rep.exponent = minimax_exponent(WorkerPool(config.pool.workers)).i_pi;
      break;
  }
  rep.m_star = required_workers(rep.exponent, config.epsilon);
  rep.m_sim = std::max<long long>(1, static_cast<long long>(std::ceil(1.3 * rep.m_star)));
  if (rep.m_sim > config.pool.max_workers())
    throw ValidationError("explicit pool too small for the planned worker count " +
                          std::to_string(rep.m_sim));

  const int k = config.pool.label_count();
  const int m = static_cast<int>(rep.m_sim);
  const WorkerPool pool = config.pool.prefix(m, config.seed);
  rep.perfect_applicable = config.epsilon <= 1.0 / config.n;

  std::vector<long long> wrong(config.trials, 0);
  detail::parallel_trials(config.trials, threads, [&](int t) {
    const GroundTruth truth = detail::sample_truth(
        k, config.gamma, derive_seed(config.seed, kSaltTruth, m, t), config.n);
    const LabelMatrix labels =
        generate_labels(pool, truth, derive_seed(config.seed, kSaltLabels, m, t));
    const GroundTruth est = oracle_mle(labels, pool);
    long long w = 0;
    for (int j = 0; j < truth.item_count(); ++j)
      if (est.label(j) != truth.label(j)) ++w;
    wrong[t] = w;
  });

  long long within = 0, perfect = 0, total = 0;
  for (int t = 0; t < config.trials; ++t) {
    const double rate = static_cast<double>(wrong[t]) / config.n;
    if (rate <= config.epsilon) ++within;
    if (wrong[t] == 0) ++perfect;
    total += wrong[t];
  }
  rep.frac_within_epsilon = static_cast<double>(within) / config.trials;
  rep.frac_perfect = static_cast<double>(perfect) / config.trials;
  rep.mean_error = static_cast<double>(total) / (static_cast<double>(config.n) * config.trials);
  return rep;
}

}  // namespace crowdlabel
