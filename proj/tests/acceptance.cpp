// Acceptance checks for the library: slope targets, exact bounds, convexity,
// estimator quality, EM ascent, sample-size planning, Monte Carlo vs exact
// enumeration, and byte-level determinism. Each check prints one PASS/FAIL
// line; the exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "crowdlabel/aggregate.hpp"
#include "crowdlabel/exponent.hpp"
#include "crowdlabel/harness.hpp"
#include "crowdlabel/io.hpp"
#include "crowdlabel/model.hpp"
#include "crowdlabel/rng.hpp"
#include "support/test_support.hpp"

using namespace crowdlabel;

namespace {

constexpr std::uint64_t kSlopeSeed = 49;
constexpr std::uint64_t kInferioritySeed = 303;
constexpr std::uint64_t kPluginSeed = 3;
constexpr std::uint64_t kPlanSeed = 808;
constexpr std::uint64_t kCrossCheckSeed = 42;

struct Outcome {
  std::string name;
  bool pass = false;
  std::string detail;
  std::string canon;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return io::format_double(v); }

/// Criteria 1 and 2: on a homogeneous one-coin pool the fitted slope of
/// log error against m matches the predicted exponent within 15%, for the
/// likelihood rule and for majority vote (whose exponent coincides here).
void slope_criteria(int threads, std::vector<Outcome>& out) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.pool.kind = PoolSpec::Kind::kOneCoinConst;
  cfg.pool.p = 0.8;
  cfg.m_grid = {5, 10, 15, 20, 25};
  cfg.n = 20000;
  cfg.trials = 1;
  cfg.rules = {Rule::kOracleMle, Rule::kMajorityVote};
  cfg.seed = kSlopeSeed;
  const ExperimentResult res = run_experiment(cfg, threads);
  const double elapsed = seconds_since(t0);
  const std::string csv = io::experiment_result_to_csv(res);

  const double target = -std::log(2.0 * std::sqrt(0.8 * 0.2));
  for (int c = 0; c < 2; ++c) {
    const RuleSeries& s = res.series[c];
    Outcome o;
    o.name = c == 0 ? "likelihood-slope" : "majority-slope";
    o.canon = csv;
    if (!s.slope_defined) {
      o.pass = false;
      o.detail = "no slope: fewer than 3 grid points reached 10 errors";
    } else {
      const double lo = -1.15 * target, hi = -0.85 * target;
      const bool in_window = s.fitted_slope >= lo && s.fitted_slope <= hi;
      const bool in_budget = elapsed <= 120.0;
      o.pass = in_window && in_budget;
      std::ostringstream d;
      d << "slope " << fmt(s.fitted_slope) << " vs -" << fmt(target) << " +-15% ["
        << fmt(lo) << ", " << fmt(hi) << "], " << fmt(elapsed) << "s";
      o.detail = d.str();
    }
    out.push_back(std::move(o));
  }
}

/// Criterion 3: with accuracies alternating between 0.6 and 0.95, the grid
/// value of the majority-vote exponent sits strictly below the likelihood
/// exponent, and the simulated majority-vote error is worse at every m where
/// both rules accumulated at least 10 mistakes.
Outcome inferiority_criterion(int threads) {
  ExperimentConfig cfg;
  cfg.pool.kind = PoolSpec::Kind::kOneCoinCycle;
  cfg.pool.values = {0.6, 0.95};
  cfg.m_grid = {6, 10, 14, 18};
  cfg.n = 20000;
  cfg.trials = 5;
  cfg.rules = {Rule::kMajorityVote, Rule::kOracleMle};
  cfg.seed = kInferioritySeed;
  const ExperimentResult res = run_experiment(cfg, threads);

  const std::vector<double> acc = cfg.pool.accuracies(cfg.m_grid.front(), cfg.seed);
  const double j_grid = test_support::grid_mv_exponent(acc).value;
  double i_closed = 0.0;
  for (double p : acc) i_closed -= std::log(2.0 * std::sqrt(p * (1.0 - p)));
  i_closed /= static_cast<double>(acc.size());
  const double gap = i_closed - j_grid;

  const auto& mv = res.series[0].points;
  const auto& ml = res.series[1].points;
  int compared = 0;
  bool ordered = true;
  for (std::size_t i = 0; i < mv.size(); ++i) {
    if (mv[i].errors < kMinErrorsForFit || ml[i].errors < kMinErrorsForFit) continue;
    ++compared;
    if (!(mv[i].mean_error > ml[i].mean_error)) ordered = false;
  }

  Outcome o;
  o.name = "majority-strictly-worse";
  o.canon = io::experiment_result_to_csv(res) + "gap," + fmt(gap) + "\n";
  o.pass = gap > 0.01 && compared >= 2 && ordered;
  std::ostringstream d;
  d << "exponent gap " << fmt(gap) << " nats, vote worse at " << compared
    << " comparable grid points: " << (ordered ? "yes" : "no");
  o.detail = d.str();
  return o;
}

/// Criterion 4: the exact likelihood-rule error never exceeds
/// (k-1)exp(-m I) on random strictly positive pools.
Outcome bound_criterion(int) {
  std::mt19937_64 rng(20240704ull);
  Outcome o;
  o.name = "exact-error-bound";
  o.pass = true;
  double worst = 0.0;
  std::ostringstream canon;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 2);
    const int m = 1 + static_cast<int>(rng() % 10);
    const WorkerPool pool = test_support::random_pool(rng, m, k);
    const double i_pi = minimax_exponent(pool).i_pi;
    const double bound = (k - 1) * std::exp(-m * i_pi);
    const ColumnRule rule = ColumnRule::likelihood(pool);
    for (int g = 1; g <= k; ++g) {
      const double e = exact_error(pool, rule, g);
      if (e > bound) o.pass = false;
      if (bound > 0.0) worst = std::max(worst, e / bound);
      canon << trial << "," << g << "," << fmt(e) << "," << fmt(bound) << "\n";
    }
  }
  o.canon = canon.str();
  std::ostringstream d;
  d << "50 random pools, every label: exact error within the bound, worst ratio "
    << fmt(worst);
  o.detail = d.str();
  return o;
}

/// Criterion 5: the pair objective is convex with zero boundary values, and
/// whenever the divergence is nontrivial the minimizer is interior and agrees
/// with an independent dense-grid search.
Outcome convexity_criterion(int) {
  std::mt19937_64 rng(987654321ull);
  Outcome o;
  o.name = "pair-objective-convexity";
  o.pass = true;
  std::ostringstream canon;
  std::string why;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 3);
    const int m = 1 + static_cast<int>(rng() % 6);
    const WorkerPool pool = test_support::random_pool(rng, m, k);
    for (int g = 1; g <= k; ++g) {
      for (int h = g + 1; h <= k; ++h) {
        std::vector<double> f(101);
        for (int i = 0; i <= 100; ++i) f[i] = log_bt(pool, g, h, i / 100.0);
        if (std::abs(f[0]) > 1e-12 || std::abs(f[100]) > 1e-12) {
          o.pass = false;
          why = "boundary value not zero";
        }
        for (int i = 1; i < 100; ++i)
          if (f[i + 1] - 2.0 * f[i] + f[i - 1] < -1e-9) {
            o.pass = false;
            why = "second difference negative";
          }
        const PairChernoff pc = chernoff_pair(pool, g, h);
        if (pc.value > 1e-8) {
          if (!(pc.t_star > 0.0 && pc.t_star < 1.0)) {
            o.pass = false;
            why = "minimizer not interior";
          }
          const auto ref = test_support::grid_chernoff(pool, g, h);
          if (std::abs(pc.value - ref.value) > 1e-6) {
            o.pass = false;
            why = "grid oracle disagrees";
          }
        }
        canon << trial << "," << g << "," << h << "," << fmt(pc.t_star) << ","
              << fmt(pc.value) << "\n";
      }
    }
  }
  o.canon = canon.str();
  o.detail = o.pass ? "100 random pools: convex, zero boundaries, interior minima match the grid"
                    : why;
  return o;
}

struct PluginData {
  std::vector<double> acc;
  WorkerPool pool;
  GroundTruth truth;
  LabelMatrix labels;
};

PluginData plugin_data() {
  PoolSpec spec;
  spec.kind = PoolSpec::Kind::kOneCoinUniform;
  spec.low = 0.65;
  spec.high = 0.9;
  const int m = 20;
  const long long n = 10000;
  std::vector<double> acc = spec.accuracies(m, kPluginSeed);
  WorkerPool pool = spec.prefix(m, kPluginSeed);
  GroundTruth truth =
      detail::sample_truth(2, 0.3, derive_seed(kPluginSeed, kSaltTruth, m, 0), n);
  LabelMatrix labels = generate_labels(pool, truth, derive_seed(kPluginSeed, kSaltLabels, m, 0));
  return {std::move(acc), std::move(pool), std::move(truth), std::move(labels)};
}

/// Criterion 6: estimating one-coin accuracies from the labels alone and
/// plugging them into the likelihood rule matches the true-pool rule within
/// two standard errors, and every accuracy is recovered within 0.05.
Outcome plugin_criterion(const PluginData& d) {
  const double n = static_cast<double>(d.truth.item_count());
  const GroundTruth yo = oracle_mle(d.labels, d.pool);
  const double err_o = misclassification_rate(yo, d.truth);

  const OneCoinEstimate est = one_coin_estimate(d.labels);
  const GroundTruth yp = plugin_mle(d.labels, OneCoinPool(est.p_hat).to_pool());
  const double err_p = misclassification_rate(yp, d.truth);

  double dev = 0.0;
  for (std::size_t i = 0; i < d.acc.size(); ++i)
    dev = std::max(dev, std::abs(est.p_hat[i] - d.acc[i]));
  const double se = std::sqrt(err_o * (1.0 - err_o) / n);

  Outcome o;
  o.name = "plugin-matches-true-pool";
  o.pass = std::abs(err_p - err_o) <= 2.0 * se && dev <= 0.05;
  std::ostringstream dd;
  dd << "errors " << fmt(err_p) << " vs " << fmt(err_o) << " (2se " << fmt(2.0 * se)
     << "), max accuracy miss " << fmt(dev);
  o.detail = dd.str();
  std::ostringstream canon;
  canon << fmt(err_o) << "," << fmt(err_p) << "," << fmt(est.gamma_hat);
  for (double p : est.p_hat) canon << "," << fmt(p);
  canon << "\n";
  o.canon = canon.str();
  return o;
}

/// Criterion 7: EM from a majority-vote start ascends its objective at every
/// iteration and ends no worse than the vote itself.
Outcome em_criterion(const PluginData& d) {
  const GroundTruth mv = majority_vote(d.labels);
  const double err_mv = misclassification_rate(mv, d.truth);
  const auto init = PosteriorMatrix::from_labels(mv, d.labels.label_count(), 0.9);
  const EmResult em = em_run(d.labels, init);
  const double err_em = misclassification_rate(em.labels, d.truth);

  bool ascent = true;
  for (std::size_t i = 1; i < em.objective_trace.size(); ++i)
    if (em.objective_trace[i] - em.objective_trace[i - 1] < -1e-9) ascent = false;

  Outcome o;
  o.name = "em-ascent";
  o.pass = ascent && err_em <= err_mv;
  std::ostringstream dd;
  dd << em.iters << " iterations, objective " << (ascent ? "non-decreasing" : "DECREASED")
     << ", error " << fmt(err_em) << " vs vote " << fmt(err_mv);
  o.detail = dd.str();
  std::ostringstream canon;
  canon << fmt(err_em) << "," << fmt(err_mv);
  for (double v : em.objective_trace) canon << "," << fmt(v);
  canon << "\n";
  o.canon = canon.str();
  return o;
}

/// Criterion 8: the planned worker count for per-item accuracy 1/n, padded by
/// 1.3x, achieves perfect recovery in at least 90% of trials.
Outcome plan_criterion(int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  SampleSizeConfig cfg;
  cfg.pool.kind = PoolSpec::Kind::kOneCoinConst;
  cfg.pool.p = 0.8;
  cfg.n = 1000;
  cfg.epsilon = 0.001;
  cfg.trials = 200;
  cfg.seed = kPlanSeed;
  const SampleSizeReport rep = verify_sample_size(cfg, threads);
  const double elapsed = seconds_since(t0);

  Outcome o;
  o.name = "sample-size-plan";
  o.canon = io::sample_size_report_to_json(rep, cfg).dump(2) + "\n";
  o.pass = rep.m_star == 31 && rep.m_sim == 41 && rep.perfect_applicable &&
           rep.frac_perfect >= 0.9 && elapsed <= 300.0;
  std::ostringstream d;
  d << "m* " << rep.m_star << ", simulated m " << rep.m_sim << ", perfect in "
    << fmt(100.0 * rep.frac_perfect) << "% of trials, " << fmt(elapsed) << "s";
  o.detail = d.str();
  return o;
}

/// Criterion 9: Monte Carlo error agrees with exact enumeration within four
/// standard errors for every per-column rule on a fixed m = 8 binary pool.
Outcome crosscheck_criterion(int threads) {
  auto cm = [](double a, double b) {
    return ConfusionMatrix(2, {a, 1.0 - a, 1.0 - b, b});
  };
  const WorkerPool pool({cm(0.85, 0.80), cm(0.70, 0.75), cm(0.90, 0.60), cm(0.65, 0.70),
                         cm(0.80, 0.85), cm(0.75, 0.65), cm(0.60, 0.90), cm(0.70, 0.70)});
  const WorkerPool estimate({cm(0.82, 0.84), cm(0.73, 0.71), cm(0.87, 0.64), cm(0.68, 0.66),
                             cm(0.77, 0.88), cm(0.78, 0.61), cm(0.63, 0.86), cm(0.67, 0.74)});
  const int m = pool.worker_count();
  const long long n = 4000;
  const int trials = 10;

  struct Entry {
    const char* name;
    ColumnRule rule;
  };
  std::vector<Entry> entries;
  entries.push_back({"vote", ColumnRule::majority_vote(m, 2)});
  entries.push_back({"likelihood", ColumnRule::likelihood(pool)});
  entries.push_back({"plugin", ColumnRule::likelihood(estimate)});

  std::vector<std::vector<long long>> wrong(trials, std::vector<long long>(entries.size(), 0));
  detail::parallel_trials(trials, threads, [&](int t) {
    const GroundTruth truth =
        detail::sample_truth(2, 0.5, derive_seed(kCrossCheckSeed, kSaltTruth, m, t), n);
    const LabelMatrix labels =
        generate_labels(pool, truth, derive_seed(kCrossCheckSeed, kSaltLabels, m, t));
    std::vector<GroundTruth> decided;
    decided.push_back(majority_vote(labels));
    decided.push_back(oracle_mle(labels, pool));
    decided.push_back(plugin_mle(labels, estimate));
    for (std::size_t r = 0; r < decided.size(); ++r) {
      long long w = 0;
      for (int j = 0; j < truth.item_count(); ++j)
        if (decided[r].label(j) != truth.label(j)) ++w;
      wrong[t][r] = w;
    }
  });

  Outcome o;
  o.name = "exact-vs-monte-carlo";
  o.pass = true;
  std::ostringstream canon, d;
  const double draws = static_cast<double>(n) * trials;
  double worst = 0.0;
  for (std::size_t r = 0; r < entries.size(); ++r) {
    const double exact =
        0.5 * (exact_error(pool, entries[r].rule, 1) + exact_error(pool, entries[r].rule, 2));
    long long total = 0;
    for (int t = 0; t < trials; ++t) total += wrong[t][r];
    const double mc = static_cast<double>(total) / draws;
    const double se = std::sqrt(exact * (1.0 - exact) / draws);
    const double sds = se > 0.0 ? std::abs(mc - exact) / se : 0.0;
    worst = std::max(worst, sds);
    if (sds > 4.0) o.pass = false;
    canon << entries[r].name << "," << fmt(mc) << "," << fmt(exact) << "\n";
  }
  o.canon = canon.str();
  d << "three rules on one pool, largest gap " << fmt(worst) << " standard errors";
  o.detail = d.str();
  return o;
}

std::vector<Outcome> run_all(int threads) {
  std::vector<Outcome> out;
  slope_criteria(threads, out);
  out.push_back(inferiority_criterion(threads));
  out.push_back(bound_criterion(threads));
  out.push_back(convexity_criterion(threads));
  const PluginData d = plugin_data();
  out.push_back(plugin_criterion(d));
  out.push_back(em_criterion(d));
  out.push_back(plan_criterion(threads));
  out.push_back(crosscheck_criterion(threads));
  return out;
}

}  // namespace

int main() {
  const std::vector<Outcome> first = run_all(1);
  int fails = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (!first[i].pass) ++fails;
    std::printf("[%s] %2zu %s: %s\n", first[i].pass ? "PASS" : "FAIL", i + 1,
                first[i].name.c_str(), first[i].detail.c_str());
  }

  const std::vector<Outcome> second = run_all(2);
  bool identical = second.size() == first.size();
  std::string mismatch;
  for (std::size_t i = 0; identical && i < first.size(); ++i)
    if (second[i].canon != first[i].canon) {
      identical = false;
      mismatch = first[i].name;
    }
  if (!identical) ++fails;
  std::printf("[%s] 10 determinism: %s\n", identical ? "PASS" : "FAIL",
              identical ? "all serialized outputs byte-identical on rerun with 2 threads"
                        : ("rerun diverged at " + mismatch).c_str());

  std::printf("%d/10 checks passed\n", 10 - fails);
  return fails;
}
