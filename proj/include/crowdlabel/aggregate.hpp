#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "crowdlabel/common.hpp"
#include "crowdlabel/model.hpp"

namespace crowdlabel {

/// A pool estimated from data rather than known exactly; same invariants.
using EstimatedPool = WorkerPool;

/// Per-item distribution over the k labels; rows sum to 1 within 1e-9.
class PosteriorMatrix {
 public:
  PosteriorMatrix(int n, int k, std::vector<double> probs)
      : n_(n), k_(k), probs_(std::move(probs)) {
    if (n_ < 1 || k_ < 2) throw ValidationError("posterior needs n >= 1 and k >= 2");
    if (probs_.size() != static_cast<std::size_t>(n_) * k_)
      throw ValidationError("posterior needs n*k entries, got " + std::to_string(probs_.size()));
    for (int j = 0; j < n_; ++j) {
      double sum = 0.0;
      for (int g = 0; g < k_; ++g) {
        const double v = probs_[static_cast<std::size_t>(j) * k_ + g];
        if (!(v >= 0.0 && v <= 1.0))
          throw ValidationError("posterior entry out of [0,1] at item " + std::to_string(j + 1));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("posterior row " + std::to_string(j + 1) + " sums to " +
                              std::to_string(sum) + ", expected 1");
    }
  }

  /// Rows putting winner_mass on each given label, the rest spread evenly.
  static PosteriorMatrix from_labels(const GroundTruth& y, int k, double winner_mass = 1.0) {
    if (!(winner_mass > 0.0 && winner_mass <= 1.0))
      throw ValidationError("winner mass must lie in (0,1]");
    const int n = y.item_count();
    const double rest = (1.0 - winner_mass) / (k - 1);
    std::vector<double> probs(static_cast<std::size_t>(n) * k, rest);
    for (int j = 0; j < n; ++j) {
      if (y.label(j) > k) throw ValidationError("label exceeds posterior label count");
      probs[static_cast<std::size_t>(j) * k + (y.label(j) - 1)] = winner_mass;
    }
    return PosteriorMatrix(n, k, std::move(probs));
  }

  int item_count() const { return n_; }
  int label_count() const { return k_; }
  double at(int j, int g) const {  // 0-based item, 1-based label
    return probs_[static_cast<std::size_t>(j) * k_ + (g - 1)];
  }

  /// Argmax label per item; ties resolve to the smallest label.
  GroundTruth hard_labels() const {
    std::vector<int> y(n_);
    for (int j = 0; j < n_; ++j) {
      int best = 1;
      for (int g = 2; g <= k_; ++g)
        if (at(j, g) > at(j, best)) best = g;
      y[j] = best;
    }
    return GroundTruth(std::move(y));
  }

 private:
  int n_, k_;
  std::vector<double> probs_;
};

namespace detail {

inline void require_complete(const LabelMatrix& labels, const char* op) {
  if (labels.has_missing())
    throw ValidationError(std::string(op) + " needs a complete matrix; remap_missing first");
}

/// Worker-major table of log pool entries; rejects nonpositive entries.
inline std::vector<double> log_pool_table(const WorkerPool& pool) {
  const int m = pool.worker_count();
  const int k = pool.label_count();
  std::vector<double> t(static_cast<std::size_t>(m) * k * k);
  for (int i = 0; i < m; ++i)
    for (int g = 1; g <= k; ++g)
      for (int h = 1; h <= k; ++h) {
        const double v = pool.worker(i).at(g, h);
        if (v <= 0.0)
          throw DomainError("zero entry in worker " + std::to_string(i + 1) +
                            "; smooth the pool before likelihood scoring");
        t[(static_cast<std::size_t>(i) * k + (g - 1)) * k + (h - 1)] = std::log(v);
      }
  return t;
}

/// Argmax over g of sum_i log pi_i[g][x_ij]; ties resolve to the smallest g.
inline GroundTruth likelihood_argmax(const LabelMatrix& labels, const WorkerPool& pool) {
  require_complete(labels, "likelihood scoring");
  if (labels.label_count() > pool.label_count())
    throw ValidationError("labels use more categories than the pool defines");
  const int m = labels.worker_count();
  if (m != pool.worker_count())
    throw ValidationError("label matrix and pool disagree on worker count");
  const int k = pool.label_count();
  const int n = labels.item_count();
  const std::vector<double> logp = log_pool_table(pool);

  std::vector<int> y(n);
  std::vector<double> score(k);
  for (int j = 0; j < n; ++j) {
    std::fill(score.begin(), score.end(), 0.0);
    for (int i = 0; i < m; ++i) {
      const int x = labels.at(i, j);
      const double* wt = logp.data() + static_cast<std::size_t>(i) * k * k;
      for (int g = 0; g < k; ++g) score[g] += wt[g * k + (x - 1)];
    }
    int best = 0;
    for (int g = 1; g < k; ++g)
      if (score[g] > score[best]) best = g;
    y[j] = best + 1;
  }
  return GroundTruth(std::move(y));
}

}  // namespace detail

/// Plurality label per item; ties resolve to the smallest label.
inline GroundTruth majority_vote(const LabelMatrix& labels) {
  detail::require_complete(labels, "majority vote");
  const int m = labels.worker_count();
  const int n = labels.item_count();
  const int k = labels.label_count();
  std::vector<int> y(n);
  std::vector<int> count(k);
  for (int j = 0; j < n; ++j) {
    std::fill(count.begin(), count.end(), 0);
    for (int i = 0; i < m; ++i) ++count[labels.at(i, j) - 1];
    int best = 0;
    for (int g = 1; g < k; ++g)
      if (count[g] > count[best]) best = g;
    y[j] = best + 1;
  }
  return GroundTruth(std::move(y));
}

/// Likelihood decision under the true pool.
inline GroundTruth oracle_mle(const LabelMatrix& labels, const WorkerPool& pool) {
  return detail::likelihood_argmax(labels, pool);
}

/// Likelihood decision under an estimated pool.
inline GroundTruth plugin_mle(const LabelMatrix& labels, const EstimatedPool& estimate) {
  return detail::likelihood_argmax(labels, estimate);
}

/// Per-worker k x k label counts, row-major.
using CountGrid = std::vector<double>;

/// Additive smoothing: pi_hat[g][h] = (c[g][h] + lambda) / (sum_h c[g][h] + k lambda).
inline EstimatedPool smooth_confusion(const std::vector<CountGrid>& counts, int k,
                                      double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("smoothing needs lambda > 0");
  if (counts.empty()) throw ValidationError("smoothing needs at least one worker");
  std::vector<ConfusionMatrix> ws;
  ws.reserve(counts.size());
  for (const auto& c : counts) {
    if (c.size() != static_cast<std::size_t>(k) * k)
      throw ValidationError("count grid must hold k*k entries");
    std::vector<double> e(static_cast<std::size_t>(k) * k);
    for (int g = 0; g < k; ++g) {
      double tot = 0.0;
      for (int h = 0; h < k; ++h) {
        if (c[static_cast<std::size_t>(g) * k + h] < 0.0)
          throw ValidationError("counts must be nonnegative");
        tot += c[static_cast<std::size_t>(g) * k + h];
      }
      const double den = tot + k * lambda;
      for (int h = 0; h < k; ++h)
        e[static_cast<std::size_t>(g) * k + h] =
            (c[static_cast<std::size_t>(g) * k + h] + lambda) / den;
    }
    ws.emplace_back(k, std::move(e));
  }
  return EstimatedPool(std::move(ws));
}

/// Maximization step: soft counts under the posterior, then smoothing.
inline EstimatedPool em_m_step(const LabelMatrix& labels, const PosteriorMatrix& posterior,
                               double lambda) {
  detail::require_complete(labels, "m-step");
  if (posterior.item_count() != labels.item_count())
    throw ValidationError("posterior and labels disagree on item count");
  if (posterior.label_count() != labels.label_count())
    throw ValidationError("posterior and labels disagree on label count");
  const int m = labels.worker_count();
  const int n = labels.item_count();
  const int k = labels.label_count();
  std::vector<CountGrid> counts(m, CountGrid(static_cast<std::size_t>(k) * k, 0.0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const int x = labels.at(i, j);
      for (int g = 1; g <= k; ++g)
        counts[i][static_cast<std::size_t>(g - 1) * k + (x - 1)] += posterior.at(j, g);
    }
  return smooth_confusion(counts, k, lambda);
}

namespace detail {

inline std::vector<double> uniform_prior(int k) {
  return std::vector<double>(k, 1.0 / k);
}

inline void check_prior(const std::vector<double>& prior, int k) {
  if (prior.size() != static_cast<std::size_t>(k))
    throw ValidationError("prior must hold k entries");
  double sum = 0.0;
  for (double v : prior) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("prior entry out of [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("prior sums to " + std::to_string(sum) + ", expected 1");
}

struct EStep {
  PosteriorMatrix posterior;
  double loglik;  // sum over items of the log marginal of the column
};

inline EStep e_step_with_loglik(const LabelMatrix& labels, const EstimatedPool& estimate,
                                const std::vector<double>& prior) {
  require_complete(labels, "e-step");
  if (labels.label_count() > estimate.label_count())
    throw ValidationError("labels use more categories than the estimate defines");
  if (labels.worker_count() != estimate.worker_count())
    throw ValidationError("label matrix and estimate disagree on worker count");
  const int m = labels.worker_count();
  const int n = labels.item_count();
  const int k = estimate.label_count();
  check_prior(prior, k);
  const std::vector<double> logp = log_pool_table(estimate);

  std::vector<double> logprior(k);
  for (int g = 0; g < k; ++g)
    logprior[g] = prior[g] > 0.0 ? std::log(prior[g]) : -std::numeric_limits<double>::infinity();

  std::vector<double> probs(static_cast<std::size_t>(n) * k);
  std::vector<double> s(k);
  double loglik = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int g = 0; g < k; ++g) s[g] = logprior[g];
    for (int i = 0; i < m; ++i) {
      const int x = labels.at(i, j);
      const double* wt = logp.data() + static_cast<std::size_t>(i) * k * k;
      for (int g = 0; g < k; ++g) s[g] += wt[g * k + (x - 1)];
    }
    double hi = s[0];
    for (int g = 1; g < k; ++g) hi = std::max(hi, s[g]);
    double tot = 0.0;
    for (int g = 0; g < k; ++g) tot += std::exp(s[g] - hi);
    for (int g = 0; g < k; ++g)
      probs[static_cast<std::size_t>(j) * k + g] = std::exp(s[g] - hi) / tot;
    loglik += hi + std::log(tot);
  }
  return {PosteriorMatrix(n, k, std::move(probs)), loglik};
}

inline double log_entry_sum(const EstimatedPool& pool) {
  double s = 0.0;
  for (const auto& w : pool.workers())
    for (double v : w.entries()) s += std::log(v);
  return s;
}

}  // namespace detail

/// Expectation step: per-item posterior over labels, in the log domain.
inline PosteriorMatrix em_e_step(const LabelMatrix& labels, const EstimatedPool& estimate,
                                 const std::vector<double>& prior) {
  return detail::e_step_with_loglik(labels, estimate, prior).posterior;
}

inline PosteriorMatrix em_e_step(const LabelMatrix& labels, const EstimatedPool& estimate) {
  return em_e_step(labels, estimate, detail::uniform_prior(estimate.label_count()));
}

struct EmResult {
  EstimatedPool pool;
  PosteriorMatrix posterior;
  GroundTruth labels;
  int iters = 0;
  /// Penalized mean log-likelihood after each iteration; non-decreasing.
  std::vector<double> objective_trace;
};

/// Alternates m-step and e-step from the given initial posterior until the
/// penalized objective gains less than tol or max_iters is reached.
inline EmResult em_run(const LabelMatrix& labels, const PosteriorMatrix& init,
                       int max_iters = 100, double tol = 1e-8, double lambda = 0.5,
                       std::vector<double> prior = {}) {
  if (max_iters < 1) throw ValidationError("em needs max_iters >= 1");
  if (!(tol >= 0.0)) throw ValidationError("em needs tol >= 0");
  const int k = labels.label_count();
  if (prior.empty()) prior = detail::uniform_prior(k);

  PosteriorMatrix post = init;
  EstimatedPool pool = em_m_step(labels, post, lambda);
  std::vector<double> trace;
  int iters = 0;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iters; ++it) {
    if (it > 1) pool = em_m_step(labels, post, lambda);
    auto es = detail::e_step_with_loglik(labels, pool, prior);
    post = std::move(es.posterior);
    const double obj =
        (es.loglik + lambda * detail::log_entry_sum(pool)) / labels.item_count();
    trace.push_back(obj);
    iters = it;
    if (it > 1 && obj - prev < tol) break;
    prev = obj;
  }
  GroundTruth hard = post.hard_labels();
  return {std::move(pool), std::move(post), std::move(hard), iters, std::move(trace)};
}

struct OneCoinEstimate {
  std::vector<double> p_hat;
  double gamma_hat = 0.0;
};

/// Moment estimator of one-coin accuracies from a binary matrix. Uses the
/// majority vote as the reference split; errors out when that split is too
/// balanced for the moment inversion to be stable.
inline OneCoinEstimate one_coin_estimate(const LabelMatrix& labels) {
  detail::require_complete(labels, "one-coin estimation");
  if (labels.label_count() != 2)
    throw ValidationError("one-coin estimation needs k = 2");
  const int m = labels.worker_count();
  const int n = labels.item_count();

  const GroundTruth mv = majority_vote(labels);
  long long twos = 0;
  for (int j = 0; j < n; ++j)
    if (mv.label(j) == 2) ++twos;
  const double gamma = static_cast<double>(twos) / n;
  if (std::abs(2.0 * gamma - 1.0) < 0.1)
    throw DomainError("reference split too balanced (|2*gamma-1| < 0.1); "
                      "one-coin moments cannot be inverted");

  const double lo = 1.0 / (2.0 * n);
  const double hi = 1.0 - lo;
  std::vector<double> p(m);
  for (int i = 0; i < m; ++i) {
    long long c = 0;
    for (int j = 0; j < n; ++j)
      if (labels.at(i, j) == 2) ++c;
    const double q = static_cast<double>(c) / n;
    const double raw = (q - (1.0 - gamma)) / (2.0 * gamma - 1.0);
    p[i] = std::min(hi, std::max(lo, raw));
  }

  double bias = 0.0;
  for (double v : p) bias += 2.0 * v - 1.0;
  if (bias / m < 0.0)
    for (double& v : p) v = 1.0 - v;
  return {std::move(p), gamma};
}

}  // namespace crowdlabel
