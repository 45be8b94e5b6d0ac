#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "crowdlabel/common.hpp"
#include "crowdlabel/model.hpp"

namespace crowdlabel {

inline constexpr double kGoldenTolerance = 1e-10;
inline constexpr double kMvSearchFloor = 1e-6;
inline constexpr double kExpertMargin = 0.01;

/// Golden-section minimizer for a unimodal f on [a, b]; returns the midpoint
/// of the final bracket, whose width is below tol.
inline double golden_section_min(const std::function<double(double)>& f, double a, double b,
                                 double tol = kGoldenTolerance) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

namespace detail {

/// log sum_l row_g[l]^(1-t) * row_h[l]^t for one worker. The boundary values
/// are the log row sums, computed rather than assumed to be zero.
inline double worker_log_bt(std::span<const double> row_g, std::span<const double> row_h,
                            double t) {
  const std::size_t k = row_g.size();
  if (t == 0.0 || t == 1.0) {
    double s = 0.0;
    for (std::size_t l = 0; l < k; ++l) s += (t == 0.0) ? row_g[l] : row_h[l];
    return std::log(s);
  }
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < k; ++l) {
    const double e = (1.0 - t) * std::log(row_g[l]) + t * std::log(row_h[l]);
    if (e > hi) hi = e;
  }
  double s = 0.0;
  for (std::size_t l = 0; l < k; ++l) {
    const double e = (1.0 - t) * std::log(row_g[l]) + t * std::log(row_h[l]);
    s += std::exp(e - hi);
  }
  return hi + std::log(s);
}

inline bool rows_identical(std::span<const double> a, std::span<const double> b) {
  for (std::size_t l = 0; l < a.size(); ++l)
    if (std::abs(a[l] - b[l]) > 1e-14) return false;
  return true;
}

inline void check_pair_labels(const WorkerPool& pool, int g, int h) {
  const int k = pool.label_count();
  if (g < 1 || g > k || h < 1 || h > k)
    throw ValidationError("pair labels must lie in 1..k");
  if (g == h) throw ValidationError("pair labels must differ");
}

}  // namespace detail

/// Pooled log moment-generating term: sum over workers of
/// log sum_l pi_gl^(1-t) * pi_hl^t, for t in [0, 1].
inline double log_bt(const WorkerPool& pool, int g, int h, double t) {
  detail::check_pair_labels(pool, g, h);
  if (!(t >= 0.0 && t <= 1.0))
    throw ValidationError("t must lie in [0,1], got " + std::to_string(t));
  double f = 0.0;
  for (int i = 0; i < pool.worker_count(); ++i) {
    auto rg = pool.worker(i).row(g);
    auto rh = pool.worker(i).row(h);
    if (t > 0.0 && t < 1.0)
      for (std::size_t l = 0; l < rg.size(); ++l)
        if (rg[l] <= 0.0 || rh[l] <= 0.0)
          throw DomainError("zero entry in rows " + std::to_string(g) + "/" +
                            std::to_string(h) + " of worker " + std::to_string(i + 1) +
                            "; smooth the pool before exponent computations");
    f += detail::worker_log_bt(rg, rh, t);
  }
  return f;
}

struct PairChernoff {
  int g = 0, h = 0;
  double t_star = 0.0;
  double value = 0.0;
};

/// Per-pair divergence: value = -min_t log_bt / m, with the minimizing t.
/// A pair no worker distinguishes has value 0 and t_star 0.5 by convention.
inline PairChernoff chernoff_pair(const WorkerPool& pool, int g, int h) {
  detail::check_pair_labels(pool, g, h);
  bool identical = true;
  for (int i = 0; identical && i < pool.worker_count(); ++i)
    identical = detail::rows_identical(pool.worker(i).row(g), pool.worker(i).row(h));
  if (identical) return {g, h, 0.5, 0.0};

  auto f = [&](double t) { return log_bt(pool, g, h, t); };
  const double t_star = golden_section_min(f, 0.0, 1.0);
  const double value = -f(t_star) / pool.worker_count();
  return {g, h, t_star, std::max(0.0, value)};
}

struct ExponentReport {
  double i_pi = 0.0;
  std::vector<PairChernoff> pairs;          // all g < h, lexicographic
  std::pair<int, int> argmin_pair{0, 0};    // first pair attaining the minimum
  double rho_m = 0.0;                       // smallest pool entry
  int expert_set_size = 0;                  // workers separating the argmin pair
};

/// Worst pair divergence over the pool, with per-pair detail and diagnostics.
inline ExponentReport minimax_exponent(const WorkerPool& pool) {
  const int k = pool.label_count();
  ExponentReport rep;
  rep.pairs.reserve(static_cast<std::size_t>(k) * (k - 1) / 2);
  for (int g = 1; g <= k; ++g)
    for (int h = g + 1; h <= k; ++h) rep.pairs.push_back(chernoff_pair(pool, g, h));

  rep.i_pi = rep.pairs.front().value;
  for (const auto& p : rep.pairs) rep.i_pi = std::min(rep.i_pi, p.value);
  for (const auto& p : rep.pairs)
    if (p.value <= rep.i_pi + 1e-12) {
      rep.argmin_pair = {p.g, p.h};
      break;
    }

  rep.rho_m = pool.min_entry();
  const auto [a, b] = rep.argmin_pair;
  for (int i = 0; i < pool.worker_count(); ++i) {
    const auto& w = pool.worker(i);
    if (w.at(a, a) >= (1.0 + kExpertMargin) * w.at(a, b) &&
        w.at(b, b) >= (1.0 + kExpertMargin) * w.at(b, a))
      ++rep.expert_set_size;
  }
  return rep;
}

/// Optimal-rule exponent of a one-coin pool: -avg log(2 sqrt(p(1-p))).
inline double one_coin_exponent(const OneCoinPool& pool) {
  double s = 0.0;
  for (double p : pool.accuracies()) {
    if (p <= 0.0 || p >= 1.0)
      throw DomainError("one-coin exponent needs p in (0,1), got " + std::to_string(p));
    s += std::log(2.0 * std::sqrt(p * (1.0 - p)));
  }
  return -s / pool.worker_count();
}

struct MvExponent {
  double t_star = 0.0;
  double value = 0.0;
};

/// Majority-vote exponent of a one-coin pool:
/// -min_{t in (0,1]} avg log(p t + (1-p)/t). The objective vanishes at t = 1,
/// so the value is never negative.
inline MvExponent majority_vote_exponent(const OneCoinPool& pool) {
  for (double p : pool.accuracies())
    if (p <= 0.0 || p >= 1.0)
      throw DomainError("majority-vote exponent needs p in (0,1), got " + std::to_string(p));
  const int m = pool.worker_count();
  auto phi = [&](double t) {
    double s = 0.0;
    for (double p : pool.accuracies()) s += std::log(p * t + (1.0 - p) / t);
    return s / m;
  };
  const double t_star = golden_section_min(phi, kMvSearchFloor, 1.0);
  return {t_star, std::max(0.0, -phi(t_star))};
}

/// Smallest m with exp(-m * i_pi) <= epsilon.
inline long long required_workers(double i_pi, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw ValidationError("target error must lie in (0,1], got " + std::to_string(epsilon));
  if (i_pi <= 0.0)
    throw DomainError("exponent must be positive; no worker count reaches the target");
  return static_cast<long long>(std::ceil(std::log(1.0 / epsilon) / i_pi));
}

}  // namespace crowdlabel
