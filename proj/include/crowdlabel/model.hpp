#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crowdlabel/common.hpp"
#include "crowdlabel/rng.hpp"

namespace crowdlabel {

inline constexpr double kRowSumTolerance = 1e-12;

/// One worker's k x k row-stochastic ability matrix. Row g is the
/// distribution of the reported label when the true label is g.
/// Labels are 1-based everywhere; 0 is reserved for "missing".
class ConfusionMatrix {
 public:
  /// entries: row-major k*k probabilities.
  ConfusionMatrix(int k, std::vector<double> entries)
      : k_(k), entries_(std::move(entries)) {
    if (k_ < 2)
      throw ValidationError("confusion matrix needs k >= 2, got k=" + std::to_string(k_));
    if (entries_.size() != static_cast<std::size_t>(k_) * k_)
      throw ValidationError("confusion matrix needs k*k entries, got " +
                            std::to_string(entries_.size()));
    for (int g = 0; g < k_; ++g) {
      double sum = 0.0;
      for (int h = 0; h < k_; ++h) {
        const double v = entries_[static_cast<std::size_t>(g) * k_ + h];
        if (!(v >= 0.0 && v <= 1.0))
          throw ValidationError("confusion matrix entry out of [0,1] at row " +
                                std::to_string(g + 1));
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw ValidationError("confusion matrix row " + std::to_string(g + 1) +
                              " sums to " + std::to_string(sum) + ", expected 1");
    }
  }

  /// 2x2 matrix of a worker that is correct with probability p on both labels.
  static ConfusionMatrix one_coin(double p) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("one-coin accuracy must lie in [0,1], got " + std::to_string(p));
    return ConfusionMatrix(2, {p, 1.0 - p, 1.0 - p, p});
  }

  int label_count() const { return k_; }

  /// Entry for true label g, reported label h (both 1-based).
  double at(int g, int h) const {
    return entries_[static_cast<std::size_t>(g - 1) * k_ + (h - 1)];
  }

  /// Row of true label g (1-based).
  std::span<const double> row(int g) const {
    return {entries_.data() + static_cast<std::size_t>(g - 1) * k_,
            static_cast<std::size_t>(k_)};
  }

  double min_entry() const { return *std::min_element(entries_.begin(), entries_.end()); }

  const std::vector<double>& entries() const { return entries_; }

 private:
  int k_;
  std::vector<double> entries_;
};

/// The m workers assigned to every item, all over the same label set.
class WorkerPool {
 public:
  explicit WorkerPool(std::vector<ConfusionMatrix> workers) : workers_(std::move(workers)) {
    if (workers_.empty()) throw ValidationError("worker pool must hold at least one worker");
    const int k = workers_.front().label_count();
    for (const auto& w : workers_)
      if (w.label_count() != k)
        throw ValidationError("all workers in a pool must share one label count");
  }

  int worker_count() const { return static_cast<int>(workers_.size()); }
  int label_count() const { return workers_.front().label_count(); }
  const ConfusionMatrix& worker(int i) const { return workers_[i]; }  // 0-based
  const std::vector<ConfusionMatrix>& workers() const { return workers_; }

  /// Pool of the first m workers.
  WorkerPool prefix(int m) const {
    if (m < 1 || m > worker_count())
      throw ValidationError("pool prefix length out of range: " + std::to_string(m));
    return WorkerPool({workers_.begin(), workers_.begin() + m});
  }

  double min_entry() const {
    double v = 1.0;
    for (const auto& w : workers_) v = std::min(v, w.min_entry());
    return v;
  }

  bool strictly_positive() const { return min_entry() > 0.0; }

 private:
  std::vector<ConfusionMatrix> workers_;
};

/// Binary pool where worker i is correct with probability p_i on both labels.
class OneCoinPool {
 public:
  explicit OneCoinPool(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw ValidationError("one-coin pool must hold at least one worker");
    for (double v : p_)
      if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError("one-coin accuracy must lie in [0,1], got " + std::to_string(v));
  }

  int worker_count() const { return static_cast<int>(p_.size()); }
  const std::vector<double>& accuracies() const { return p_; }

  OneCoinPool prefix(int m) const {
    if (m < 1 || m > worker_count())
      throw ValidationError("pool prefix length out of range: " + std::to_string(m));
    return OneCoinPool({p_.begin(), p_.begin() + m});
  }

  WorkerPool to_pool() const {
    std::vector<ConfusionMatrix> ws;
    ws.reserve(p_.size());
    for (double v : p_) ws.push_back(ConfusionMatrix::one_coin(v));
    return WorkerPool(std::move(ws));
  }

 private:
  std::vector<double> p_;
};

/// True (or decided) labels of the n items, 1-based.
class GroundTruth {
 public:
  explicit GroundTruth(std::vector<int> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw ValidationError("ground truth must hold at least one item");
    for (int y : labels_)
      if (y < 1) throw ValidationError("labels are 1-based; got " + std::to_string(y));
  }

  int item_count() const { return static_cast<int>(labels_.size()); }
  int label(int j) const { return labels_[j]; }  // 0-based item
  const std::vector<int>& labels() const { return labels_; }

 private:
  std::vector<int> labels_;
};

/// Reported labels: worker-major m x n grid, entry in {1..k} or 0 = missing.
class LabelMatrix {
 public:
  LabelMatrix(int m, int n, int k, std::vector<std::int32_t> entries)
      : m_(m), n_(n), k_(k), entries_(std::move(entries)) {
    if (m_ < 1 || n_ < 1) throw ValidationError("label matrix needs m >= 1 and n >= 1");
    if (k_ < 2) throw ValidationError("label matrix needs k >= 2");
    if (entries_.size() != static_cast<std::size_t>(m_) * n_)
      throw ValidationError("label matrix needs m*n entries, got " +
                            std::to_string(entries_.size()));
    for (std::int32_t v : entries_)
      if (v < 0 || v > k_)
        throw ValidationError("label entry must lie in {0..k}, got " + std::to_string(v));
  }

  int worker_count() const { return m_; }
  int item_count() const { return n_; }
  int label_count() const { return k_; }
  std::int32_t at(int i, int j) const {  // 0-based worker, item
    return entries_[static_cast<std::size_t>(i) * n_ + j];
  }
  const std::vector<std::int32_t>& entries() const { return entries_; }

  bool has_missing() const {
    return std::find(entries_.begin(), entries_.end(), 0) != entries_.end();
  }

 private:
  int m_, n_, k_;
  std::vector<std::int32_t> entries_;
};

/// Draws X[i][j] ~ row y_j of worker i's matrix. Cell (i, j) depends only on
/// (seed, i, j), so any prefix of the pool sees the same draws.
inline LabelMatrix generate_labels(const WorkerPool& pool, const GroundTruth& truth,
                                   std::uint64_t seed) {
  const int m = pool.worker_count();
  const int n = truth.item_count();
  const int k = pool.label_count();
  for (int j = 0; j < n; ++j)
    if (truth.label(j) > k)
      throw ValidationError("true label " + std::to_string(truth.label(j)) +
                            " exceeds pool label count " + std::to_string(k));

  // Cumulative rows once per worker; draws then invert the row CDF.
  std::vector<double> cum(static_cast<std::size_t>(m) * k * k);
  for (int i = 0; i < m; ++i)
    for (int g = 1; g <= k; ++g) {
      auto row = pool.worker(i).row(g);
      double acc = 0.0;
      for (int h = 0; h < k; ++h) {
        acc += row[h];
        cum[(static_cast<std::size_t>(i) * k + (g - 1)) * k + h] = acc;
      }
    }

  std::vector<std::int32_t> x(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double u = cell_uniform(seed, static_cast<std::uint64_t>(i),
                                    static_cast<std::uint64_t>(j));
      const double* row = cum.data() + (static_cast<std::size_t>(i) * k + (truth.label(j) - 1)) * k;
      int h = static_cast<int>(std::upper_bound(row, row + k, u) - row) + 1;
      x[static_cast<std::size_t>(i) * n + j] = static_cast<std::int32_t>(std::min(h, k));
    }
  return LabelMatrix(m, n, k, std::move(x));
}

/// Fraction of items whose estimated label differs from the truth.
inline double misclassification_rate(const GroundTruth& estimate, const GroundTruth& truth) {
  if (estimate.item_count() != truth.item_count())
    throw ValidationError("estimate and truth have different item counts");
  long long wrong = 0;
  for (int j = 0; j < truth.item_count(); ++j)
    if (estimate.label(j) != truth.label(j)) ++wrong;
  return static_cast<double>(wrong) / truth.item_count();
}

/// Rewrites missing entries (0) as a fresh label k+1 so that downstream
/// rules can treat "no answer" as one more reported category.
inline std::pair<LabelMatrix, int> remap_missing(const LabelMatrix& labels) {
  if (!labels.has_missing()) return {labels, labels.label_count()};
  const int k = labels.label_count() + 1;
  std::vector<std::int32_t> x = labels.entries();
  for (auto& v : x)
    if (v == 0) v = static_cast<std::int32_t>(k);
  return {LabelMatrix(labels.worker_count(), labels.item_count(), k, std::move(x)), k};
}

}  // namespace crowdlabel
