#pragma once

/**
 * Adaptive sliding window over a numeric stream (0/1 error rates here).
 * Keeps an exponential histogram: level i holds buckets summarizing 2^i
 * elements, at most `kMaxBucketsPerLevel` per level, merging the two
 * oldest on overflow. Every `kCheckInterval` insertions the window is
 * scanned for a split point where the two sub-window means differ by more
 * than the adaptive-window bound; old buckets are dropped until no such
 * cut exists. A drop signals concept drift.
 */

#include <cmath>
#include <cstdint>
#include <vector>

#include "evoroute/common.hpp"

namespace evoroute {

class Adwin {
 public:
  static constexpr int kMaxBucketsPerLevel = 5;
  static constexpr int kCheckInterval = 32;
  static constexpr int kMinSubWindow = 5;
  static constexpr int kMinWindowForCut = 10;

  explicit Adwin(double delta = 0.002) : delta_(delta) {
    if (!(delta > 0.0) || !(delta < 1.0))
      throw InvalidInput("adwin: delta must be in (0, 1)");
  }

  // Insert one value; returns true when the window shrank (drift).
  bool add(double value) {
    ++width_;
    ++time_;
    if (width_ > 1) {
      const double prev_mean = total_ / static_cast<double>(width_ - 1);
      variance_ += static_cast<double>(width_ - 1) * (value - prev_mean) *
                   (value - prev_mean) / static_cast<double>(width_);
    }
    total_ += value;
    if (levels_.empty()) levels_.emplace_back();
    levels_[0].insert(levels_[0].begin(), Bucket{value, 0.0});
    compress();

    bool shrunk = false;
    if (time_ % kCheckInterval == 0 && width_ >= kMinWindowForCut) {
      bool reduced = true;
      while (reduced) {
        reduced = false;
        if (find_cut()) {
          drop_oldest_bucket();
          shrunk = true;
          reduced = width_ >= kMinWindowForCut;
        }
      }
    }
    return shrunk;
  }

  double estimate() const {
    return width_ > 0 ? total_ / static_cast<double>(width_) : 0.0;
  }

  int64_t width() const { return width_; }
  double delta() const { return delta_; }

 private:
  struct Bucket {
    double total = 0.0;
    double variance = 0.0;
  };

  double delta_;
  // levels_[i]: buckets of 2^i elements, index 0 = newest within the level.
  std::vector<std::vector<Bucket>> levels_;
  int64_t width_ = 0;
  int64_t time_ = 0;
  double total_ = 0.0;
  double variance_ = 0.0;

  static int64_t level_size(size_t level) { return int64_t{1} << level; }

  void compress() {
    for (size_t level = 0; level < levels_.size(); ++level) {
      if (levels_[level].size() <= kMaxBucketsPerLevel) continue;
      // Merge the two oldest buckets of this level into the next one.
      const Bucket b2 = levels_[level].back();  // oldest
      levels_[level].pop_back();
      const Bucket b1 = levels_[level].back();
      levels_[level].pop_back();
      const double n = static_cast<double>(level_size(level));
      const double u1 = b1.total / n;
      const double u2 = b2.total / n;
      Bucket merged;
      merged.total = b1.total + b2.total;
      merged.variance =
          b1.variance + b2.variance + n * n * (u1 - u2) * (u1 - u2) / (2.0 * n);
      if (level + 1 >= levels_.size()) levels_.emplace_back();
      levels_[level + 1].insert(levels_[level + 1].begin(), merged);
    }
  }

  // Scan cut points oldest-to-newest; true when some split violates the bound.
  bool find_cut() const {
    double n0 = 0.0, sum0 = 0.0;
    const double n = static_cast<double>(width_);
    const double v = variance_ / n;
    const double dd = std::log(2.0 * std::log(n) / delta_);

    for (size_t level = levels_.size(); level-- > 0;) {
      const auto& row = levels_[level];
      for (size_t b = row.size(); b-- > 0;) {  // oldest first
        n0 += static_cast<double>(level_size(level));
        sum0 += row[b].total;
        const double n1 = n - n0;
        if (n0 < kMinSubWindow || n1 < kMinSubWindow) continue;
        const double u0 = sum0 / n0;
        const double u1 = (total_ - sum0) / n1;
        const double m = 1.0 / (n0 - kMinSubWindow + 1.0) +
                         1.0 / (n1 - kMinSubWindow + 1.0);
        const double eps = std::sqrt(2.0 * m * v * dd) + (2.0 / 3.0) * dd * m;
        if (std::fabs(u0 - u1) > eps) return true;
      }
    }
    return false;
  }

  void drop_oldest_bucket() {
    size_t level = levels_.size();
    while (level-- > 0) {
      if (levels_[level].empty()) continue;
      Bucket bucket = levels_[level].back();
      levels_[level].pop_back();
      const double n1 = static_cast<double>(level_size(level));
      width_ -= static_cast<int64_t>(n1);
      total_ -= bucket.total;
      if (width_ > 0) {
        const double u1 = bucket.total / n1;
        const double mean = total_ / static_cast<double>(width_);
        variance_ -= bucket.variance + n1 * static_cast<double>(width_) *
                                           (u1 - mean) * (u1 - mean) /
                                           (n1 + static_cast<double>(width_));
        if (variance_ < 0.0) variance_ = 0.0;
      } else {
        variance_ = 0.0;
      }
      while (!levels_.empty() && levels_.back().empty()) levels_.pop_back();
      return;
    }
  }

 public:
  // ------------------------------------------------------------------
  // Flat state export for checkpointing; restore() is the exact inverse.
  // ------------------------------------------------------------------
  struct State {
    double delta = 0.002;
    int64_t width = 0;
    int64_t time = 0;
    double total = 0.0;
    double variance = 0.0;
    std::vector<std::vector<std::pair<double, double>>> levels;
  };

  State save() const {
    State s;
    s.delta = delta_;
    s.width = width_;
    s.time = time_;
    s.total = total_;
    s.variance = variance_;
    for (const auto& row : levels_) {
      s.levels.emplace_back();
      for (const auto& b : row) s.levels.back().emplace_back(b.total, b.variance);
    }
    return s;
  }

  static Adwin restore(const State& s) {
    Adwin a(s.delta);
    a.width_ = s.width;
    a.time_ = s.time;
    a.total_ = s.total;
    a.variance_ = s.variance;
    for (const auto& row : s.levels) {
      a.levels_.emplace_back();
      for (const auto& [t, v] : row) a.levels_.back().push_back(Bucket{t, v});
    }
    return a;
  }
};

}  // namespace evoroute
