#pragma once

/**
 * Incrementally grown binary decision tree with drift adaptation.
 *
 * Leaves keep class counts plus per-(feature, class) Gaussian summaries;
 * every `grace_period` examples a leaf evaluates candidate thresholds and
 * splits when the Gini-gain lead of the best feature over the runner-up
 * clears the Hoeffding bound (or the bound has shrunk below the tie
 * threshold tau). Every internal node monitors the error of the subtree
 * below it with an Adwin window; on drift it grows an alternate subtree in
 * parallel and splices it in once the alternate's windowed error is
 * significantly lower.
 *
 * Learning is prequential: learn_one returns the prediction made before
 * the example touches any statistics. Single writer; readers take an
 * immutable snapshot().
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "evoroute/adwin.hpp"
#include "evoroute/common.hpp"
#include "evoroute/tree.hpp"

namespace evoroute {

// epsilon = sqrt(R^2 ln(1/delta) / 2n); strictly decreasing in n.
inline double hoeffding_bound(double range, double delta, int64_t n) {
  if (n < 1) throw InvalidInput("hoeffding_bound: n must be >= 1");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw InvalidInput("hoeffding_bound: delta must be in (0, 1)");
  if (!(range > 0.0)) throw InvalidInput("hoeffding_bound: range must be > 0");
  return std::sqrt(range * range * std::log(1.0 / delta) /
                   (2.0 * static_cast<double>(n)));
}

struct HatConfig {
  int grace_period = 50;      // examples between split checks
  double delta = 1e-3;        // Hoeffding confidence for splits
  double tau = 0.05;          // tie-break threshold
  double drift_delta = 0.002; // Adwin confidence at internal nodes

  void validate() const {
    if (grace_period < 1) throw InvalidInput("hat: grace_period must be >= 1");
    if (!(delta > 0.0) || !(delta < 1.0))
      throw InvalidInput("hat: delta must be in (0, 1)");
    if (!(drift_delta > 0.0) || !(drift_delta < 1.0))
      throw InvalidInput("hat: drift_delta must be in (0, 1)");
    if (tau < 0.0) throw InvalidInput("hat: tau must be >= 0");
  }
};

// ============================================================================
// Streaming numeric summaries
// ============================================================================

// Online mean/variance (Welford) plus observed range.
class GaussianEstimator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
  }

  int64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }
  double stddev() const { return std::sqrt(variance()); }
  double min() const { return min_; }
  double max() const { return max_; }

  // P(X <= t) under the fitted normal; degenerates to a step at the mean.
  double cdf(double t) const {
    if (n_ == 0) return 0.0;
    const double sd = stddev();
    if (sd <= 0.0) return t >= mean_ ? 1.0 : 0.0;
    return 0.5 * std::erfc(-(t - mean_) / (sd * std::sqrt(2.0)));
  }

  struct State {
    int64_t n = 0;
    double mean = 0.0, m2 = 0.0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
  };
  State save() const { return {n_, mean_, m2_, min_, max_}; }
  static GaussianEstimator restore(const State& s) {
    GaussianEstimator g;
    g.n_ = s.n;
    g.mean_ = s.mean;
    g.m2_ = s.m2;
    g.min_ = s.min;
    g.max_ = s.max;
    return g;
  }

 private:
  int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
};

// Class-conditional summaries for one feature.
using FeatureSummary = std::array<GaussianEstimator, 2>;

// Candidate thresholds: ten interior grid points between the observed min
// and max. Fewer than two observations (or a constant feature) yield none.
inline std::vector<double> numeric_split_candidates(const FeatureSummary& summary) {
  const int64_t n = summary[0].count() + summary[1].count();
  if (n < 2) return {};
  const double lo = std::min(summary[0].count() ? summary[0].min() : summary[1].min(),
                             summary[1].count() ? summary[1].min() : summary[0].min());
  const double hi = std::max(summary[0].count() ? summary[0].max() : summary[1].max(),
                             summary[1].count() ? summary[1].max() : summary[0].max());
  if (!(hi > lo)) return {};
  std::vector<double> candidates;
  candidates.reserve(10);
  for (int i = 1; i <= 10; ++i)
    candidates.push_back(lo + (hi - lo) * static_cast<double>(i) / 11.0);
  return candidates;
}

// Gini gain of splitting `summary` at `threshold`, with class priors taken
// from `counts`. Child masses are estimated from the per-class Gaussians.
inline double estimated_split_gain(const std::array<double, 2>& counts,
                                   const FeatureSummary& summary,
                                   double threshold) {
  std::array<double, 2> left{0.0, 0.0}, right{0.0, 0.0};
  for (int c = 0; c < 2; ++c) {
    if (counts[c] <= 0.0) continue;
    const double frac = summary[c].count() ? summary[c].cdf(threshold) : 0.5;
    left[c] = counts[c] * frac;
    right[c] = counts[c] * (1.0 - frac);
  }
  const double nl = left[0] + left[1];
  const double nr = right[0] + right[1];
  const double total = nl + nr;
  if (nl < 1e-9 || nr < 1e-9 || total <= 0.0) return 0.0;
  const double parent = gini(counts[0], counts[1]);
  const double weighted =
      (nl * gini(left[0], left[1]) + nr * gini(right[0], right[1])) / total;
  return parent - weighted;
}

// ============================================================================
// Hoeffding Adaptive Tree
// ============================================================================

class HoeffdingAdaptiveTree {
 public:
  struct Node;
  using NodePtr = std::unique_ptr<Node>;

  struct SplitEstimate {
    std::array<double, 2> left{0.0, 0.0};
    std::array<double, 2> right{0.0, 0.0};
  };

  struct Node {
    bool is_leaf = true;

    // Leaf state
    std::array<double, 2> counts{0.0, 0.0};
    std::array<FeatureSummary, 4> summaries{};
    double weight_at_last_check = 0.0;
    // Running scores of the two leaf predictors; the leaf answers with
    // whichever has been more accurate on its own stream so far.
    double majority_correct = 0.0;
    double bayes_correct = 0.0;

    // Internal state
    int feature = -1;
    double threshold = 0.0;
    NodePtr left;
    NodePtr right;
    Adwin error{0.002};      // windowed 0/1 error of this subtree
    NodePtr alternate;       // shadow subtree grown after drift
    Adwin alternate_error{0.002};

    NodePtr clone() const {
      auto n = std::make_unique<Node>();
      n->is_leaf = is_leaf;
      n->counts = counts;
      n->summaries = summaries;
      n->weight_at_last_check = weight_at_last_check;
      n->majority_correct = majority_correct;
      n->bayes_correct = bayes_correct;
      n->feature = feature;
      n->threshold = threshold;
      n->error = error;
      n->alternate_error = alternate_error;
      if (left) n->left = left->clone();
      if (right) n->right = right->clone();
      if (alternate) n->alternate = alternate->clone();
      return n;
    }
  };

  explicit HoeffdingAdaptiveTree(HatConfig cfg = {}) : cfg_(cfg) {
    cfg_.validate();
    root_ = std::make_unique<Node>();
  }

  HoeffdingAdaptiveTree(const HoeffdingAdaptiveTree& other)
      : cfg_(other.cfg_),
        examples_seen_(other.examples_seen_),
        root_(other.root_ ? other.root_->clone() : nullptr) {}
  HoeffdingAdaptiveTree& operator=(const HoeffdingAdaptiveTree& other) {
    if (this != &other) {
      cfg_ = other.cfg_;
      examples_seen_ = other.examples_seen_;
      root_ = other.root_ ? other.root_->clone() : nullptr;
    }
    return *this;
  }
  HoeffdingAdaptiveTree(HoeffdingAdaptiveTree&&) = default;
  HoeffdingAdaptiveTree& operator=(HoeffdingAdaptiveTree&&) = default;

  const HatConfig& config() const { return cfg_; }
  int64_t examples_seen() const { return examples_seen_; }
  const Node* root() const { return root_.get(); }

  Prediction predict(const FeatureVector& x) const {
    return leaf_predict(*route_to_leaf(root_.get(), x), x);
  }

  // Test-then-train. The returned prediction is computed strictly before
  // the example influences any statistics.
  Prediction learn_one(const FeatureVector& x, int label) {
    for (double v : x)
      if (!std::isfinite(v))
        throw InvalidInput("hat_learn_one: non-finite feature value");
    if (label != 0 && label != 1)
      throw InvalidInput("hat_learn_one: label must be 0 or 1");

    const Prediction before = predict(x);
    ++examples_seen_;
    learn(root_, x, label);
    return before;
  }

  // Immutable copy for concurrent readers.
  HoeffdingAdaptiveTree snapshot() const { return *this; }

  // Mutable access for serialization helpers.
  NodePtr& mutable_root() { return root_; }
  void set_examples_seen(int64_t n) { examples_seen_ = n; }

 private:
  HatConfig cfg_;
  int64_t examples_seen_ = 0;
  NodePtr root_;

  static constexpr int64_t kMinSwapWindow = 50;
  static constexpr double kSwapDelta = 0.05;

  static const Node* route_to_leaf(const Node* node, const FeatureVector& x) {
    while (!node->is_leaf)
      node = x[node->feature] <= node->threshold ? node->left.get()
                                                 : node->right.get();
    return node;
  }

  // Class log-likelihoods from the leaf's Gaussians; returns false when no
  // feature is informative for both classes yet.
  static bool bayes_label(const Node& leaf, const FeatureVector& x, int& label) {
    const double total = leaf.counts[0] + leaf.counts[1];
    if (total <= 0.0) return false;
    bool informative = false;
    std::array<double, 2> loglik{};
    for (int c = 0; c < 2; ++c)
      loglik[c] = std::log((leaf.counts[c] + 1.0) / (total + 2.0));
    for (int f = 0; f < 4; ++f) {
      const auto& s = leaf.summaries[f];
      if (s[0].count() < 1 || s[1].count() < 1) continue;
      informative = true;
      for (int c = 0; c < 2; ++c) {
        const double sd = std::max(s[c].stddev(), 1e-6);
        const double z = (x[f] - s[c].mean()) / sd;
        loglik[c] += -0.5 * z * z - std::log(sd);
      }
    }
    if (!informative) return false;
    label = loglik[1] > loglik[0] ? 1 : 0;
    return true;
  }

  static Prediction leaf_predict(const Node& leaf, const FeatureVector& x) {
    const Prediction majority = leaf_prediction(leaf.counts);
    if (leaf.bayes_correct < leaf.majority_correct) return majority;
    int label = majority.label;
    if (!bayes_label(leaf, x, label)) return majority;
    return {label, label == majority.label
                       ? majority.probability
                       : 1.0 - majority.probability};
  }

  static int subtree_label(const Node* node, const FeatureVector& x) {
    return leaf_predict(*route_to_leaf(node, x), x).label;
  }

  void learn(NodePtr& slot, const FeatureVector& x, int label) {
    Node* node = slot.get();
    if (node->is_leaf) {
      learn_leaf(slot, x, label);
      return;
    }

    // Drift monitoring on the main subtree's own prediction.
    const bool err = subtree_label(node, x) != label;
    const bool drift = node->error.add(err ? 1.0 : 0.0);
    if (drift && !node->alternate) {
      node->alternate = std::make_unique<Node>();
      node->alternate_error = Adwin(cfg_.drift_delta);
    }

    if (node->alternate) {
      const bool alt_err = subtree_label(node->alternate.get(), x) != label;
      node->alternate_error.add(alt_err ? 1.0 : 0.0);
      learn(node->alternate, x, label);

      if (node->error.width() >= kMinSwapWindow &&
          node->alternate_error.width() >= kMinSwapWindow) {
        const double main_e = node->error.estimate();
        const double alt_e = node->alternate_error.estimate();
        const double fn = 1.0 / static_cast<double>(node->error.width()) +
                          1.0 / static_cast<double>(node->alternate_error.width());
        const double bound =
            std::sqrt(2.0 * main_e * (1.0 - main_e) * std::log(2.0 / kSwapDelta) * fn);
        if (main_e - alt_e > bound) {
          slot = std::move(node->alternate);  // alternate takes over
          return;
        }
        if (alt_e - main_e > bound) node->alternate.reset();
      }
    }

    NodePtr& child =
        x[node->feature] <= node->threshold ? node->left : node->right;
    learn(child, x, label);
  }

  void learn_leaf(NodePtr& slot, const FeatureVector& x, int label) {
    Node* node = slot.get();
    // Score both leaf predictors on this example before it updates them.
    if (node->counts[0] + node->counts[1] > 0.0) {
      if (leaf_prediction(node->counts).label == label)
        node->majority_correct += 1.0;
      int nb = -1;
      if (bayes_label(*node, x, nb) && nb == label) node->bayes_correct += 1.0;
    }
    node->counts[label] += 1.0;
    for (int f = 0; f < 4; ++f) node->summaries[f][label].add(x[f]);

    const double weight = node->counts[0] + node->counts[1];
    if (weight - node->weight_at_last_check <
        static_cast<double>(cfg_.grace_period))
      return;
    node->weight_at_last_check = weight;

    if (node->counts[0] == 0.0 || node->counts[1] == 0.0) return;  // pure

    // Best candidate per feature, then Hoeffding race between the top two.
    struct Suggestion {
      double gain = 0.0;
      int feature = -1;
      double threshold = 0.0;
    };
    std::vector<Suggestion> per_feature;
    for (int f = 0; f < 4; ++f) {
      Suggestion s;
      s.feature = f;
      for (double t : numeric_split_candidates(node->summaries[f])) {
        const double g = estimated_split_gain(node->counts, node->summaries[f], t);
        if (g > s.gain) {
          s.gain = g;
          s.threshold = t;
        }
      }
      if (s.gain > 0.0) per_feature.push_back(s);
    }
    if (per_feature.empty()) return;

    std::sort(per_feature.begin(), per_feature.end(),
              [](const Suggestion& a, const Suggestion& b) {
                if (a.gain != b.gain) return a.gain > b.gain;
                return a.feature < b.feature;
              });
    const double best = per_feature[0].gain;
    const double second = per_feature.size() > 1 ? per_feature[1].gain : 0.0;
    const double eps =
        hoeffding_bound(1.0, cfg_.delta, static_cast<int64_t>(weight));
    if (!(best - second > eps || eps < cfg_.tau)) return;

    split_leaf(slot, per_feature[0].feature, per_feature[0].threshold);
  }

  void split_leaf(NodePtr& slot, int feature, double threshold) {
    Node* leaf = slot.get();
    auto internal = std::make_unique<Node>();
    internal->is_leaf = false;
    internal->feature = feature;
    internal->threshold = threshold;
    internal->error = Adwin(cfg_.drift_delta);
    internal->alternate_error = Adwin(cfg_.drift_delta);
    internal->left = std::make_unique<Node>();
    internal->right = std::make_unique<Node>();
    // Children start from the estimated class masses on each side so the
    // region keeps predicting sensibly until fresh examples arrive.
    for (int c = 0; c < 2; ++c) {
      if (leaf->counts[c] <= 0.0) continue;
      const double frac = leaf->summaries[feature][c].count()
                              ? leaf->summaries[feature][c].cdf(threshold)
                              : 0.5;
      internal->left->counts[c] = leaf->counts[c] * frac;
      internal->right->counts[c] = leaf->counts[c] * (1.0 - frac);
    }
    slot = std::move(internal);
  }
};

}  // namespace evoroute
