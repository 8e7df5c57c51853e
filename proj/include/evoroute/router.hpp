#pragma once

/**
 * Model-selection policies over the confidence feature vector.
 *
 * Internal label convention: 1 = escalate to the large model, 0 = stay on
 * the small one (the labeling table is the authority; the conditional
 * dispatch inverts at its boundary). Policies:
 *
 *   AdaptiveHat    - Hoeffding Adaptive Tree, updated online
 *   StaticTree     - warm-up-fitted Gini tree, frozen
 *   ZScoreThreshold- mean standardized score with a linear cutoff
 *   Random         - Large with fixed probability (chance baseline)
 *   Cascade        - Small first, escalation on observed failure
 *   AlwaysSmall / AlwaysLarge - cost and capability bounds
 *
 * All policies except AdaptiveHat are immutable and freely shareable; the
 * HAT follows the single-writer contract of the tree module.
 */

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "evoroute/backend.hpp"
#include "evoroute/common.hpp"
#include "evoroute/confidence.hpp"
#include "evoroute/evaluator.hpp"
#include "evoroute/hoeffding.hpp"
#include "evoroute/rng.hpp"
#include "evoroute/tree.hpp"

namespace evoroute {

// ============================================================================
// Labeling logic for adaptive model switching
// ============================================================================

// All six table rows; "solved" means pass_rate >= 1.0. Returns 1 (use the
// large model) or 0 (use the small model).
inline int label_example(ModelChoice current, double pass_rate,
                         bool other_solvable) {
  if (pass_rate < 0.0 || pass_rate > 1.0)
    throw InvalidInput("label_example: pass_rate outside [0, 1]");
  const bool solved = pass_rate >= 1.0;
  if (current == ModelChoice::Small) {
    if (solved) return 0;               // solved efficiently; keep the small model
    return other_solvable ? 1 : 0;      // escalate only when the large one helps
  }
  if (!solved) return 0;                // large model failed; revert
  return other_solvable ? 0 : 1;        // both solve -> downshift; else stay large
}

// Feedback observed by the evolution loop. When the other model's outcome
// was never observed, the label falls back to an asymmetric assumption:
// the large model is presumed able to fix a small-model failure, the small
// model is not presumed able to replace a large-model success.
struct FeedbackRecord {
  ModelChoice current = ModelChoice::Small;
  double pass_rate = 0.0;
  std::optional<bool> other_solvable;
  FeatureVector features{};
};

inline int label_for_feedback(const FeedbackRecord& fb) {
  const bool other =
      fb.other_solvable.value_or(fb.current == ModelChoice::Small);
  return label_example(fb.current, fb.pass_rate, other);
}

// ============================================================================
// Policies
// ============================================================================

enum class PolicyKind {
  AdaptiveHat,
  StaticTree,
  ZScoreThreshold,
  Random,
  Cascade,
  AlwaysSmall,
  AlwaysLarge,
};

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::AdaptiveHat: return "adaptive";
    case PolicyKind::StaticTree: return "static";
    case PolicyKind::ZScoreThreshold: return "zscore";
    case PolicyKind::Random: return "random";
    case PolicyKind::Cascade: return "cascade";
    case PolicyKind::AlwaysSmall: return "small";
    case PolicyKind::AlwaysLarge: return "large";
  }
  return "unknown";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  for (PolicyKind k :
       {PolicyKind::AdaptiveHat, PolicyKind::StaticTree, PolicyKind::ZScoreThreshold,
        PolicyKind::Random, PolicyKind::Cascade, PolicyKind::AlwaysSmall,
        PolicyKind::AlwaysLarge})
    if (s == to_string(k)) return k;
  throw InvalidInput("unknown policy '" + s + "'");
}

struct ZScoreParams {
  FeatureVector means{};
  FeatureVector stds{1.0, 1.0, 1.0, 1.0};
  double cutoff = 0.0;

  void validate() const {
    for (double s : stds)
      if (!(s > 0.0)) throw InvalidInput("zscore: stds must be > 0");
  }
};

struct RouteDecision {
  ModelChoice choice = ModelChoice::Small;
  std::optional<double> random_draw;  // logged for Random-policy replays
};

class Router {
 public:
  static Router adaptive(HatConfig cfg = {}) {
    Router r(PolicyKind::AdaptiveHat);
    r.hat_ = HoeffdingAdaptiveTree(cfg);
    return r;
  }
  static Router adaptive_from(HoeffdingAdaptiveTree hat) {
    Router r(PolicyKind::AdaptiveHat);
    r.hat_ = std::move(hat);
    return r;
  }
  static Router static_tree(DecisionTree tree) {
    if (!tree.fitted()) throw InvalidInput("router: static tree not fitted");
    Router r(PolicyKind::StaticTree);
    r.tree_ = std::move(tree);
    return r;
  }
  static Router zscore(ZScoreParams params) {
    params.validate();
    Router r(PolicyKind::ZScoreThreshold);
    r.z_ = params;
    return r;
  }
  static Router random(double large_fraction) {
    if (large_fraction < 0.0 || large_fraction > 1.0)
      throw InvalidInput("router: large_fraction outside [0, 1]");
    Router r(PolicyKind::Random);
    r.large_fraction_ = large_fraction;
    return r;
  }
  static Router cascade() { return Router(PolicyKind::Cascade); }
  static Router always_small() { return Router(PolicyKind::AlwaysSmall); }
  static Router always_large() { return Router(PolicyKind::AlwaysLarge); }

  PolicyKind kind() const { return kind_; }
  double large_fraction() const { return large_fraction_; }
  const ZScoreParams& zscore_params() const { return z_; }
  const DecisionTree& tree() const { return tree_; }
  const HoeffdingAdaptiveTree& hat() const { return hat_; }
  HoeffdingAdaptiveTree& mutable_hat() { return hat_; }

  bool needs_confidence() const {
    return kind_ == PolicyKind::AdaptiveHat || kind_ == PolicyKind::StaticTree ||
           kind_ == PolicyKind::ZScoreThreshold;
  }

  RouteDecision route(const std::optional<ConfidenceVector>& conf, Rng& rng) const {
    RouteDecision d;
    switch (kind_) {
      case PolicyKind::AlwaysSmall:
      case PolicyKind::Cascade:
        d.choice = ModelChoice::Small;  // cascades always try cheap first
        return d;
      case PolicyKind::AlwaysLarge:
        d.choice = ModelChoice::Large;
        return d;
      case PolicyKind::Random: {
        const double u = rng.uniform();
        d.random_draw = u;
        d.choice = u < large_fraction_ ? ModelChoice::Large : ModelChoice::Small;
        return d;
      }
      case PolicyKind::AdaptiveHat:
      case PolicyKind::StaticTree: {
        require_conf(conf);
        const int label = kind_ == PolicyKind::AdaptiveHat
                              ? hat_.predict(conf->features()).label
                              : tree_.predict(conf->features()).label;
        d.choice = label == 1 ? ModelChoice::Large : ModelChoice::Small;
        return d;
      }
      case PolicyKind::ZScoreThreshold: {
        require_conf(conf);
        const FeatureVector f = conf->features();
        double z = 0.0;
        for (int i = 0; i < 4; ++i) z += (f[i] - z_.means[i]) / z_.stds[i];
        z /= 4.0;
        // High standardized confidence keeps the cheap model; the boundary
        // itself goes cheap as well.
        d.choice = z >= z_.cutoff ? ModelChoice::Small : ModelChoice::Large;
        return d;
      }
    }
    throw InvalidInput("route: unhandled policy");
  }

  // Replays one observed outcome into the adaptive policy; other policies
  // ignore feedback. Returns the label fed to the learner, if any.
  std::optional<int> online_update(const FeedbackRecord& fb) {
    if (kind_ != PolicyKind::AdaptiveHat) return std::nullopt;
    const int label = label_for_feedback(fb);
    hat_.learn_one(fb.features, label);
    return label;
  }

  void online_update_all(const std::vector<FeedbackRecord>& batch) {
    for (const auto& fb : batch) online_update(fb);
  }

 private:
  explicit Router(PolicyKind kind) : kind_(kind) {}

  static void require_conf(const std::optional<ConfidenceVector>& conf) {
    if (!conf)
      throw InvalidInput("route: policy requires a confidence vector");
  }

  PolicyKind kind_;
  HoeffdingAdaptiveTree hat_{HatConfig{}};
  DecisionTree tree_;
  ZScoreParams z_;
  double large_fraction_ = 0.5;
};

// ============================================================================
// Warm-up phase
// ============================================================================

struct WarmupRecord {
  std::string problem_id;
  double small_pass_rate = 0.0;
  double large_pass_rate = 0.0;
  ConfidenceVector confidence;  // from the small model's generation
  int label_small_perspective = 0;
  int label_large_perspective = 0;

  bool small_solved() const { return small_pass_rate >= 1.0; }
  bool large_solved() const { return large_pass_rate >= 1.0; }
};

struct WarmupResult {
  std::vector<WarmupRecord> records;
  DecisionTree tree;
  double tree_training_accuracy = 0.0;
};

inline std::string warmup_prompt(const Problem& problem) {
  return "Problem:\n" + problem.statement +
         "\n\nWrite a complete program that solves the problem. Output only "
         "the program.\n";
}

// Two labeled rows per problem, one per current-model perspective; both
// carry the small model's confidence vector.
inline std::vector<LabeledExample> warmup_training_rows(
    const std::vector<WarmupRecord>& records) {
  std::vector<LabeledExample> rows;
  rows.reserve(records.size() * 2);
  for (const auto& rec : records) {
    rows.push_back({rec.confidence.features(), rec.label_small_perspective});
    rows.push_back({rec.confidence.features(), rec.label_large_perspective});
  }
  return rows;
}

struct WarmupOptions {
  int tree_depth = 5;
  uint64_t seed = 42;
  ConfidenceConfig confidence;
};

// Runs both models over n problems, labels each outcome from both
// perspectives, and fits the initial static router tree.
inline WarmupResult run_warmup(const std::vector<Problem>& problems, int n,
                               GenerationService& backend,
                               CandidateEvaluator& evaluator,
                               const WarmupOptions& opt = {}) {
  if (n < 1) throw InvalidInput("run_warmup: n must be >= 1");
  if (static_cast<size_t>(n) > problems.size())
    throw InvalidInput("run_warmup: n exceeds suite size");

  // Outcomes are unknown before generation, so the subset is a seeded
  // random draw; stratified analysis remains possible from the trace.
  std::vector<size_t> index(problems.size());
  for (size_t i = 0; i < index.size(); ++i) index[i] = i;
  Rng rng(opt.seed ^ 0x77a61dULL);
  for (size_t i = index.size(); i > 1; --i)
    std::swap(index[i - 1], index[rng.below(i)]);
  index.resize(static_cast<size_t>(n));
  std::sort(index.begin(), index.end());

  WarmupResult result;
  for (size_t i : index) {
    const Problem& problem = problems[i];
    try {
      const std::string prompt = warmup_prompt(problem);
      GenerationRecord small =
          backend.generate(ModelChoice::Small, prompt, problem.id);
      GenerationRecord large =
          backend.generate(ModelChoice::Large, prompt, problem.id);

      WarmupRecord rec;
      rec.problem_id = problem.id;
      rec.small_pass_rate =
          evaluator.evaluate_program(small.output, problem).pass_rate;
      rec.large_pass_rate =
          evaluator.evaluate_program(large.output, problem).pass_rate;
      rec.confidence = small.confidence
                           ? *small.confidence
                           : confidence_vector(small.tokens, opt.confidence);
      rec.label_small_perspective = label_example(
          ModelChoice::Small, rec.small_pass_rate, rec.large_solved());
      rec.label_large_perspective = label_example(
          ModelChoice::Large, rec.large_pass_rate, rec.small_solved());
      result.records.push_back(std::move(rec));
    } catch (const BackendError& e) {
      throw WarmupIncomplete("warm-up failed on problem '" + problem.id +
                             "': " + e.what());
    }
  }

  const auto rows = warmup_training_rows(result.records);
  TreeFitOptions fit_opt;
  fit_opt.max_depth = opt.tree_depth;
  result.tree = DecisionTree::fit(rows, fit_opt);
  result.tree_training_accuracy = training_accuracy(result.tree, rows);
  return result;
}

// Per-metric standardization parameters estimated from warm-up records.
inline ZScoreParams estimate_zscore_params(const std::vector<WarmupRecord>& records,
                                           double cutoff = 0.0) {
  if (records.empty())
    throw InvalidInput("zscore: no warm-up records to calibrate from");
  ZScoreParams p;
  p.cutoff = cutoff;
  const double n = static_cast<double>(records.size());
  for (int m = 0; m < 4; ++m) {
    double mean = 0.0;
    for (const auto& r : records) mean += r.confidence.features()[m];
    mean /= n;
    double var = 0.0;
    for (const auto& r : records) {
      const double d = r.confidence.features()[m] - mean;
      var += d * d;
    }
    var = n > 1 ? var / (n - 1) : 0.0;
    p.means[m] = mean;
    p.stds[m] = std::sqrt(var);
    if (!(p.stds[m] > 0.0))
      throw InvalidInput("zscore: degenerate metric spread in warm-up records");
  }
  return p;
}

// Seeds an adaptive router from the warm-up trace (both perspectives, in
// trace order).
inline void replay_warmup_into(Router& router,
                               const std::vector<WarmupRecord>& records) {
  for (const auto& rec : records) {
    FeedbackRecord small_fb;
    small_fb.current = ModelChoice::Small;
    small_fb.pass_rate = rec.small_pass_rate;
    small_fb.other_solvable = rec.large_solved();
    small_fb.features = rec.confidence.features();
    router.online_update(small_fb);

    FeedbackRecord large_fb;
    large_fb.current = ModelChoice::Large;
    large_fb.pass_rate = rec.large_pass_rate;
    large_fb.other_solvable = rec.small_solved();
    large_fb.features = rec.confidence.features();
    router.online_update(large_fb);
  }
}

}  // namespace evoroute
