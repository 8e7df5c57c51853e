#pragma once

// Brute-force reference implementations used by the test suites. These are
// deliberately naive (explicit loops, full enumeration) and share no code
// with the library paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "evoroute/confidence.hpp"
#include "evoroute/rng.hpp"
#include "evoroute/tree.hpp"

namespace oracle {

// ============================================================================
// Confidence metrics by explicit enumeration
// ============================================================================

struct ConfResult {
  double mc, lgc, tc, bwc;
};

inline double token_conf(const evoroute::TokenTopK& t) {
  double s = 0.0;
  for (double lp : t.logprobs) s += lp;
  return -s / static_cast<double>(t.logprobs.size());
}

inline std::vector<double> windows_brute(const std::vector<double>& c, int w) {
  const int t = static_cast<int>(c.size());
  std::vector<double> out;
  if (t < w) {
    double s = 0.0;
    for (double v : c) s += v;
    out.push_back(s / t);
    return out;
  }
  for (int i = 0; i + w <= t; ++i) {
    double s = 0.0;
    for (int j = i; j < i + w; ++j) s += c[j];
    out.push_back(s / w);
  }
  return out;
}

inline ConfResult conf_brute(const std::vector<evoroute::TokenTopK>& tokens,
                             const evoroute::ConfidenceConfig& cfg) {
  std::vector<double> c;
  for (const auto& t : tokens) c.push_back(token_conf(t));
  const int n = static_cast<int>(c.size());

  ConfResult r{};
  double sum = 0.0;
  for (double v : c) sum += v;
  r.mc = sum / n;

  std::vector<double> wins = windows_brute(c, cfg.group_window);
  r.lgc = *std::min_element(wins.begin(), wins.end());

  const int tail = std::min(cfg.tail_window, n);
  double ts = 0.0;
  for (int i = n - tail; i < n; ++i) ts += c[i];
  r.tc = ts / tail;

  std::vector<double> sorted = wins;
  std::sort(sorted.begin(), sorted.end());
  int take = static_cast<int>(
      std::ceil(cfg.bottom_percent / 100.0 * static_cast<double>(sorted.size())));
  if (take < 1) take = 1;
  if (take > static_cast<int>(sorted.size())) take = static_cast<int>(sorted.size());
  double bs = 0.0;
  for (int i = 0; i < take; ++i) bs += sorted[i];
  r.bwc = bs / take;
  return r;
}

// Random token stream: per-position top-k logprob lists, sorted
// non-increasing, all <= 0.
inline std::vector<evoroute::TokenTopK> random_stream(evoroute::Rng& rng,
                                                      size_t len, int k) {
  std::vector<evoroute::TokenTopK> out(len);
  for (size_t i = 0; i < len; ++i) {
    out[i].position = i;
    out[i].logprobs.resize(k);
    for (int j = 0; j < k; ++j) out[i].logprobs[j] = -rng.uniform(0.0, 12.0);
    std::sort(out[i].logprobs.begin(), out[i].logprobs.end(),
              std::greater<double>());
  }
  return out;
}

// ============================================================================
// Exhaustive CART fitter (independent of evoroute::DecisionTree)
// ============================================================================

struct XNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0.0;
  double c0 = 0.0, c1 = 0.0;
  std::unique_ptr<XNode> l, r;
};

inline double gini2(double a, double b) {
  const double t = a + b;
  const double pa = a / t, pb = b / t;
  return 1.0 - (pa * pa + pb * pb);
}

// Same contract as DecisionTree::fit: split whenever any candidate exists,
// minimum (weighted gini, feature, threshold), ties to the left child.
inline std::unique_ptr<XNode> xfit(const std::vector<evoroute::LabeledExample>& data,
                                   std::vector<int> idx, int depth, int max_depth,
                                   int min_split, int min_leaf) {
  auto node = std::make_unique<XNode>();
  for (int i : idx) (data[i].label == 0 ? node->c0 : node->c1) += 1.0;

  if (node->c0 == 0.0 || node->c1 == 0.0) return node;
  if (depth >= max_depth) return node;
  if (static_cast<int>(idx.size()) < min_split) return node;

  double best_w = std::numeric_limits<double>::infinity();
  int best_f = -1;
  double best_t = 0.0;

  for (int f = 0; f < 4; ++f) {
    std::vector<double> values;
    for (int i : idx) values.push_back(data[i].features[f]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (size_t v = 0; v + 1 < values.size(); ++v) {
      const double t = values[v] + (values[v + 1] - values[v]) / 2.0;
      double l0 = 0, l1 = 0, r0 = 0, r1 = 0;
      for (int i : idx) {
        const bool left = data[i].features[f] <= t;
        if (data[i].label == 0)
          (left ? l0 : r0) += 1.0;
        else
          (left ? l1 : r1) += 1.0;
      }
      const double nl = l0 + l1, nr = r0 + r1;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double w = (nl * gini2(l0, l1) + nr * gini2(r0, r1)) / (nl + nr);
      if (w < best_w || (w == best_w && (f < best_f || (f == best_f && t < best_t)))) {
        best_w = w;
        best_f = f;
        best_t = t;
      }
    }
  }
  if (best_f < 0) return node;

  std::vector<int> li, ri;
  for (int i : idx)
    (data[i].features[best_f] <= best_t ? li : ri).push_back(i);
  node->leaf = false;
  node->feature = best_f;
  node->threshold = best_t;
  node->l = xfit(data, li, depth + 1, max_depth, min_split, min_leaf);
  node->r = xfit(data, ri, depth + 1, max_depth, min_split, min_leaf);
  return node;
}

// Walk both trees in lockstep; true when every split and leaf agrees.
inline bool same_structure(const evoroute::TreeNode* a, const XNode* b) {
  if (a->is_leaf != b->leaf) return false;
  if (a->is_leaf)
    return a->counts[0] == b->c0 && a->counts[1] == b->c1;
  if (a->feature != b->feature) return false;
  if (a->threshold != b->threshold) return false;
  return same_structure(a->left.get(), b->l.get()) &&
         same_structure(a->right.get(), b->r.get());
}

// ============================================================================
// Synthetic feature streams for the online tree
// ============================================================================

// Axis-separable concept: label = x[0] > 0.55, features uniform in [0,1]^4.
// `inverted` flips every label (used for the drift scenario).
inline std::pair<evoroute::FeatureVector, int> stream_example(evoroute::Rng& rng,
                                                              bool inverted) {
  evoroute::FeatureVector x{};
  for (auto& v : x) v = rng.uniform();
  int y = x[0] > 0.55 ? 1 : 0;
  if (inverted) y = 1 - y;
  return {x, y};
}

}  // namespace oracle
