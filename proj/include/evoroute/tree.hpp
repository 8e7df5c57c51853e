#pragma once

/**
 * Batch-trained binary decision tree (CART-style, Gini impurity) over the
 * 4-metric confidence features. Used as the warm-started router.
 *
 * Split search is exhaustive: every feature, every midpoint between
 * consecutive distinct sorted values, minimizing weighted child Gini.
 * Tie-break is total and documented: lower weighted Gini wins, then lower
 * feature index, then lower threshold. Equal feature values route to the
 * left (<=) child.
 *
 * Trees are immutable after fit and freely shareable across threads.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "evoroute/common.hpp"

namespace evoroute {

struct LabeledExample {
  FeatureVector features{};
  int label = 0;  // 0 = use small model, 1 = use large model
};

struct Prediction {
  int label = 0;
  double probability = 0.0;  // Laplace-smoothed frequency of `label`
};

// 1 - sum(p_c^2). In [0, 0.5] for binary labels.
inline double gini(double count0, double count1) {
  if (count0 < 0.0 || count1 < 0.0)
    throw InvalidInput("gini: negative class count");
  const double total = count0 + count1;
  if (total <= 0.0) throw InvalidInput("gini: all-zero class counts");
  const double p0 = count0 / total;
  const double p1 = count1 / total;
  return 1.0 - (p0 * p0 + p1 * p1);
}

// ============================================================================
// Tree structure
// ============================================================================

struct TreeNode {
  bool is_leaf = true;
  int feature = -1;
  double threshold = 0.0;
  std::array<double, 2> counts{0.0, 0.0};  // per-class totals routed here
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;

  std::unique_ptr<TreeNode> clone() const {
    auto n = std::make_unique<TreeNode>();
    n->is_leaf = is_leaf;
    n->feature = feature;
    n->threshold = threshold;
    n->counts = counts;
    if (left) n->left = left->clone();
    if (right) n->right = right->clone();
    return n;
  }
};

inline Prediction leaf_prediction(const std::array<double, 2>& counts) {
  // Majority label, ties preferring the cheap model; +1 Laplace per class.
  const int label = counts[1] > counts[0] ? 1 : 0;
  const double total = counts[0] + counts[1];
  return {label, (counts[label] + 1.0) / (total + 2.0)};
}

struct TreeFitOptions {
  int max_depth = 5;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
};

class DecisionTree {
 public:
  using FitOptions = TreeFitOptions;

  DecisionTree() = default;
  DecisionTree(const DecisionTree& other)
      : root_(other.root_ ? other.root_->clone() : nullptr) {}
  DecisionTree& operator=(const DecisionTree& other) {
    if (this != &other) root_ = other.root_ ? other.root_->clone() : nullptr;
    return *this;
  }
  DecisionTree(DecisionTree&&) = default;
  DecisionTree& operator=(DecisionTree&&) = default;

  bool fitted() const { return root_ != nullptr; }
  const TreeNode* root() const { return root_.get(); }

  static DecisionTree fit(const std::vector<LabeledExample>& data,
                          const FitOptions& opt = {}) {
    if (data.empty()) throw InvalidInput("fit_static: empty training set");
    if (opt.max_depth < 1) throw InvalidInput("fit_static: max_depth must be >= 1");
    for (const auto& ex : data)
      for (double v : ex.features)
        if (!std::isfinite(v))
          throw InvalidInput("fit_static: non-finite feature value");

    std::vector<size_t> index(data.size());
    std::iota(index.begin(), index.end(), 0);
    DecisionTree tree;
    tree.root_ = build(data, index, 0, opt);
    return tree;
  }

  Prediction predict(const FeatureVector& x) const {
    if (!root_) throw InvalidInput("predict: tree not fitted");
    const TreeNode* node = root_.get();
    while (!node->is_leaf)
      node = x[node->feature] <= node->threshold ? node->left.get()
                                                 : node->right.get();
    return leaf_prediction(node->counts);
  }

  int depth() const { return node_depth(root_.get()); }

  size_t leaf_count() const { return count_leaves(root_.get()); }

  // --------------------------------------------------------------------
  // Line-oriented text format: one node per line, pre-order.
  //   <depth> split <feature> <threshold>
  //   <depth> leaf <count0> <count1>
  // --------------------------------------------------------------------

  std::string serialize() const {
    std::string out = "evoroute-tree v1\n";
    if (root_) write_node(out, root_.get(), 0);
    return out;
  }

  static DecisionTree deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header) || header.rfind("evoroute-tree", 0) != 0)
      throw ParseError("tree: missing format header");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) lines.push_back(line);
    size_t pos = 0;
    DecisionTree tree;
    if (!lines.empty()) tree.root_ = read_node(lines, pos, 0);
    if (pos != lines.size()) throw ParseError("tree: trailing node lines");
    return tree;
  }

 private:
  std::unique_ptr<TreeNode> root_;

  struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double weighted_gini = std::numeric_limits<double>::infinity();
  };

  static std::unique_ptr<TreeNode> build(const std::vector<LabeledExample>& data,
                                         const std::vector<size_t>& index,
                                         int depth, const FitOptions& opt) {
    auto node = std::make_unique<TreeNode>();
    for (size_t i : index) node->counts[data[i].label] += 1.0;

    const bool pure = node->counts[0] == 0.0 || node->counts[1] == 0.0;
    if (pure || depth >= opt.max_depth ||
        index.size() < static_cast<size_t>(opt.min_samples_split))
      return node;

    const SplitChoice choice = best_split(data, index, opt);
    if (!choice.found) return node;

    std::vector<size_t> left_idx, right_idx;
    for (size_t i : index) {
      if (data[i].features[choice.feature] <= choice.threshold)
        left_idx.push_back(i);
      else
        right_idx.push_back(i);
    }

    node->is_leaf = false;
    node->feature = choice.feature;
    node->threshold = choice.threshold;
    node->left = build(data, left_idx, depth + 1, opt);
    node->right = build(data, right_idx, depth + 1, opt);
    return node;
  }

  static SplitChoice best_split(const std::vector<LabeledExample>& data,
                                const std::vector<size_t>& index,
                                const FitOptions& opt) {
    SplitChoice best;
    const size_t n = index.size();
    std::vector<std::pair<double, int>> column(n);

    for (int f = 0; f < 4; ++f) {
      for (size_t i = 0; i < n; ++i) {
        const auto& ex = data[index[i]];
        column[i] = {ex.features[f], ex.label};
      }
      std::sort(column.begin(), column.end());

      double left0 = 0.0, left1 = 0.0;
      double total0 = 0.0, total1 = 0.0;
      for (const auto& [v, y] : column) (y == 0 ? total0 : total1) += 1.0;

      for (size_t i = 0; i + 1 < n; ++i) {
        (column[i].second == 0 ? left0 : left1) += 1.0;
        if (column[i].first == column[i + 1].first) continue;  // no boundary

        const double n_left = left0 + left1;
        const double n_right = static_cast<double>(n) - n_left;
        if (n_left < opt.min_samples_leaf || n_right < opt.min_samples_leaf)
          continue;

        const double threshold = column[i].first +
                                 (column[i + 1].first - column[i].first) / 2.0;
        const double w =
            (n_left * gini(left0, left1) +
             n_right * gini(total0 - left0, total1 - left1)) /
            static_cast<double>(n);

        if (w < best.weighted_gini ||
            (w == best.weighted_gini &&
             (f < best.feature ||
              (f == best.feature && threshold < best.threshold)))) {
          best.found = true;
          best.feature = f;
          best.threshold = threshold;
          best.weighted_gini = w;
        }
      }
    }
    return best;
  }

  static int node_depth(const TreeNode* node) {
    if (!node || node->is_leaf) return 0;
    return 1 + std::max(node_depth(node->left.get()), node_depth(node->right.get()));
  }

  static size_t count_leaves(const TreeNode* node) {
    if (!node) return 0;
    if (node->is_leaf) return 1;
    return count_leaves(node->left.get()) + count_leaves(node->right.get());
  }

  static void append_double(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  }

  static void write_node(std::string& out, const TreeNode* node, int depth) {
    out += std::to_string(depth);
    if (node->is_leaf) {
      out += " leaf ";
      append_double(out, node->counts[0]);
      out += ' ';
      append_double(out, node->counts[1]);
      out += '\n';
    } else {
      out += " split ";
      out += std::to_string(node->feature);
      out += ' ';
      append_double(out, node->threshold);
      out += '\n';
      write_node(out, node->left.get(), depth + 1);
      write_node(out, node->right.get(), depth + 1);
    }
  }

  static std::unique_ptr<TreeNode> read_node(const std::vector<std::string>& lines,
                                             size_t& pos, int expected_depth) {
    if (pos >= lines.size()) throw ParseError("tree: unexpected end of node list");
    std::istringstream in(lines[pos]);
    ++pos;
    int depth = -1;
    std::string kind;
    if (!(in >> depth >> kind) || depth != expected_depth)
      throw ParseError("tree: bad node line at index " + std::to_string(pos));
    auto node = std::make_unique<TreeNode>();
    if (kind == "leaf") {
      if (!(in >> node->counts[0] >> node->counts[1]))
        throw ParseError("tree: bad leaf line at index " + std::to_string(pos));
    } else if (kind == "split") {
      if (!(in >> node->feature >> node->threshold) || node->feature < 0 ||
          node->feature > 3)
        throw ParseError("tree: bad split line at index " + std::to_string(pos));
      node->is_leaf = false;
      node->left = read_node(lines, pos, expected_depth + 1);
      node->right = read_node(lines, pos, expected_depth + 1);
      node->counts[0] = node->left->counts[0] + node->right->counts[0];
      node->counts[1] = node->left->counts[1] + node->right->counts[1];
    } else {
      throw ParseError("tree: unknown node kind '" + kind + "'");
    }
    return node;
  }
};

// Fraction of examples the tree labels correctly.
inline double training_accuracy(const DecisionTree& tree,
                                const std::vector<LabeledExample>& data) {
  if (data.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& ex : data)
    if (tree.predict(ex.features).label == ex.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace evoroute
