#include <doctest.h>

#include <vector>

#include "evoroute/rng.hpp"
#include "evoroute/tree.hpp"
#include "oracles.hpp"

using namespace evoroute;

namespace {

std::vector<LabeledExample> xor_fixture() {
  // Two informative features, two fillers.
  return {
      {{0.0, 0.0, 0.5, 0.5}, 0},
      {{0.0, 1.0, 0.5, 0.5}, 1},
      {{1.0, 0.0, 0.5, 0.5}, 1},
      {{1.0, 1.0, 0.5, 0.5}, 0},
  };
}

std::vector<LabeledExample> random_dataset(Rng& rng, size_t n) {
  std::vector<LabeledExample> data(n);
  for (auto& ex : data) {
    for (auto& f : ex.features) {
      f = rng.uniform(0.0, 10.0);
      if (rng.bernoulli(0.3)) f = std::floor(f);  // inject ties
    }
    // Noisy structured labels so trees have something to find.
    const double score = ex.features[0] - 0.5 * ex.features[2];
    ex.label = (score + rng.uniform(-2.0, 2.0) > 4.0) ? 1 : 0;
  }
  return data;
}

}  // namespace

TEST_CASE("gini impurity") {
  CHECK(gini(0, 9) == doctest::Approx(0.0));
  CHECK(gini(5, 5) == doctest::Approx(0.5));
  CHECK(gini(3, 1) == doctest::Approx(0.375));
  CHECK_THROWS_AS(gini(0, 0), InvalidInput);
  CHECK_THROWS_AS(gini(-1, 2), InvalidInput);
}

TEST_CASE("fit: pure labels give a single leaf") {
  std::vector<LabeledExample> data(10, LabeledExample{{1, 2, 3, 4}, 1});
  auto tree = DecisionTree::fit(data);
  CHECK(tree.depth() == 0);
  CHECK(tree.leaf_count() == 1);
  auto p = tree.predict({9, 9, 9, 9});
  CHECK(p.label == 1);
}

TEST_CASE("fit: XOR is solved exactly at depth 2") {
  DecisionTree::FitOptions opt;
  opt.max_depth = 2;
  auto tree = DecisionTree::fit(xor_fixture(), opt);
  CHECK(tree.depth() <= 2);
  CHECK(training_accuracy(tree, xor_fixture()) == doctest::Approx(1.0));
  for (const auto& ex : xor_fixture())
    CHECK(tree.predict(ex.features).label == ex.label);
}

TEST_CASE("fit: errors") {
  CHECK_THROWS_AS(DecisionTree::fit({}), InvalidInput);
  DecisionTree::FitOptions opt;
  opt.max_depth = 0;
  CHECK_THROWS_AS(DecisionTree::fit(xor_fixture(), opt), InvalidInput);
}

TEST_CASE("fit matches the exhaustive split-search oracle") {
  Rng rng(101);
  for (int rep = 0; rep < 25; ++rep) {
    const size_t n = 2 + rng.below(60);
    auto data = random_dataset(rng, n);
    DecisionTree::FitOptions opt;
    opt.max_depth = 1 + static_cast<int>(rng.below(5));
    auto tree = DecisionTree::fit(data, opt);

    std::vector<int> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    auto want = oracle::xfit(data, idx, 0, opt.max_depth, opt.min_samples_split,
                             opt.min_samples_leaf);
    CHECK(oracle::same_structure(tree.root(), want.get()));
  }
}

TEST_CASE("fit respects max depth and conserves counts") {
  Rng rng(202);
  auto data = random_dataset(rng, 120);
  auto tree = DecisionTree::fit(data);
  CHECK(tree.depth() <= 5);
  CHECK(tree.root()->counts[0] + tree.root()->counts[1] ==
        doctest::Approx(120.0));
}

TEST_CASE("predict: Laplace smoothing and tie rules") {
  std::vector<LabeledExample> data(10, LabeledExample{{0, 0, 0, 0}, 0});
  auto tree = DecisionTree::fit(data);
  auto p = tree.predict({0, 0, 0, 0});
  CHECK(p.label == 0);
  CHECK(p.probability == doctest::Approx(11.0 / 12.0));

  // Feature exactly at a threshold routes left (<=).
  std::vector<LabeledExample> split_data = {
      {{0.0, 0, 0, 0}, 0}, {{0.0, 0, 0, 0}, 0},
      {{2.0, 0, 0, 0}, 1}, {{2.0, 0, 0, 0}, 1},
  };
  auto t2 = DecisionTree::fit(split_data);
  REQUIRE_FALSE(t2.root()->is_leaf);
  const double thr = t2.root()->threshold;
  CHECK(t2.predict({thr, 0, 0, 0}).label == 0);
}

TEST_CASE("predict is deterministic") {
  Rng rng(303);
  auto data = random_dataset(rng, 80);
  auto tree = DecisionTree::fit(data);
  for (int rep = 0; rep < 20; ++rep) {
    FeatureVector x{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10),
                    rng.uniform(0, 10)};
    auto a = tree.predict(x);
    auto b = tree.predict(x);
    CHECK(a.label == b.label);
    CHECK(a.probability == b.probability);
  }
}

TEST_CASE("serialization round-trips to identical predictions") {
  Rng rng(404);
  auto data = random_dataset(rng, 150);
  auto tree = DecisionTree::fit(data);
  auto text = tree.serialize();
  auto back = DecisionTree::deserialize(text);
  CHECK(back.serialize() == text);
  for (int rep = 0; rep < 200; ++rep) {
    FeatureVector x{rng.uniform(-1, 11), rng.uniform(-1, 11),
                    rng.uniform(-1, 11), rng.uniform(-1, 11)};
    auto a = tree.predict(x);
    auto b = back.predict(x);
    CHECK(a.label == b.label);
    CHECK(a.probability == doctest::Approx(b.probability).epsilon(1e-15));
  }
}

TEST_CASE("deserialize rejects malformed input") {
  CHECK_THROWS_AS(DecisionTree::deserialize("not a tree"), ParseError);
  CHECK_THROWS_AS(DecisionTree::deserialize("evoroute-tree v1\n0 bogus 1 2\n"),
                  ParseError);
  CHECK_THROWS_AS(
      DecisionTree::deserialize("evoroute-tree v1\n0 split 1 0.5\n1 leaf 1 2\n"),
      ParseError);  // missing right child
}
