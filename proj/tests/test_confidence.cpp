#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "evoroute/confidence.hpp"
#include "evoroute/rng.hpp"
#include "oracles.hpp"

using namespace evoroute;

namespace {

TokenTopK topk_from_probs(std::vector<double> probs) {
  TokenTopK t;
  for (double p : probs) t.logprobs.push_back(std::log(p));
  std::sort(t.logprobs.begin(), t.logprobs.end(), std::greater<double>());
  return t;
}

std::vector<TokenTopK> stream_with_confidences(const std::vector<double>& conf) {
  // One logprob per token: c = -log p  =>  logprob = -c.
  std::vector<TokenTopK> out;
  for (size_t i = 0; i < conf.size(); ++i) {
    TokenTopK t;
    t.position = i;
    t.logprobs = {-conf[i]};
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("token_confidence basics") {
  CHECK(token_confidence(topk_from_probs({1.0})) == doctest::Approx(0.0));
  CHECK(token_confidence(topk_from_probs({0.25, 0.25, 0.25, 0.25})) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(token_confidence(topk_from_probs({0.9, 0.1})) ==
        doctest::Approx(1.2040).epsilon(1e-4));
  CHECK_THROWS_AS(token_confidence(TokenTopK{}), InvalidInput);
}

TEST_CASE("token_confidence is non-negative, zero only for certain tokens") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    auto stream = oracle::random_stream(rng, 1, 1 + static_cast<int>(rng.below(20)));
    CHECK(token_confidence(stream[0]) >= 0.0);
  }
  CHECK(token_confidence(topk_from_probs({1.0})) == 0.0);
}

TEST_CASE("group_confidences windows") {
  SUBCASE("constant sequence") {
    std::vector<double> tokens(17, 3.25);
    for (double w : group_confidences(tokens, 4))
      CHECK(w == doctest::Approx(3.25));
  }
  SUBCASE("stride-1 enumeration") {
    auto w = group_confidences({1.0, 2.0, 3.0}, 2);
    REQUIRE(w.size() == 2);
    CHECK(w[0] == doctest::Approx(1.5));
    CHECK(w[1] == doctest::Approx(2.5));
  }
  SUBCASE("short sequence collapses to one window") {
    auto w = group_confidences({4.0, 4.0}, 8);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == doctest::Approx(4.0));
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(group_confidences({}, 4), InvalidInput);
  }
  SUBCASE("length and means match brute force") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
      const size_t t = 1 + rng.below(200);
      const int w = 1 + static_cast<int>(rng.below(32));
      std::vector<double> tokens(t);
      for (auto& v : tokens) v = rng.uniform(0.0, 10.0);
      auto got = group_confidences(tokens, w);
      auto want = oracle::windows_brute(tokens, w);
      REQUIRE(got.size() == want.size());
      CHECK(got.size() == std::max<size_t>(1, t >= static_cast<size_t>(w)
                                                  ? t - w + 1
                                                  : 1));
      for (size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("confidence_vector worked example") {
  auto tokens = stream_with_confidences({1.0, 1.0, 5.0, 5.0});
  ConfidenceConfig cfg;
  cfg.top_k = 1;
  cfg.group_window = 2;
  cfg.tail_window = 2;
  cfg.bottom_percent = 50.0;
  auto v = confidence_vector(tokens, cfg);
  CHECK(v.mc == doctest::Approx(3.0));
  CHECK(v.lgc == doctest::Approx(1.0));
  CHECK(v.tc == doctest::Approx(5.0));
  CHECK(v.bwc == doctest::Approx(2.0));
  CHECK(v.token_count == 4);
}

TEST_CASE("confidence_vector constant stream") {
  auto tokens = stream_with_confidences(std::vector<double>(37, 2.5));
  ConfidenceConfig cfg;
  cfg.group_window = 8;
  cfg.tail_window = 4;
  cfg.bottom_percent = 25.0;
  auto v = confidence_vector(tokens, cfg);
  CHECK(v.mc == doctest::Approx(2.5));
  CHECK(v.lgc == doctest::Approx(2.5));
  CHECK(v.tc == doctest::Approx(2.5));
  CHECK(v.bwc == doctest::Approx(2.5));
}

TEST_CASE("confidence_vector rejects empty stream") {
  CHECK_THROWS_AS(confidence_vector({}, ConfidenceConfig{}), InvalidInput);
}

TEST_CASE("metric ordering: lgc <= bwc <= mean of windows; tc == mc for long tails") {
  Rng rng(23);
  for (int rep = 0; rep < 200; ++rep) {
    const size_t t = 1 + rng.below(300);
    auto stream = oracle::random_stream(rng, t, 5);
    ConfidenceConfig cfg;
    cfg.top_k = 5;
    cfg.group_window = 1 + static_cast<int>(rng.below(40));
    cfg.tail_window = 1 + static_cast<int>(rng.below(400));
    cfg.bottom_percent = rng.uniform(1.0, 100.0);
    auto v = confidence_vector(stream, cfg);

    std::vector<double> conf;
    for (const auto& tok : stream) conf.push_back(token_confidence(tok));
    auto wins = group_confidences(conf, cfg.group_window);
    const double wmean =
        std::accumulate(wins.begin(), wins.end(), 0.0) / wins.size();

    CHECK(v.lgc <= v.bwc + 1e-12);
    CHECK(v.bwc <= wmean + 1e-12);
    if (static_cast<size_t>(cfg.tail_window) >= t)
      CHECK(v.tc == doctest::Approx(v.mc).epsilon(1e-12));
  }
}

TEST_CASE("mc is permutation-invariant; constant sequences invariant in all four") {
  Rng rng(31);
  auto stream = oracle::random_stream(rng, 64, 3);
  ConfidenceConfig cfg;
  cfg.top_k = 3;
  cfg.group_window = 8;
  cfg.tail_window = 16;
  auto before = confidence_vector(stream, cfg);

  // Reverse is a permutation.
  std::reverse(stream.begin(), stream.end());
  auto after = confidence_vector(stream, cfg);
  CHECK(after.mc == doctest::Approx(before.mc).epsilon(1e-12));

  auto constant = stream_with_confidences(std::vector<double>(64, 1.75));
  auto c1 = confidence_vector(constant, cfg);
  std::reverse(constant.begin(), constant.end());
  auto c2 = confidence_vector(constant, cfg);
  CHECK(c1.lgc == doctest::Approx(c2.lgc));
  CHECK(c1.tc == doctest::Approx(c2.tc));
  CHECK(c1.bwc == doctest::Approx(c2.bwc));
  CHECK(c1.mc == doctest::Approx(c2.mc));
}

TEST_CASE("confidence_vector matches brute-force oracle") {
  Rng rng(47);
  for (int rep = 0; rep < 100; ++rep) {
    const size_t t = 1 + rng.below(400);
    const int k = std::array<int, 3>{1, 5, 20}[rng.below(3)];
    auto stream = oracle::random_stream(rng, t, k);
    ConfidenceConfig cfg;
    cfg.top_k = k;
    cfg.group_window = 1 + static_cast<int>(rng.below(64));
    cfg.tail_window = 1 + static_cast<int>(rng.below(128));
    cfg.bottom_percent = rng.uniform(0.5, 100.0);

    auto got = confidence_vector(stream, cfg);
    auto want = oracle::conf_brute(stream, cfg);
    CHECK(got.mc == doctest::Approx(want.mc).epsilon(1e-10));
    CHECK(got.lgc == doctest::Approx(want.lgc).epsilon(1e-10));
    CHECK(got.tc == doctest::Approx(want.tc).epsilon(1e-10));
    CHECK(got.bwc == doctest::Approx(want.bwc).epsilon(1e-10));
  }
}

TEST_CASE("config validation") {
  ConfidenceConfig cfg;
  cfg.bottom_percent = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = ConfidenceConfig{};
  cfg.group_window = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = ConfidenceConfig{};
  cfg.bottom_percent = 100.0;
  CHECK_NOTHROW(cfg.validate());
}
