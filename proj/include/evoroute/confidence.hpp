#pragma once

/**
 * Intrinsic uncertainty metrics computed from per-token top-k
 * log-probabilities. A generation stream is reduced to four scalars:
 *
 *   mc  - mean token confidence over the whole sequence
 *   lgc - minimum sliding-window mean (the weakest reasoning span)
 *   tc  - mean over the final tail window (stability of the conclusion)
 *   bwc - mean of the lowest K% of window scores (systemic vs transient noise)
 *
 * Token confidence is the negative mean log-probability of the top-k
 * candidates at a position, so larger values mean a more peaked
 * distribution and a more confident model. All four metrics inherit that
 * polarity.
 *
 * Everything here is a pure function over immutable inputs.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "evoroute/common.hpp"

namespace evoroute {

// ============================================================================
// Types
// ============================================================================

// Top-k log-probabilities at one output position. Natural log, sorted
// non-increasing, every entry <= 0.
struct TokenTopK {
  size_t position = 0;
  std::vector<double> logprobs;
};

struct ConfidenceConfig {
  int top_k = 20;            // depth requested from the serving stack
  int group_window = 2048;   // sliding-window width W
  int tail_window = 2048;    // tokens in the tail span
  double bottom_percent = 10.0;  // K, in (0, 100]

  void validate() const {
    if (top_k < 1) throw InvalidInput("confidence: top_k must be >= 1");
    if (group_window < 1) throw InvalidInput("confidence: group_window must be >= 1");
    if (tail_window < 1) throw InvalidInput("confidence: tail_window must be >= 1");
    if (!(bottom_percent > 0.0) || bottom_percent > 100.0)
      throw InvalidInput("confidence: bottom_percent must be in (0, 100]");
  }
};

struct ConfidenceVector {
  double mc = 0.0;
  double lgc = 0.0;
  double tc = 0.0;
  double bwc = 0.0;
  size_t token_count = 0;

  // Router feature order: lgc, mc, tc, bwc.
  FeatureVector features() const { return {lgc, mc, tc, bwc}; }
};

// ============================================================================
// Operations
// ============================================================================

// c = -(1/k) * sum(logprobs). Non-negative for any valid top-k list.
inline double token_confidence(const TokenTopK& topk) {
  if (topk.logprobs.empty())
    throw InvalidInput("token_confidence: empty logprob list");
  double sum = 0.0;
  for (double lp : topk.logprobs) sum += lp;
  return -sum / static_cast<double>(topk.logprobs.size());
}

// Sliding-window means, stride 1. A sequence shorter than the window
// collapses to a single window covering the whole sequence, so the group
// score is always defined.
inline std::vector<double> group_confidences(const std::vector<double>& tokens,
                                             int window) {
  if (tokens.empty())
    throw InvalidInput("group_confidences: empty token confidence list");
  if (window < 1) throw InvalidInput("group_confidences: window must be >= 1");

  const size_t t = tokens.size();
  const size_t w = static_cast<size_t>(window);

  std::vector<double> prefix(t + 1, 0.0);
  for (size_t i = 0; i < t; ++i) prefix[i + 1] = prefix[i] + tokens[i];

  if (t < w) return {prefix[t] / static_cast<double>(t)};

  std::vector<double> means;
  means.reserve(t - w + 1);
  for (size_t i = 0; i + w <= t; ++i)
    means.push_back((prefix[i + w] - prefix[i]) / static_cast<double>(w));
  return means;
}

inline ConfidenceVector confidence_vector(const std::vector<TokenTopK>& tokens,
                                          const ConfidenceConfig& cfg) {
  cfg.validate();
  if (tokens.empty()) throw InvalidInput("confidence_vector: empty token stream");

  const size_t t = tokens.size();
  std::vector<double> conf(t);
  for (size_t i = 0; i < t; ++i) conf[i] = token_confidence(tokens[i]);

  ConfidenceVector out;
  out.token_count = t;

  double total = 0.0;
  for (double c : conf) total += c;
  out.mc = total / static_cast<double>(t);

  const std::vector<double> windows = group_confidences(conf, cfg.group_window);
  out.lgc = *std::min_element(windows.begin(), windows.end());

  const size_t tail = std::min<size_t>(static_cast<size_t>(cfg.tail_window), t);
  double tail_sum = 0.0;
  for (size_t i = t - tail; i < t; ++i) tail_sum += conf[i];
  out.tc = tail_sum / static_cast<double>(tail);

  // Bottom-K%: mean of the lowest ceil(K/100 * #windows) window scores,
  // never fewer than one window.
  const size_t n_windows = windows.size();
  size_t take = static_cast<size_t>(
      std::ceil(cfg.bottom_percent / 100.0 * static_cast<double>(n_windows)));
  take = std::clamp<size_t>(take, 1, n_windows);

  std::vector<double> sorted(windows);
  std::nth_element(sorted.begin(), sorted.begin() + (take - 1), sorted.end());
  double bottom_sum = 0.0;
  for (size_t i = 0; i < take; ++i) bottom_sum += sorted[i];
  // nth_element leaves [0, take) as the smallest `take` values.
  out.bwc = bottom_sum / static_cast<double>(take);

  return out;
}

}  // namespace evoroute
