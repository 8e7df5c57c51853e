#pragma once

/**
 * Shared vocabulary for the routing library: the two model tiers, the
 * 4-metric feature vector consumed by every router, and the error types
 * raised across module boundaries.
 */

#include <array>
#include <stdexcept>
#include <string>

namespace evoroute {

// ============================================================================
// Model tiers
// ============================================================================

enum class ModelChoice { Small, Large };

inline const char* to_string(ModelChoice m) {
  return m == ModelChoice::Small ? "small" : "large";
}

inline ModelChoice model_choice_from_string(const std::string& s) {
  if (s == "small") return ModelChoice::Small;
  if (s == "large") return ModelChoice::Large;
  throw std::invalid_argument("unknown model choice: " + s);
}

// Feature vector fed to routers, fixed order: lgc, mc, tc, bwc.
using FeatureVector = std::array<double, 4>;

// ============================================================================
// Errors
// ============================================================================

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition violations on operation inputs.
struct InvalidInput : Error {
  using Error::Error;
};

// Generation endpoint failures (transport, protocol).
struct BackendError : Error {
  using Error::Error;
};

// Endpoint reachable but does not expose token log-probabilities; the
// whole method depends on them, so this is not retryable.
struct CapabilityError : BackendError {
  using BackendError::BackendError;
};

struct TimeoutError : BackendError {
  using BackendError::BackendError;
};

// Sandbox cannot be brought up at all (as opposed to a program failing).
struct EvaluatorUnavailable : Error {
  using Error::Error;
};

// Warm-up aborted mid-way; message names the offending problem id.
struct WarmupIncomplete : Error {
  using Error::Error;
};

// Malformed input file; message names the line number.
struct ParseError : Error {
  using Error::Error;
};

// Parent sampling from an empty archive.
struct NoParentError : Error {
  using Error::Error;
};

// Efficiency is undefined at zero cost.
struct UndefinedEfficiency : Error {
  using Error::Error;
};

}  // namespace evoroute
