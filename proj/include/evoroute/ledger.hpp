#pragma once

/**
 * Exact compute-cost accounting. One large-model call costs 1.0 unit, one
 * small-model call 0.125 units (an exact binary fraction, so totals stay
 * exact for any call count). Every call appends an event; totals are
 * always reproducible from the event log.
 *
 * Appends may come from concurrent workers; the sequence number gives them
 * a total order per run. Timestamps are logical (the sequence itself) so
 * run artifacts are bit-reproducible.
 */

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <string>
#include <vector>

#include "evoroute/common.hpp"

namespace evoroute {

constexpr double kUnitCostSmall = 0.125;
constexpr double kUnitCostLarge = 1.0;

inline double unit_cost(ModelChoice m) {
  return m == ModelChoice::Small ? kUnitCostSmall : kUnitCostLarge;
}

struct CallContext {
  std::string problem_id;
  int iteration = 0;
  int slot = 0;
};

struct CallEvent {
  ModelChoice model = ModelChoice::Small;
  std::string problem_id;
  int iteration = 0;
  int slot = 0;
  uint64_t seq = 0;  // logical timestamp
};

class CostLedger {
 public:
  CostLedger() = default;
  CostLedger(const CostLedger& other) {
    std::lock_guard<std::mutex> lock(other.mu_);
    events_ = other.events_;
    small_calls_ = other.small_calls_;
    large_calls_ = other.large_calls_;
  }
  CostLedger& operator=(const CostLedger& other) {
    if (this != &other) {
      auto snap = other.save();
      restore_from(snap);
    }
    return *this;
  }

  void record_call(ModelChoice model, const CallContext& ctx = {}) {
    std::lock_guard<std::mutex> lock(mu_);
    CallEvent ev;
    ev.model = model;
    ev.problem_id = ctx.problem_id;
    ev.iteration = ctx.iteration;
    ev.slot = ctx.slot;
    ev.seq = static_cast<uint64_t>(events_.size());
    events_.push_back(std::move(ev));
    (model == ModelChoice::Small ? small_calls_ : large_calls_) += 1;
  }

  uint64_t small_calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return small_calls_;
  }
  uint64_t large_calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return large_calls_;
  }
  uint64_t total_calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return small_calls_ + large_calls_;
  }

  double total_cost() const {
    std::lock_guard<std::mutex> lock(mu_);
    return kUnitCostSmall * static_cast<double>(small_calls_) +
           kUnitCostLarge * static_cast<double>(large_calls_);
  }

  std::vector<CallEvent> events() const {
    std::lock_guard<std::mutex> lock(mu_);
    return events_;
  }

  struct State {
    std::vector<CallEvent> events;
    uint64_t small_calls = 0;
    uint64_t large_calls = 0;
  };

  State save() const {
    std::lock_guard<std::mutex> lock(mu_);
    return {events_, small_calls_, large_calls_};
  }

  void restore_from(const State& s) {
    std::lock_guard<std::mutex> lock(mu_);
    events_ = s.events;
    small_calls_ = s.small_calls;
    large_calls_ = s.large_calls;
  }

 private:
  mutable std::mutex mu_;
  std::vector<CallEvent> events_;
  uint64_t small_calls_ = 0;
  uint64_t large_calls_ = 0;
};

// ============================================================================
// Reporting
// ============================================================================

// accuracy is in percent; cost must be positive.
inline double efficiency(double accuracy_percent, double cost) {
  if (!(cost > 0.0))
    throw UndefinedEfficiency("efficiency: cost must be > 0");
  return accuracy_percent / cost;
}

struct ProblemOutcome {
  std::string problem_id;
  bool solved = false;
  double best_pass_rate = 0.0;
};

struct RunReport {
  std::string configuration;
  size_t problems = 0;
  uint64_t small_calls = 0;
  uint64_t large_calls = 0;
  int ratio_small = 0;  // percent of calls, rounded
  int ratio_large = 0;
  double cost_total = 0.0;
  double cost_per_problem = 0.0;
  double accuracy_percent = 0.0;
  double efficiency = 0.0;  // accuracy_percent / cost_per_problem
};

inline RunReport build_report(const CostLedger& ledger,
                              const std::vector<ProblemOutcome>& outcomes,
                              const std::string& configuration) {
  if (outcomes.empty())
    throw InvalidInput("build_report: no evaluated problems");

  RunReport r;
  r.configuration = configuration;
  r.problems = outcomes.size();
  r.small_calls = ledger.small_calls();
  r.large_calls = ledger.large_calls();

  const uint64_t total_calls = r.small_calls + r.large_calls;
  if (total_calls > 0) {
    r.ratio_small = static_cast<int>(std::lround(
        100.0 * static_cast<double>(r.small_calls) / static_cast<double>(total_calls)));
    r.ratio_large = static_cast<int>(std::lround(
        100.0 * static_cast<double>(r.large_calls) / static_cast<double>(total_calls)));
  }

  r.cost_total = ledger.total_cost();
  r.cost_per_problem = r.cost_total / static_cast<double>(r.problems);

  size_t solved = 0;
  for (const auto& o : outcomes) solved += o.solved ? 1 : 0;
  r.accuracy_percent =
      100.0 * static_cast<double>(solved) / static_cast<double>(r.problems);

  // Efficiency is reported on the per-problem cost scale.
  r.efficiency =
      r.cost_per_problem > 0.0 ? efficiency(r.accuracy_percent, r.cost_per_problem)
                               : 0.0;
  return r;
}

inline std::string report_csv_header() {
  return "configuration,ratio_s,ratio_l,cost_total,cost_per_problem,accuracy,"
         "efficiency\n";
}

// Display rounding: one decimal for accuracy/efficiency, two for costs.
inline std::string report_csv_row(const RunReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.2f,%.2f,%.1f,%.1f\n",
                r.configuration.c_str(), r.ratio_small, r.ratio_large,
                r.cost_total, r.cost_per_problem, r.accuracy_percent,
                r.efficiency);
  return buf;
}

// ============================================================================
// Pareto frontier over (cost, accuracy)
// ============================================================================

struct ParetoPoint {
  std::string policy;
  double cost = 0.0;       // per problem
  double accuracy = 0.0;   // percent
  bool dominated = false;
};

// A point is dominated when another costs no more, scores no less, and
// improves at least one of the two.
inline void mark_dominated(std::vector<ParetoPoint>& points) {
  for (auto& p : points) {
    p.dominated = false;
    for (const auto& q : points) {
      if (&p == &q) continue;
      const bool no_worse = q.cost <= p.cost && q.accuracy >= p.accuracy;
      const bool better = q.cost < p.cost || q.accuracy > p.accuracy;
      if (no_worse && better) {
        p.dominated = true;
        break;
      }
    }
  }
}

inline std::string pareto_csv(std::vector<ParetoPoint> points) {
  mark_dominated(points);
  std::string out = "policy,cost,accuracy,dominated\n";
  for (const auto& p : points) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.1f,%d\n", p.policy.c_str(),
                  p.cost, p.accuracy, p.dominated ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace evoroute
