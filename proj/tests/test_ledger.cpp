#include <doctest.h>

#include <thread>
#include <vector>

#include "evoroute/ledger.hpp"

using namespace evoroute;

TEST_CASE("record_call cost arithmetic") {
  CostLedger ledger;
  CHECK(ledger.total_cost() == 0.0);

  ledger.record_call(ModelChoice::Large);
  CHECK(ledger.total_cost() == 1.0);

  CostLedger eight;
  for (int i = 0; i < 8; ++i) eight.record_call(ModelChoice::Small);
  CHECK(eight.total_cost() == 1.0);  // exact: 8 * 0.125
  CHECK(eight.small_calls() == 8);
  CHECK(eight.large_calls() == 0);
}

TEST_CASE("efficiency reproduces the reference cells") {
  CHECK(std::abs(efficiency(73.6, 2.08) - 35.4) < 0.05);
  CHECK(std::abs(efficiency(80.1, 0.37) - 216.5) < 0.1);
  CHECK(efficiency(100.0, 1.0) == doctest::Approx(100.0));
  CHECK_THROWS_AS(efficiency(50.0, 0.0), UndefinedEfficiency);
}

TEST_CASE("efficiency is scale-consistent") {
  CHECK(efficiency(2 * 61.0, 2 * 1.7) == doctest::Approx(efficiency(61.0, 1.7)));
}

TEST_CASE("ledger totals are reproducible from the event log") {
  CostLedger ledger;
  for (int i = 0; i < 13; ++i)
    ledger.record_call(i % 3 == 0 ? ModelChoice::Large : ModelChoice::Small,
                       {"p" + std::to_string(i), i, i % 4});
  uint64_t s = 0, l = 0;
  for (const auto& ev : ledger.events()) (ev.model == ModelChoice::Small ? s : l)++;
  CHECK(s == ledger.small_calls());
  CHECK(l == ledger.large_calls());
  CHECK(ledger.total_cost() ==
        doctest::Approx(0.125 * static_cast<double>(s) + 1.0 * static_cast<double>(l)));
}

TEST_CASE("concurrent appends keep a total order") {
  CostLedger ledger;
  constexpr int kThreads = 8, kPer = 500;
  std::vector<std::thread> workers;
  for (int t = 0; t < kThreads; ++t)
    workers.emplace_back([&ledger, t] {
      for (int i = 0; i < kPer; ++i)
        ledger.record_call(t % 2 ? ModelChoice::Small : ModelChoice::Large);
    });
  for (auto& w : workers) w.join();

  auto events = ledger.events();
  REQUIRE(events.size() == kThreads * kPer);
  for (size_t i = 0; i < events.size(); ++i) CHECK(events[i].seq == i);
  CHECK(ledger.small_calls() + ledger.large_calls() == kThreads * kPer);
}

TEST_CASE("build_report ratio and efficiency") {
  CostLedger ledger;
  for (int i = 0; i < 42; ++i) ledger.record_call(ModelChoice::Small);
  for (int i = 0; i < 58; ++i) ledger.record_call(ModelChoice::Large);
  std::vector<ProblemOutcome> outcomes(100);
  for (size_t i = 0; i < outcomes.size(); ++i) {
    outcomes[i].problem_id = "p" + std::to_string(i);
    outcomes[i].solved = i < 70;
  }
  auto r = build_report(ledger, outcomes, "probe");
  CHECK(r.ratio_small == 42);
  CHECK(r.ratio_large == 58);
  CHECK(r.ratio_small + r.ratio_large == 100);
  CHECK(r.cost_total == doctest::Approx(42 * 0.125 + 58.0));
  CHECK(r.accuracy_percent == doctest::Approx(70.0));
  CHECK(r.efficiency ==
        doctest::Approx(r.accuracy_percent / r.cost_per_problem));
}

TEST_CASE("build_report: all-small all-solved efficiency formula") {
  CostLedger ledger;
  const int calls = 24;
  for (int i = 0; i < calls; ++i) ledger.record_call(ModelChoice::Small);
  std::vector<ProblemOutcome> outcomes(8);
  for (auto& o : outcomes) o.solved = true;
  auto r = build_report(ledger, outcomes, "small");
  CHECK(r.accuracy_percent == doctest::Approx(100.0));
  CHECK(r.efficiency ==
        doctest::Approx(100.0 / (0.125 * calls / 8.0)));
}

TEST_CASE("build_report rejects zero problems") {
  CostLedger ledger;
  CHECK_THROWS_AS(build_report(ledger, {}, "x"), InvalidInput);
}

TEST_CASE("csv formatting uses table rounding") {
  RunReport r;
  r.configuration = "adaptive";
  r.ratio_small = 42;
  r.ratio_large = 58;
  r.cost_total = 208.123;
  r.cost_per_problem = 2.0812;
  r.accuracy_percent = 73.61;
  r.efficiency = 35.37;
  CHECK(report_csv_row(r) == "adaptive,42,58,208.12,2.08,73.6,35.4\n");
}

TEST_CASE("pareto dominance marking") {
  std::vector<ParetoPoint> pts = {
      {"a", 1.0, 80.0, false},
      {"b", 2.0, 70.0, false},  // dominated by a
      {"c", 0.5, 60.0, false},
      {"d", 3.0, 90.0, false},
  };
  mark_dominated(pts);
  CHECK_FALSE(pts[0].dominated);
  CHECK(pts[1].dominated);
  CHECK_FALSE(pts[2].dominated);
  CHECK_FALSE(pts[3].dominated);

  auto csv = pareto_csv(pts);
  CHECK(csv.find("b,2.00,70.0,1") != std::string::npos);
  CHECK(csv.find("a,1.00,80.0,0") != std::string::npos);
}
