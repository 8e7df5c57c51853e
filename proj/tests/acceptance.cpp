// Acceptance suite: one self-contained check per criterion, one PASS/FAIL
// line each, nonzero exit if any fails. Checks 1-7 validate the core
// machinery against independent oracles; 8-10 exercise the full simulated
// pipeline end to end with no network access.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>
#include <unistd.h>
#include <cstdarg>

#include "evoroute/cli.hpp"
#include "evoroute/confidence.hpp"
#include "evoroute/evolution.hpp"
#include "evoroute/hoeffding.hpp"
#include "evoroute/ledger.hpp"
#include "evoroute/router.hpp"
#include "evoroute/rng.hpp"
#include "evoroute/serialize.hpp"
#include "evoroute/tree.hpp"
#include "oracles.hpp"

using namespace evoroute;
namespace fs = std::filesystem;

namespace {

struct Check {
  std::string name;
  std::function<bool(std::string&)> fn;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// 1 + 2: confidence oracle equivalence and metric ordering
// ---------------------------------------------------------------------------

struct ConfidenceStudy {
  bool ran = false;
  double max_abs_err = 0.0;
  bool ordering_ok = true;
  bool tail_identity_ok = true;
  double elapsed_s = 0.0;
  size_t cases = 0;
};

ConfidenceStudy& confidence_study() {
  static ConfidenceStudy study;
  if (study.ran) return study;
  study.ran = true;

  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20260808);
  const int kCases = 1000;
  for (int i = 0; i < kCases; ++i) {
    const size_t t = 1 + rng.below(5000);
    const int k = std::array<int, 3>{1, 5, 20}[rng.below(3)];
    auto stream = oracle::random_stream(rng, t, k);

    ConfidenceConfig cfg;
    cfg.top_k = k;
    // Window sizes cover both the T < W collapse and long-window regimes.
    cfg.group_window = 1 + static_cast<int>(rng.below(512));
    if (rng.bernoulli(0.1)) cfg.group_window = static_cast<int>(t) + 1 +
                                               static_cast<int>(rng.below(64));
    cfg.tail_window = 1 + static_cast<int>(rng.below(4096));
    cfg.bottom_percent = rng.uniform(0.5, 100.0);

    const auto got = confidence_vector(stream, cfg);
    const auto want = oracle::conf_brute(stream, cfg);
    study.max_abs_err = std::max({study.max_abs_err, std::fabs(got.mc - want.mc),
                                  std::fabs(got.lgc - want.lgc),
                                  std::fabs(got.tc - want.tc),
                                  std::fabs(got.bwc - want.bwc)});

    std::vector<double> conf;
    for (const auto& tok : stream) conf.push_back(token_confidence(tok));
    const auto windows = group_confidences(conf, cfg.group_window);
    const double wmean =
        std::accumulate(windows.begin(), windows.end(), 0.0) / windows.size();
    if (!(got.lgc <= got.bwc + 1e-12 && got.bwc <= wmean + 1e-12))
      study.ordering_ok = false;
    if (static_cast<size_t>(cfg.tail_window) >= t &&
        std::fabs(got.tc - got.mc) > 1e-12)
      study.tail_identity_ok = false;
    ++study.cases;
  }
  study.elapsed_s = seconds_since(t0);
  return study;
}

bool check_confidence_oracle(std::string& detail) {
  const auto& s = confidence_study();
  detail = fmt("%zu streams, max |impl - oracle| = %.2e, %.1fs", s.cases,
               s.max_abs_err, s.elapsed_s);
  return s.cases == 1000 && s.max_abs_err < 1e-9 && s.elapsed_s < 10.0;
}

bool check_metric_ordering(std::string& detail) {
  const auto& s = confidence_study();
  detail = fmt("lgc <= bwc <= window mean on %zu cases; tc == mc whenever "
               "tail covers the stream",
               s.cases);
  return s.ordering_ok && s.tail_identity_ok;
}

// ---------------------------------------------------------------------------
// 3: static tree vs exhaustive split oracle
// ---------------------------------------------------------------------------

bool check_static_tree_oracle(std::string& detail) {
  Rng rng(31337);
  int matched = 0;
  const int kDatasets = 100;
  for (int rep = 0; rep < kDatasets; ++rep) {
    const size_t n = 2 + rng.below(199);  // n <= 200
    std::vector<LabeledExample> data(n);
    for (auto& ex : data) {
      for (auto& f : ex.features) {
        f = rng.uniform(0.0, 10.0);
        if (rng.bernoulli(0.35)) f = std::floor(f * 2.0) / 2.0;  // ties
      }
      const double score = ex.features[0] + 0.7 * ex.features[1] -
                           0.4 * ex.features[3] + rng.uniform(-3.0, 3.0);
      ex.label = score > 6.5 ? 1 : 0;
    }
    TreeFitOptions opt;
    opt.max_depth = 1 + static_cast<int>(rng.below(4));  // depth <= 4
    const auto tree = DecisionTree::fit(data, opt);

    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const auto want = oracle::xfit(data, idx, 0, opt.max_depth,
                                   opt.min_samples_split, opt.min_samples_leaf);
    if (oracle::same_structure(tree.root(), want.get())) ++matched;
  }

  const std::vector<LabeledExample> xor_data = {
      {{0.0, 0.0, 0.5, 0.5}, 0},
      {{0.0, 1.0, 0.5, 0.5}, 1},
      {{1.0, 0.0, 0.5, 0.5}, 1},
      {{1.0, 1.0, 0.5, 0.5}, 0},
  };
  TreeFitOptions xor_opt;
  xor_opt.max_depth = 2;
  const double xor_acc =
      training_accuracy(DecisionTree::fit(xor_data, xor_opt), xor_data);

  detail = fmt("%d/%d datasets match the exhaustive oracle node-for-node; "
               "XOR accuracy %.0f%% at depth 2",
               matched, kDatasets, 100.0 * xor_acc);
  return matched == kDatasets && xor_acc == 1.0;
}

// ---------------------------------------------------------------------------
// 4: Hoeffding bound arithmetic
// ---------------------------------------------------------------------------

bool check_hoeffding_bound(std::string& detail) {
  const double eps = hoeffding_bound(1.0, 0.05, 100);
  const bool value_ok = std::fabs(eps - 0.1224) <= 1e-4;
  bool monotone = true;
  double prev = hoeffding_bound(1.0, 0.05, 9);
  for (int64_t n = 10; n <= 100000; ++n) {
    const double e = hoeffding_bound(1.0, 0.05, n);
    if (!(e < prev)) {
      monotone = false;
      break;
    }
    prev = e;
  }
  detail = fmt("epsilon(R=1, delta=0.05, n=100) = %.6f; strictly decreasing "
               "over n in [10, 1e5]",
               eps);
  return value_ok && monotone;
}

// ---------------------------------------------------------------------------
// 5: drift recovery, 10 seeds
// ---------------------------------------------------------------------------

bool check_drift_recovery(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_hat = 1.0, best_frozen = 0.0;
  bool all_ok = true;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng stream_rng(9000 + seed);
    Rng warm_rng(500 + seed);
    std::vector<LabeledExample> warm;
    for (int i = 0; i < 500; ++i) {
      auto [x, y] = oracle::stream_example(warm_rng, false);
      warm.push_back({x, y});
    }
    const auto frozen = DecisionTree::fit(warm);

    HoeffdingAdaptiveTree hat;
    std::deque<int> hat_window, frozen_window;
    for (int t = 0; t < 3500; ++t) {
      auto [x, y] = oracle::stream_example(stream_rng, t >= 2000);
      hat_window.push_back(hat.learn_one(x, y).label == y ? 1 : 0);
      frozen_window.push_back(frozen.predict(x).label == y ? 1 : 0);
      if (hat_window.size() > 500) {
        hat_window.pop_front();
        frozen_window.pop_front();
      }
    }
    const double hat_acc =
        std::accumulate(hat_window.begin(), hat_window.end(), 0.0) / 500.0;
    const double frozen_acc =
        std::accumulate(frozen_window.begin(), frozen_window.end(), 0.0) / 500.0;
    worst_hat = std::min(worst_hat, hat_acc);
    best_frozen = std::max(best_frozen, frozen_acc);
    if (!(hat_acc >= 0.8 && frozen_acc <= 0.4)) all_ok = false;
  }
  const double elapsed = seconds_since(t0);
  detail = fmt("10 seeds: adaptive windowed accuracy >= %.3f, frozen <= %.3f "
               "at t=3500, %.1fs",
               worst_hat, best_frozen, elapsed);
  return all_ok && elapsed < 30.0;
}

// ---------------------------------------------------------------------------
// 6: labeling-table fidelity
// ---------------------------------------------------------------------------

bool check_labeling_table(std::string& detail) {
  struct Row {
    ModelChoice current;
    double pass;
    bool other;
    int want;
  };
  const Row rows[8] = {
      {ModelChoice::Small, 1.0, true, 0},  {ModelChoice::Small, 1.0, false, 0},
      {ModelChoice::Small, 0.4, true, 1},  {ModelChoice::Small, 0.4, false, 0},
      {ModelChoice::Large, 1.0, true, 0},  {ModelChoice::Large, 1.0, false, 1},
      {ModelChoice::Large, 0.2, true, 0},  {ModelChoice::Large, 0.2, false, 0},
  };
  int ok = 0;
  for (const auto& row : rows)
    ok += label_example(row.current, row.pass, row.other) == row.want;
  detail = fmt("%d/8 input cells reproduce the switching table", ok);
  return ok == 8;
}

// ---------------------------------------------------------------------------
// 7: ledger / efficiency arithmetic
// ---------------------------------------------------------------------------

bool check_ledger_arithmetic(std::string& detail) {
  const double lcb = efficiency(73.6, 2.08);
  const double mbpp = efficiency(80.1, 0.37);
  CostLedger eight;
  for (int i = 0; i < 8; ++i) eight.record_call(ModelChoice::Small);
  CostLedger one;
  one.record_call(ModelChoice::Large);
  detail = fmt("eff(73.6, 2.08) = %.4f, eff(80.1, 0.37) = %.4f, "
               "8 small calls = %.3f large-call units",
               lcb, mbpp, eight.total_cost());
  return std::fabs(lcb - 35.4) <= 0.05 && std::fabs(mbpp - 216.5) <= 0.1 &&
         eight.total_cost() == one.total_cost();
}

// ---------------------------------------------------------------------------
// 8: end-to-end simulated Pareto study
// ---------------------------------------------------------------------------

struct PolicyStats {
  double accuracy = 0.0;
  double efficiency = 0.0;
  double large_fraction = 0.0;
};

std::vector<Problem> study_problems(int n) {
  std::vector<Problem> problems;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "p%04d", i);
    Problem p;
    p.id = id;
    p.statement = std::string("statement ") + id;
    p.tests = {{"", "", "y"}};
    problems.push_back(std::move(p));
  }
  return problems;
}

// Difficulty drifts mid-run: an easy first phase, then a phase the small
// model almost never solves but the large one almost always does.
SimWorldConfig study_world() {
  SimWorldConfig w;
  w.seed = 260808;
  w.token_count = 8;
  w.layout = DifficultyLayout::TwoPhase;
  w.phase1_lo = 0.0;
  w.phase1_hi = 0.45;
  w.phase2_lo = 0.5;
  w.phase2_hi = 0.88;
  w.small_easy = 0.97;
  w.small_hard = 0.004;
  w.small_cut = 0.5;
  w.large_easy = 0.995;
  w.large_hard = 0.995;
  w.large_cut = 0.9;
  return w;
}

EvolutionConfig study_evolution(uint64_t seed) {
  EvolutionConfig cfg;
  cfg.max_iterations = 2;
  cfg.population_size = 1;
  cfg.islands = 1;
  cfg.seed = seed;
  cfg.stop_on_solve = false;
  return cfg;
}

PolicyStats run_study_policy(const SimWorld& world,
                             const std::vector<Problem>& problems,
                             Router router, uint64_t run_seed) {
  SimBackend backend(world, run_seed, "evolve");
  SimEvaluator evaluator(world, run_seed);
  ConfidenceConfig conf_cfg;
  CostLedger ledger;
  Rng rng(run_seed);
  std::vector<ProblemOutcome> outcomes;
  const EvolutionConfig cfg = study_evolution(run_seed);
  for (const auto& problem : problems) {
    EvolutionEngine engine(cfg, conf_cfg, router, backend, evaluator, ledger,
                           rng);
    outcomes.push_back(engine.run(problem));
  }
  const RunReport report = build_report(ledger, outcomes, "study");
  PolicyStats stats;
  stats.accuracy = report.accuracy_percent;
  stats.efficiency = report.efficiency;
  stats.large_fraction =
      static_cast<double>(report.large_calls) /
      static_cast<double>(report.small_calls + report.large_calls);
  return stats;
}

bool check_sim_pareto(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto problems = study_problems(500);
  const SimWorld world(study_world(), [&] {
    std::vector<std::string> ids;
    for (const auto& p : problems) ids.push_back(p.id);
    return ids;
  }());

  double adaptive_eff = 0.0, random_eff = 0.0;
  double adaptive_acc = 0.0, small_acc = 0.0, large_acc = 0.0;
  double adaptive_ratio = 0.0, random_ratio = 0.0;
  const int kSeeds = 10;
  for (uint64_t seed = 1; seed <= kSeeds; ++seed) {
    // Warm-up under the same world, separate draw namespace.
    SimBackend warm_backend(world, seed, "warmup");
    SimEvaluator warm_eval(world, seed);
    WarmupOptions wopt;
    wopt.seed = seed;
    const auto warm = run_warmup(problems, 50, warm_backend, warm_eval, wopt);

    Router adaptive = Router::adaptive();
    replay_warmup_into(adaptive, warm.records);
    const auto a = run_study_policy(world, problems, std::move(adaptive), seed);

    // Random baseline pinned to the adaptive run's realized call mix.
    const auto r = run_study_policy(world, problems,
                                    Router::random(a.large_fraction), seed);
    const auto s =
        run_study_policy(world, problems, Router::always_small(), seed);
    const auto l =
        run_study_policy(world, problems, Router::always_large(), seed);

    adaptive_eff += a.efficiency;
    random_eff += r.efficiency;
    adaptive_acc += a.accuracy;
    small_acc += s.accuracy;
    large_acc += l.accuracy;
    adaptive_ratio += a.large_fraction;
    random_ratio += r.large_fraction;
  }
  adaptive_eff /= kSeeds;
  random_eff /= kSeeds;
  adaptive_acc /= kSeeds;
  small_acc /= kSeeds;
  large_acc /= kSeeds;
  adaptive_ratio /= kSeeds;
  random_ratio /= kSeeds;

  const double elapsed = seconds_since(t0);
  const bool ratio_matched = std::fabs(adaptive_ratio - random_ratio) < 0.02;
  const bool eff_ok = adaptive_eff >= 1.2 * random_eff;
  const bool between = small_acc < adaptive_acc && adaptive_acc < large_acc;
  detail = fmt("eff adaptive/random = %.1f/%.1f (%.2fx), accuracy "
               "small/adaptive/large = %.1f/%.1f/%.1f, S:L %.0f:%.0f vs "
               "%.0f:%.0f, %.0fs",
               adaptive_eff, random_eff, adaptive_eff / random_eff, small_acc,
               adaptive_acc, large_acc, 100 * (1 - adaptive_ratio),
               100 * adaptive_ratio, 100 * (1 - random_ratio),
               100 * random_ratio, elapsed);
  return eff_ok && between && ratio_matched && elapsed < 120.0;
}

// ---------------------------------------------------------------------------
// 9 + 10: whole-run determinism and replay identity through the CLI layer
// ---------------------------------------------------------------------------

struct CliRunContext {
  fs::path root;
  std::string problems_path;
  std::string config_path;
  std::string warm_dir;
  bool ready = false;
};

CliRunContext& cli_context() {
  static CliRunContext ctx;
  if (ctx.ready) return ctx;
  ctx.root = fs::temp_directory_path() /
             ("evoroute-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(ctx.root);
  fs::create_directories(ctx.root);

  ctx.problems_path = (ctx.root / "problems.jsonl").string();
  {
    std::ofstream out(ctx.problems_path);
    for (int i = 0; i < 12; ++i) {
      char id[16];
      std::snprintf(id, sizeof(id), "p%04d", i);
      nlohmann::json j{{"id", id},
                       {"statement", std::string("statement ") + id},
                       {"tests", nlohmann::json::array(
                                     {{{"input", ""}, {"expected", "y"}}})}};
      out << j.dump() << "\n";
    }
  }
  ctx.config_path = (ctx.root / "config.json").string();
  {
    nlohmann::json j{
        {"general", {{"random_seed", 42}, {"max_iterations", 2}}},
        {"backend",
         {{"kind", "sim"},
          {"sim",
           {{"seed", 7},
            {"token_count", 4},
            {"small_easy", 0.9},
            {"small_hard", 0.02},
            {"large_easy", 0.97},
            {"large_hard", 0.97}}}}},
        {"evolution", {{"population_size", 2}, {"islands", 2}}},
    };
    std::ofstream out(ctx.config_path);
    out << j.dump(2);
  }

  cli::WarmupArgs wargs;
  wargs.config_path = ctx.config_path;
  wargs.problems_path = ctx.problems_path;
  wargs.out_dir = (ctx.root / "warm").string();
  wargs.n = 10;
  cli::cmd_warmup(wargs);
  ctx.warm_dir = wargs.out_dir;
  ctx.ready = true;
  return ctx;
}

std::string slurp_file(const fs::path& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

bool check_determinism(std::string& detail) {
  auto& ctx = cli_context();
  cli::EvolveArgs args;
  args.config_path = ctx.config_path;
  args.problems_path = ctx.problems_path;
  args.policy = "adaptive";
  args.warmup_dir = ctx.warm_dir;

  args.out_dir = (ctx.root / "run-a").string();
  cli::cmd_evolve(args);
  args.out_dir = (ctx.root / "run-b").string();
  cli::cmd_evolve(args);

  size_t files = 0;
  bool identical = true;
  for (const char* name : {"report.csv", "report.json", "evolve_trace.jsonl",
                           "effective_config.json"}) {
    ++files;
    if (slurp_file(ctx.root / "run-a" / name) !=
        slurp_file(ctx.root / "run-b" / name))
      identical = false;
  }
  for (const auto& entry :
       fs::directory_iterator(ctx.root / "run-a" / "checkpoints")) {
    ++files;
    const auto name = entry.path().filename();
    if (!fs::exists(ctx.root / "run-b" / "checkpoints" / name) ||
        slurp_file(entry.path()) !=
            slurp_file(ctx.root / "run-b" / "checkpoints" / name))
      identical = false;
  }
  detail = fmt("two identical-seed runs: %zu artifact files byte-compared",
               files);
  return identical && files > 10;
}

bool check_replay_identity(std::string& detail) {
  auto& ctx = cli_context();
  const auto original =
      cli::load_report_json((ctx.root / "run-a").string());

  cli::ReplayArgs rargs;
  rargs.config_path = ctx.config_path;
  rargs.trace_path = (ctx.root / "run-a" / "evolve_trace.jsonl").string();
  rargs.policy = "adaptive";
  rargs.warmup_dir = ctx.warm_dir;
  const auto replay = cli::cmd_replay(rargs);

  const bool ok =
      !replay.partial && replay.agreement == 1.0 &&
      replay.report.cost_total == original.at("cost_total").get<double>() &&
      replay.report.accuracy_percent ==
          original.at("accuracy_percent").get<double>() &&
      replay.report.small_calls == original.at("small_calls").get<uint64_t>() &&
      replay.report.large_calls == original.at("large_calls").get<uint64_t>() &&
      replay.report.problems == original.at("problems").get<size_t>();
  detail = fmt("decision agreement %.3f; cost %.3f == %.3f; accuracy %.1f == "
               "%.1f",
               replay.agreement, replay.report.cost_total,
               original.at("cost_total").get<double>(),
               replay.report.accuracy_percent,
               original.at("accuracy_percent").get<double>());
  return ok;
}

}  // namespace

int main() {
  const std::vector<Check> checks = {
      {"confidence metrics match the brute-force oracle to 1e-9", check_confidence_oracle},
      {"metric ordering invariants hold on every stream", check_metric_ordering},
      {"static tree reproduces the exhaustive split search", check_static_tree_oracle},
      {"Hoeffding bound arithmetic and monotonicity", check_hoeffding_bound},
      {"adaptive tree recovers from label-flip drift", check_drift_recovery},
      {"switching-table labeling is exact", check_labeling_table},
      {"ledger and efficiency arithmetic", check_ledger_arithmetic},
      {"simulated Pareto: adaptive beats ratio-matched random", check_sim_pareto},
      {"identical config and seed give byte-identical runs", check_determinism},
      {"replaying a run's own trace reproduces its report", check_replay_identity},
  };

  int failures = 0;
  for (size_t i = 0; i < checks.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = checks[i].fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %zu: %s (%s)\n", ok ? "PASS" : "FAIL", i + 1,
                checks[i].name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
  }

  auto& ctx = cli_context();
  std::error_code ec;
  fs::remove_all(ctx.root, ec);

  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
