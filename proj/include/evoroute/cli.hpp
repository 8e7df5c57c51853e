#pragma once

/**
 * Operator entry points. One binary, four subcommands:
 *
 *   warmup  - run both models over n problems, write the labeled trace and
 *             the fitted static router tree
 *   evolve  - full evolutionary run under a policy, with per-iteration
 *             checkpoints, a decision trace, and a final report
 *   replay  - re-route a logged trace under a (possibly different) policy
 *             without any generation
 *   report  - merge run reports into comparison and Pareto CSVs
 *
 * Every command prints the effective config hash and writes only into its
 * run directory. Exit codes: 0 success, 2 validation, 3 backend,
 * 4 evaluator.
 */

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evoroute/backend.hpp"
#include "evoroute/common.hpp"
#include "evoroute/config.hpp"
#include "evoroute/evaluator.hpp"
#include "evoroute/evolution.hpp"
#include "evoroute/http_backend.hpp"
#include "evoroute/ledger.hpp"
#include "evoroute/router.hpp"
#include "evoroute/serialize.hpp"

namespace evoroute::cli {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;
constexpr int kExitEvaluator = 4;

namespace fs = std::filesystem;

// ============================================================================
// Service construction
// ============================================================================

struct ServiceBundle {
  std::unique_ptr<SimWorld> world;  // sim only
  std::unique_ptr<GenerationService> backend;
  std::unique_ptr<CandidateEvaluator> evaluator;
};

inline ServiceBundle make_services(const RunConfig& cfg,
                                   const std::vector<Problem>& problems,
                                   const std::string& phase,
                                   const std::string& out_dir) {
  ServiceBundle s;
  if (cfg.backend_kind == "sim") {
    std::vector<std::string> ids;
    ids.reserve(problems.size());
    for (const auto& p : problems) ids.push_back(p.id);
    s.world = std::make_unique<SimWorld>(cfg.world, ids);
    s.backend = std::make_unique<SimBackend>(*s.world, cfg.seed, phase);
    s.evaluator = std::make_unique<SimEvaluator>(*s.world, cfg.seed);
  } else {
    s.backend = std::make_unique<HttpBackend>(
        cfg.small, cfg.large, cfg.gen,
        out_dir.empty() ? std::string{} : out_dir + "/requests.jsonl");
    SubprocessEvaluator::Options opt;
    opt.interpreter = cfg.evaluator.interpreter;
    opt.limits.timeout_s = cfg.evaluator.timeout_s;
    opt.limits.max_retries = cfg.evaluator.max_retries;
    opt.parallel = cfg.evaluator.parallel;
    s.evaluator = std::make_unique<SubprocessEvaluator>(opt);
  }
  return s;
}

inline void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw InvalidInput("cannot create directory " + path);
}

inline std::string default_out_dir(const RunConfig& cfg, const std::string& verb) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto stamp =
      std::chrono::duration_cast<std::chrono::seconds>(now).count();
  return "runs/" + verb + "-" + std::to_string(stamp) + "-" + config_hash(cfg);
}

// ============================================================================
// Router construction from warm-up artifacts
// ============================================================================

inline std::vector<WarmupRecord> load_warmup_trace(const std::string& warmup_dir) {
  const std::string path = warmup_dir + "/warmup_trace.jsonl";
  if (!fs::exists(path))
    throw InvalidInput("missing warm-up trace '" + path +
                       "'; run the warmup command first and pass --warmup");
  return read_jsonl(path, warmup_record_from_json);
}

inline Router build_router(const RunConfig& cfg, PolicyKind kind,
                           const std::string& warmup_dir) {
  switch (kind) {
    case PolicyKind::AdaptiveHat: {
      Router r = Router::adaptive(cfg.hat);
      replay_warmup_into(r, load_warmup_trace(warmup_dir));
      return r;
    }
    case PolicyKind::StaticTree: {
      const std::string path = warmup_dir + "/static_tree.txt";
      if (!fs::exists(path))
        throw InvalidInput("missing static tree '" + path +
                           "'; run the warmup command first and pass --warmup");
      std::ifstream in(path);
      std::string text((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
      return Router::static_tree(DecisionTree::deserialize(text));
    }
    case PolicyKind::ZScoreThreshold: {
      ZScoreParams z = estimate_zscore_params(load_warmup_trace(warmup_dir),
                                              cfg.zscore_cutoff);
      return Router::zscore(z);
    }
    case PolicyKind::Random:
      return Router::random(cfg.random_large_fraction);
    case PolicyKind::Cascade:
      return Router::cascade();
    case PolicyKind::AlwaysSmall:
      return Router::always_small();
    case PolicyKind::AlwaysLarge:
      return Router::always_large();
  }
  throw InvalidInput("unhandled policy");
}

// ============================================================================
// warmup
// ============================================================================

struct WarmupArgs {
  std::string config_path;
  std::string problems_path;
  std::string out_dir;
  int n = 50;
  std::optional<uint64_t> seed;
  std::optional<std::string> backend_kind;
};

struct WarmupCmdResult {
  WarmupResult warmup;
  std::string out_dir;
  double cost = 0.0;
};

inline WarmupCmdResult cmd_warmup(const WarmupArgs& args) {
  RunConfig cfg = load_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.evolution.seed = *args.seed;
  }
  if (args.backend_kind) cfg.backend_kind = *args.backend_kind;
  cfg.validate();

  std::printf("config_hash %s\n", config_hash(cfg).c_str());

  std::string warning;
  const auto problems = load_problems(args.problems_path, &warning);
  if (!warning.empty()) std::printf("warning: %s\n", warning.c_str());
  if (args.n < 1 || static_cast<size_t>(args.n) > problems.size())
    throw InvalidInput("warmup: --n must be in [1, " +
                       std::to_string(problems.size()) + "]");

  const std::string out =
      args.out_dir.empty() ? default_out_dir(cfg, "warmup") : args.out_dir;
  ensure_dir(out);

  auto services = make_services(cfg, problems, "warmup", out);

  WarmupOptions opt;
  opt.tree_depth = cfg.tree_depth;
  opt.seed = cfg.seed;
  opt.confidence = cfg.confidence;
  WarmupResult result =
      run_warmup(problems, args.n, *services.backend, *services.evaluator, opt);

  write_jsonl(out + "/warmup_trace.jsonl", result.records, warmup_record_to_json);
  {
    std::ofstream tree_out(out + "/static_tree.txt");
    tree_out << result.tree.serialize();
  }
  {
    std::ofstream cfg_out(out + "/effective_config.json");
    cfg_out << cfg.to_json().dump(2) << "\n";
  }

  int label_small = 0, label_large = 0;
  for (const auto& rec : result.records) {
    label_small += (rec.label_small_perspective == 0) + (rec.label_large_perspective == 0);
    label_large += (rec.label_small_perspective == 1) + (rec.label_large_perspective == 1);
  }
  // Warm-up generates with both models once per problem.
  const double cost =
      static_cast<double>(result.records.size()) * (kUnitCostSmall + kUnitCostLarge);

  nlohmann::json summary{
      {"problems", result.records.size()},
      {"rows", result.records.size() * 2},
      {"label_0_rows", label_small},
      {"label_1_rows", label_large},
      {"tree_depth", result.tree.depth()},
      {"tree_training_accuracy", result.tree_training_accuracy},
      {"warmup_cost", cost},
      {"config_hash", config_hash(cfg)}};
  {
    std::ofstream sum_out(out + "/warmup_report.json");
    sum_out << summary.dump(2) << "\n";
  }

  std::printf("warmup: %zu problems, labels 0/1 = %d/%d, tree depth %d, "
              "training accuracy %.3f, cost %.2f\n",
              result.records.size(), label_small, label_large,
              result.tree.depth(), result.tree_training_accuracy, cost);
  std::printf("artifacts written to %s\n", out.c_str());

  WarmupCmdResult out_result;
  out_result.warmup = std::move(result);
  out_result.out_dir = out;
  out_result.cost = cost;
  return out_result;
}

// ============================================================================
// evolve
// ============================================================================

struct EvolveArgs {
  std::string config_path;
  std::string problems_path;
  std::string out_dir;
  std::string warmup_dir;
  std::string resume_path;
  std::optional<std::string> policy;
  std::optional<uint64_t> seed;
  std::optional<std::string> backend_kind;
};

inline void write_report_files(const std::string& out, const RunConfig& cfg,
                               const RunReport& report) {
  {
    std::ofstream csv(out + "/report.csv");
    csv << report_csv_header() << report_csv_row(report);
  }
  nlohmann::json j{{"configuration", report.configuration},
                   {"policy", report.configuration},
                   {"problems", report.problems},
                   {"small_calls", report.small_calls},
                   {"large_calls", report.large_calls},
                   {"ratio_small", report.ratio_small},
                   {"ratio_large", report.ratio_large},
                   {"cost_total", report.cost_total},
                   {"cost_per_problem", report.cost_per_problem},
                   {"accuracy_percent", report.accuracy_percent},
                   {"efficiency", report.efficiency},
                   {"seed", cfg.seed},
                   {"config_hash", config_hash(cfg)},
                   {"compat_hash", compat_hash(cfg)}};
  std::ofstream jout(out + "/report.json");
  jout << j.dump(2) << "\n";
}

inline RunReport cmd_evolve(const EvolveArgs& args) {
  RunConfig cfg = load_config(args.config_path);
  if (args.policy) cfg.policy = *args.policy;  // flags win
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.evolution.seed = *args.seed;
  }
  if (args.backend_kind) cfg.backend_kind = *args.backend_kind;
  cfg.validate();
  const PolicyKind kind = policy_kind_from_string(cfg.policy);

  std::printf("config_hash %s\n", config_hash(cfg).c_str());

  std::string warning;
  const auto problems = load_problems(args.problems_path, &warning);
  if (!warning.empty()) std::printf("warning: %s\n", warning.c_str());
  if (problems.empty()) throw InvalidInput("evolve: empty problem suite");

  const std::string out =
      args.out_dir.empty() ? default_out_dir(cfg, "evolve") : args.out_dir;
  ensure_dir(out);
  ensure_dir(out + "/checkpoints");
  {
    std::ofstream cfg_out(out + "/effective_config.json");
    cfg_out << cfg.to_json().dump(2) << "\n";
  }

  auto services = make_services(cfg, problems, "evolve", out);

  Router router = build_router(cfg, kind, args.warmup_dir);
  Rng rng(cfg.seed);
  CostLedger ledger;
  std::vector<ProblemOutcome> outcomes;
  size_t first_problem = 0;
  int resume_iteration = 0;

  std::optional<Checkpoint> resume;
  if (!args.resume_path.empty()) {
    resume = load_checkpoint(args.resume_path);
    if (resume->config_hash != config_hash(cfg))
      throw InvalidInput("resume: checkpoint config hash " +
                         resume->config_hash + " does not match current " +
                         config_hash(cfg));
    router = router_from_json(resume->router);
    ledger_from_json(resume->ledger, ledger);
    rng.restore_state(resume->rng_state);
    outcomes = resume->outcomes;
    first_problem = resume->problem_index;
    resume_iteration = resume->iteration;
  }

  std::ofstream trace(out + "/evolve_trace.jsonl");
  if (!trace) throw InvalidInput("cannot write trace in " + out);

  for (size_t pi = first_problem; pi < problems.size(); ++pi) {
    const Problem& problem = problems[pi];

    EngineHooks hooks;
    hooks.on_trace = [&trace](const TraceEntry& t) {
      trace << trace_to_json(t).dump() << "\n";
    };
    hooks.on_skip = [](const std::string& msg) {
      std::fprintf(stderr, "skip: %s\n", msg.c_str());
    };
    hooks.on_iteration = [&](const IterationReport& report,
                             const Archive& archive, uint64_t next_id) {
      if (report.iteration % cfg.checkpoint_interval != 0) return;
      Checkpoint ckpt;
      ckpt.config_hash = config_hash(cfg);
      ckpt.policy = cfg.policy;
      ckpt.seed = cfg.seed;
      ckpt.problem_index = pi;
      ckpt.problem_id = problem.id;
      ckpt.iteration = report.iteration;
      ckpt.archive = archive_to_json(archive);
      ckpt.next_candidate_id = next_id;
      ckpt.ledger = ledger_to_json(ledger);
      ckpt.router = router_to_json(router);
      ckpt.rng_state = rng.save_state();
      ckpt.outcomes = outcomes;
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoints/ckpt_%05zu_%03d.json", pi,
                    report.iteration);
      save_checkpoint(out + name, ckpt);
    };

    EvolutionEngine engine(cfg.evolution, cfg.confidence, router,
                           *services.backend, *services.evaluator, ledger, rng,
                           hooks);

    ProblemOutcome outcome;
    if (resume && pi == first_problem) {
      engine.restore(
          archive_from_json(resume->archive, cfg.evolution.archive_size),
          resume->next_candidate_id);
      const bool complete =
          resume_iteration >= cfg.evolution.max_iterations ||
          (cfg.evolution.stop_on_solve && engine.archive().best() &&
           engine.archive().best()->pass_rate >= 1.0);
      outcome = complete ? engine.outcome(problem)
                         : engine.run(problem, resume_iteration + 1);
    } else {
      outcome = engine.run(problem);
    }
    outcomes.push_back(outcome);
  }

  const RunReport report = build_report(ledger, outcomes, cfg.policy);
  write_report_files(out, cfg, report);
  std::printf("%s%s", report_csv_header().c_str(), report_csv_row(report).c_str());
  std::printf("run written to %s\n", out.c_str());
  return report;
}

// ============================================================================
// replay
// ============================================================================

struct ReplayArgs {
  std::string config_path;
  std::string trace_path;
  std::string out_dir;
  std::string warmup_dir;
  std::optional<std::string> policy;
  std::optional<uint64_t> seed;
};

struct ReplayResult {
  RunReport report;
  bool partial = false;      // some outcomes unknown; accuracy omitted
  double agreement = 0.0;    // decision agreement with the logged run
  size_t decisions = 0;
};

inline bool is_warmup_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("replay: cannot open trace " + path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) {
      const auto j = nlohmann::json::parse(line);
      return j.contains("label_small");
    }
  throw InvalidInput("replay: empty trace " + path);
}

inline ReplayResult cmd_replay(const ReplayArgs& args) {
  RunConfig cfg = load_config(args.config_path);
  if (args.policy) cfg.policy = *args.policy;
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();
  const PolicyKind kind = policy_kind_from_string(cfg.policy);

  std::printf("config_hash %s\n", config_hash(cfg).c_str());

  Router router = build_router(cfg, kind, args.warmup_dir);
  Rng rng(cfg.seed);
  CostLedger ledger;
  ReplayResult result;

  std::map<std::string, ProblemOutcome> outcomes;
  size_t agreements = 0;
  bool unknown_outcome = false;

  auto note_outcome = [&outcomes](const std::string& problem_id,
                                  std::optional<double> pass) {
    auto& o = outcomes[problem_id];
    o.problem_id = problem_id;
    if (pass) {
      o.best_pass_rate = std::max(o.best_pass_rate, *pass);
      o.solved = o.solved || *pass >= 1.0;
    }
  };

  if (is_warmup_trace(args.trace_path)) {
    const auto records = read_jsonl(args.trace_path, warmup_record_from_json);
    for (const auto& rec : records) {
      const RouteDecision d = router.route(rec.confidence, rng);
      ledger.record_call(d.choice, {rec.problem_id, 0, 0});
      const double pass = d.choice == ModelChoice::Small ? rec.small_pass_rate
                                                         : rec.large_pass_rate;
      note_outcome(rec.problem_id, pass);
      // Agreement against the labeled small-perspective decision.
      const ModelChoice labeled = rec.label_small_perspective == 1
                                      ? ModelChoice::Large
                                      : ModelChoice::Small;
      agreements += d.choice == labeled ? 1 : 0;
      ++result.decisions;
    }
  } else {
    const auto entries = read_jsonl(args.trace_path, trace_from_json);
    size_t index = 0;
    for (const auto& entry : entries) {
      RouteDecision d;
      if (router.needs_confidence() && !entry.confidence) {
        d.choice = ModelChoice::Small;  // seed-parent default, as in evolve
      } else if (router.kind() == PolicyKind::Random) {
        const double u = entry.random_draw
                             ? *entry.random_draw
                             : derive_rng(cfg.seed, "replay", index).uniform();
        d.choice = u < router.large_fraction() ? ModelChoice::Large
                                               : ModelChoice::Small;
      } else {
        d.choice = router.route(entry.confidence, rng).choice;
      }

      ledger.record_call(d.choice, {entry.problem_id, entry.iteration, entry.slot});
      std::optional<double> pass = d.choice == ModelChoice::Small
                                       ? entry.pass_small
                                       : entry.pass_large;
      if (router.kind() == PolicyKind::Cascade) {
        // Small first; observed failure escalates within the slot.
        pass = entry.pass_small;
        if (entry.pass_small && *entry.pass_small < 1.0) {
          ledger.record_call(ModelChoice::Large,
                             {entry.problem_id, entry.iteration, entry.slot});
          if (entry.pass_large)
            pass = std::max(*entry.pass_small, *entry.pass_large);
          else
            pass.reset();
        }
      }
      if (!pass) unknown_outcome = true;
      note_outcome(entry.problem_id, pass);

      agreements += d.choice == entry.choice ? 1 : 0;
      ++result.decisions;

      // Adaptive replays re-learn from the logged feedback stream.
      if (router.kind() == PolicyKind::AdaptiveHat && entry.feedback_label &&
          entry.confidence)
        router.mutable_hat().learn_one(entry.confidence->features(),
                                       *entry.feedback_label);
      ++index;
    }
  }

  if (outcomes.empty()) throw InvalidInput("replay: trace has no decisions");

  std::vector<ProblemOutcome> outcome_list;
  for (const auto& [id, o] : outcomes) outcome_list.push_back(o);

  result.partial = unknown_outcome;
  result.agreement = result.decisions
                         ? static_cast<double>(agreements) /
                               static_cast<double>(result.decisions)
                         : 0.0;
  result.report = build_report(ledger, outcome_list, cfg.policy + "-replay");
  if (result.partial) {
    result.report.accuracy_percent = 0.0;
    result.report.efficiency = 0.0;
    std::printf("warning: trace lacks outcomes for some replayed decisions; "
                "accuracy omitted\n");
  }

  std::printf("replay decisions %zu, agreement with logged run %.3f\n",
              result.decisions, result.agreement);
  if (!result.partial)
    std::printf("%s%s", report_csv_header().c_str(),
                report_csv_row(result.report).c_str());

  if (!args.out_dir.empty()) {
    ensure_dir(args.out_dir);
    write_report_files(args.out_dir, cfg, result.report);
  }
  return result;
}

// ============================================================================
// report
// ============================================================================

struct ReportArgs {
  std::vector<std::string> inputs;  // run dirs or report.json paths
  std::string out_dir = ".";
  bool force = false;
};

inline nlohmann::json load_report_json(const std::string& input) {
  std::string path = input;
  if (fs::is_directory(path)) path += "/report.json";
  std::ifstream in(path);
  if (!in) throw InvalidInput("report: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError("report: " + path + ": " + e.what());
  }
  return j;
}

inline std::string cmd_report(const ReportArgs& args) {
  if (args.inputs.empty())
    throw InvalidInput("report: no run inputs given (usage error)");

  std::vector<nlohmann::json> reports;
  std::string first_compat;
  for (const auto& input : args.inputs) {
    auto j = load_report_json(input);
    const std::string compat = j.value("compat_hash", std::string{});
    if (first_compat.empty()) first_compat = compat;
    if (compat != first_compat && !args.force)
      throw InvalidInput(
          "report: runs were produced under incompatible configs (" +
          first_compat + " vs " + compat + "); pass --force to merge anyway");
    reports.push_back(std::move(j));
  }
  std::printf("compat_hash %s\n", first_compat.c_str());

  std::string csv = report_csv_header();
  std::vector<ParetoPoint> points;
  for (const auto& j : reports) {
    RunReport r;
    r.configuration = j.at("configuration").get<std::string>();
    r.problems = j.at("problems").get<size_t>();
    r.small_calls = j.at("small_calls").get<uint64_t>();
    r.large_calls = j.at("large_calls").get<uint64_t>();
    r.ratio_small = j.at("ratio_small").get<int>();
    r.ratio_large = j.at("ratio_large").get<int>();
    r.cost_total = j.at("cost_total").get<double>();
    r.cost_per_problem = j.at("cost_per_problem").get<double>();
    r.accuracy_percent = j.at("accuracy_percent").get<double>();
    r.efficiency = j.at("efficiency").get<double>();
    csv += report_csv_row(r);
    points.push_back({r.configuration, r.cost_per_problem, r.accuracy_percent,
                      false});
  }

  ensure_dir(args.out_dir);
  {
    std::ofstream out(args.out_dir + "/comparison.csv");
    out << csv;
  }
  const std::string pareto = pareto_csv(points);
  {
    std::ofstream out(args.out_dir + "/pareto.csv");
    out << pareto;
  }
  std::printf("%s", csv.c_str());
  return csv;
}

}  // namespace evoroute::cli
