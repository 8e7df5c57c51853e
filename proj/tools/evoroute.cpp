#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evoroute/cli.hpp"
#include "evoroute/common.hpp"

using namespace evoroute;

int main(int argc, char** argv) {
  CLI::App app{"confidence-driven model routing for evolutionary code refinement"};
  app.require_subcommand(1);

  std::string config_path, problems_path, out_dir, warmup_dir, resume_path,
      trace_path;
  std::optional<std::string> policy, backend_kind;
  std::optional<uint64_t> seed;
  int n = 50;
  bool force = false;
  std::vector<std::string> report_inputs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "random seed override");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* warmup = app.add_subcommand("warmup", "run the labeled warm-up phase");
  add_common(warmup);
  warmup->add_option("--problems", problems_path, "problem suite (JSONL)")
      ->required();
  warmup->add_option("--n", n, "number of warm-up problems");
  warmup->add_option("--backend", backend_kind, "backend kind: sim|http");

  auto* evolve = app.add_subcommand("evolve", "run the refinement loop");
  add_common(evolve);
  evolve->add_option("--problems", problems_path, "problem suite (JSONL)")
      ->required();
  evolve->add_option(
      "--policy", policy,
      "routing policy: adaptive|static|zscore|random|cascade|small|large");
  evolve->add_option("--warmup", warmup_dir, "warm-up artifact directory");
  evolve->add_option("--resume", resume_path, "checkpoint to resume from");
  evolve->add_option("--backend", backend_kind, "backend kind: sim|http");

  auto* replay = app.add_subcommand("replay", "re-route a logged trace");
  add_common(replay);
  replay->add_option("--trace", trace_path, "trace file (JSONL)")->required();
  replay->add_option("--policy", policy, "routing policy");
  replay->add_option("--warmup", warmup_dir, "warm-up artifact directory");

  auto* report = app.add_subcommand("report", "merge run reports");
  report->add_option("inputs", report_inputs, "run directories or report.json files");
  report->add_option("--out", out_dir, "output directory");
  report->add_flag("--force", force, "merge even with incompatible configs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kExitValidation;
  }

  try {
    if (warmup->parsed()) {
      cli::WarmupArgs args;
      args.config_path = config_path;
      args.problems_path = problems_path;
      args.out_dir = out_dir;
      args.n = n;
      args.seed = seed;
      args.backend_kind = backend_kind;
      cli::cmd_warmup(args);
    } else if (evolve->parsed()) {
      cli::EvolveArgs args;
      args.config_path = config_path;
      args.problems_path = problems_path;
      args.out_dir = out_dir;
      args.warmup_dir = warmup_dir;
      args.resume_path = resume_path;
      args.policy = policy;
      args.seed = seed;
      args.backend_kind = backend_kind;
      cli::cmd_evolve(args);
    } else if (replay->parsed()) {
      cli::ReplayArgs args;
      args.config_path = config_path;
      args.trace_path = trace_path;
      args.out_dir = out_dir;
      args.warmup_dir = warmup_dir;
      args.policy = policy;
      args.seed = seed;
      cli::cmd_replay(args);
    } else if (report->parsed()) {
      cli::ReportArgs args;
      args.inputs = report_inputs;
      args.out_dir = out_dir.empty() ? "." : out_dir;
      args.force = force;
      cli::cmd_report(args);
    }
  } catch (const CapabilityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitBackend;
  } catch (const TimeoutError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitBackend;
  } catch (const BackendError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitBackend;
  } catch (const WarmupIncomplete& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitBackend;
  } catch (const EvaluatorUnavailable& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitEvaluator;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitValidation;
  }
  return cli::kExitOk;
}
