#pragma once

/**
 * Iterative refinement loop: a MAP-Elites archive (pass rate x complexity
 * grid, per island) supplies parents and few-shot exemplars; the router
 * picks the mutating model per slot; outcomes feed back into adaptive
 * policies and the cost ledger.
 *
 * Archive rules: a cell keeps the highest-pass-rate candidate ever
 * assigned to it, ties resolved toward the newer candidate; the elite list
 * keeps the top `archive_size` candidates overall and always contains the
 * globally best one. Cell pass rates never decrease over a run.
 */

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evoroute/backend.hpp"
#include "evoroute/common.hpp"
#include "evoroute/confidence.hpp"
#include "evoroute/evaluator.hpp"
#include "evoroute/ledger.hpp"
#include "evoroute/rng.hpp"
#include "evoroute/router.hpp"

namespace evoroute {

// ============================================================================
// Candidates and archive
// ============================================================================

struct Candidate {
  uint64_t id = 0;
  std::string program;
  double pass_rate = 0.0;
  double complexity = 0.0;  // normalized program length
  std::optional<ConfidenceVector> confidence;
  std::optional<ModelChoice> producer;  // absent for seed stubs
  std::optional<uint64_t> parent_id;
  int iteration = 0;
  int island = 0;
};

struct EvolutionConfig {
  int max_iterations = 8;
  int population_size = 8;
  int islands = 2;
  int archive_size = 3;
  double elite_ratio = 0.3;
  double exploration_ratio = 0.2;
  double exploitation_ratio = 0.5;
  int migration_interval = 10;
  double migration_rate = 0.15;
  int feature_bins = 5;
  uint64_t seed = 42;
  double complexity_cap = 10000.0;
  bool stop_on_solve = false;

  void validate() const {
    if (max_iterations < 1 || population_size < 1 || islands < 1 ||
        archive_size < 1 || feature_bins < 1 || migration_interval < 1)
      throw InvalidInput("evolution: counts must be >= 1");
    const double sum = elite_ratio + exploration_ratio + exploitation_ratio;
    if (std::fabs(sum - 1.0) > 1e-9)
      throw InvalidInput("evolution: selection ratios must sum to 1.0");
    if (migration_rate < 0.0 || migration_rate > 1.0)
      throw InvalidInput("evolution: migration_rate outside [0, 1]");
    if (!(complexity_cap > 0.0))
      throw InvalidInput("evolution: complexity_cap must be > 0");
  }
};

// Uniform binning; the top edge clamps into the last bin.
inline std::pair<int, int> feature_cell(double pass_rate, double complexity,
                                        int bins) {
  if (bins < 1) throw InvalidInput("feature_cell: bins must be >= 1");
  for (double v : {pass_rate, complexity})
    if (!(v >= 0.0) || v > 1.0)
      throw InvalidInput("feature_cell: inputs must lie in [0, 1]");
  auto bin = [bins](double v) {
    return std::min(static_cast<int>(std::floor(v * bins)), bins - 1);
  };
  return {bin(pass_rate), bin(complexity)};
}

inline double complexity_of(const std::string& program, double cap) {
  return std::min(static_cast<double>(program.size()), cap) / cap;
}

class Archive {
 public:
  using CellKey = std::pair<int, int>;

  Archive(int islands, int bins, int elite_capacity)
      : bins_(bins), elite_capacity_(elite_capacity), islands_(islands) {
    if (islands < 1 || bins < 1 || elite_capacity < 1)
      throw InvalidInput("archive: counts must be >= 1");
  }

  int island_count() const { return static_cast<int>(islands_.size()); }
  int bins() const { return bins_; }

  const std::map<CellKey, Candidate>& island(int i) const {
    return islands_.at(static_cast<size_t>(i));
  }
  const std::vector<Candidate>& elites() const { return elites_; }

  bool empty() const {
    for (const auto& g : islands_)
      if (!g.empty()) return false;
    return true;
  }

  size_t total_occupied() const {
    size_t n = 0;
    for (const auto& g : islands_) n += g.size();
    return n;
  }

  const Candidate* best() const {
    return elites_.empty() ? nullptr : &elites_.front();
  }

  // Cell competition: higher pass rate wins, ties go to the newcomer.
  bool insert(int island, const Candidate& candidate) {
    auto& grid = islands_.at(static_cast<size_t>(island));
    const CellKey key = feature_cell(candidate.pass_rate, candidate.complexity, bins_);
    auto it = grid.find(key);
    const bool placed = it == grid.end() || candidate.pass_rate >= it->second.pass_rate;
    if (placed) grid[key] = candidate;
    update_elites(candidate);
    return placed;
  }

 private:
  int bins_;
  int elite_capacity_;
  std::vector<std::map<CellKey, Candidate>> islands_;
  std::vector<Candidate> elites_;
  uint64_t elite_seq_ = 0;
  std::map<uint64_t, uint64_t> elite_order_;  // candidate id -> recency

  void update_elites(const Candidate& candidate) {
    // Elites feed the few-shot exemplars; seed stubs are placeholders, not
    // generations, and never qualify.
    if (!candidate.producer) return;
    const uint64_t seq = elite_seq_++;
    for (const auto& e : elites_)
      if (e.id == candidate.id) return;  // migrated copy, already ranked
    elite_order_[candidate.id] = seq;
    elites_.push_back(candidate);
    std::sort(elites_.begin(), elites_.end(),
              [this](const Candidate& a, const Candidate& b) {
                if (a.pass_rate != b.pass_rate) return a.pass_rate > b.pass_rate;
                return elite_order_.at(a.id) > elite_order_.at(b.id);
              });
    if (elites_.size() > static_cast<size_t>(elite_capacity_)) {
      for (size_t i = elite_capacity_; i < elites_.size(); ++i)
        elite_order_.erase(elites_[i].id);
      elites_.resize(static_cast<size_t>(elite_capacity_));
    }
  }

 public:
  // Checkpoint plumbing: rebuild an archive from serialized cells/elites.
  void restore_cell(int island, const Candidate& candidate) {
    const CellKey key =
        feature_cell(candidate.pass_rate, candidate.complexity, bins_);
    islands_.at(static_cast<size_t>(island))[key] = candidate;
  }
  void restore_elites(std::vector<Candidate> elites) {
    elites_ = std::move(elites);
    elite_order_.clear();
    elite_seq_ = 0;
    // Recency increases toward the back of the stored order for equal pass
    // rates, matching how the list was produced.
    for (size_t i = elites_.size(); i-- > 0;)
      elite_order_[elites_[i].id] = elite_seq_++;
  }
};

// ============================================================================
// Parent sampling
// ============================================================================

enum class SelectionBranch { Exploitation, Exploration, Elite };

inline SelectionBranch selection_branch(double u, const EvolutionConfig& cfg) {
  if (u < cfg.exploitation_ratio) return SelectionBranch::Exploitation;
  if (u < cfg.exploitation_ratio + cfg.exploration_ratio)
    return SelectionBranch::Exploration;
  return SelectionBranch::Elite;
}

// Branch mix: exploitation (pass-rate-weighted cells), exploration
// (uniform cells), elite (uniform over the elite list).
inline const Candidate& sample_parent(const Archive& archive, int island,
                                      const EvolutionConfig& cfg, Rng& rng) {
  if (archive.empty()) throw NoParentError("sample_parent: archive is empty");
  const auto& grid = archive.island(island);
  const auto& elites = archive.elites();

  const SelectionBranch branch = selection_branch(rng.uniform(), cfg);

  if (branch == SelectionBranch::Elite && !elites.empty())
    return elites[rng.below(elites.size())];

  if (!grid.empty()) {
    if (branch == SelectionBranch::Exploitation) {
      double total = 0.0;
      for (const auto& [key, cand] : grid) total += cand.pass_rate;
      if (total > 0.0) {
        double pick = rng.uniform() * total;
        for (const auto& [key, cand] : grid) {
          pick -= cand.pass_rate;
          if (pick <= 0.0) return cand;
        }
        return std::prev(grid.end())->second;
      }
      // All-zero weights degenerate to a uniform pick.
    }
    auto it = grid.begin();
    std::advance(it, static_cast<long>(rng.below(grid.size())));
    return it->second;
  }

  if (!elites.empty()) return elites[rng.below(elites.size())];
  throw NoParentError("sample_parent: island empty and no elites");
}

// ============================================================================
// Prompt construction
// ============================================================================

inline void append_pass_rate(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  out += buf;
}

// Deterministic template; byte-identical for identical inputs. Exemplars
// appear in descending pass-rate order, at most three.
inline std::string build_prompt(const Candidate& parent,
                                const std::vector<Candidate>& exemplars,
                                const std::string& statement) {
  std::string out = "Problem:\n" + statement + "\n";
  size_t shown = 0;
  for (const auto& ex : exemplars) {
    if (shown >= 3) break;
    out += "\nExample solution (pass rate ";
    append_pass_rate(out, ex.pass_rate);
    out += "):\n" + ex.program;
    if (out.back() != '\n') out += '\n';
    ++shown;
  }
  out += "\nCurrent solution (pass rate ";
  append_pass_rate(out, parent.pass_rate);
  out += "):\n" + parent.program;
  if (out.back() != '\n') out += '\n';
  out +=
      "\nRevise the current solution to fix its failures. Output only the "
      "complete program.\n";
  return out;
}

// ============================================================================
// Migration
// ============================================================================

// Ring migration: each island copies ceil(rate * occupied) randomly chosen
// occupied cells into the next island; receiving cells keep competition
// rules. No-op for a single island.
inline void migrate(Archive& archive, const EvolutionConfig& cfg, Rng& rng) {
  const int n = archive.island_count();
  if (n < 2) return;

  std::vector<std::vector<Candidate>> outgoing(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& grid = archive.island(i);
    if (grid.empty()) continue;
    std::vector<const Candidate*> cells;
    cells.reserve(grid.size());
    for (const auto& [key, cand] : grid) cells.push_back(&cand);
    const size_t take = static_cast<size_t>(
        std::ceil(cfg.migration_rate * static_cast<double>(cells.size())));
    for (size_t j = 0; j < take && j < cells.size(); ++j) {
      const size_t pick = j + rng.below(cells.size() - j);
      std::swap(cells[j], cells[pick]);
      outgoing[static_cast<size_t>(i)].push_back(*cells[j]);
    }
  }
  for (int i = 0; i < n; ++i)
    for (const auto& cand : outgoing[static_cast<size_t>(i)])
      archive.insert((i + 1) % n, cand);
}

// ============================================================================
// Evolution engine (one problem)
// ============================================================================

struct TraceEntry {
  std::string problem_id;
  int iteration = 0;
  int island = 0;
  int slot = 0;
  std::optional<ConfidenceVector> confidence;  // router input (parent's)
  ModelChoice choice = ModelChoice::Small;
  std::optional<double> random_draw;
  std::optional<double> pass_small;
  std::optional<double> pass_large;
  std::optional<int> feedback_label;
};

struct IterationReport {
  int iteration = 0;
  int generations = 0;
  int skipped = 0;
  double best_pass_rate = 0.0;
};

struct EngineHooks {
  std::function<void(const TraceEntry&)> on_trace;
  std::function<void(const IterationReport&, const Archive&, uint64_t next_id)>
      on_iteration;
  std::function<void(const std::string&)> on_skip;
};

class EvolutionEngine {
 public:
  EvolutionEngine(const EvolutionConfig& cfg, const ConfidenceConfig& conf_cfg,
                  Router& router, GenerationService& backend,
                  CandidateEvaluator& evaluator, CostLedger& ledger, Rng& rng,
                  EngineHooks hooks = {})
      : cfg_(cfg),
        conf_cfg_(conf_cfg),
        router_(&router),
        backend_(&backend),
        evaluator_(&evaluator),
        ledger_(&ledger),
        rng_(&rng),
        hooks_(std::move(hooks)),
        archive_(cfg.islands, cfg.feature_bins, cfg.archive_size) {
    cfg_.validate();
  }

  Archive& archive() { return archive_; }
  const Archive& archive() const { return archive_; }
  uint64_t next_candidate_id() const { return next_id_; }

  // Resume plumbing.
  void restore(Archive archive, uint64_t next_id) {
    archive_ = std::move(archive);
    next_id_ = next_id;
  }

  // Seed stubs carry no confidence and a pinned zero pass rate; one per
  // island, inserted before iteration 1.
  void seed(const Problem& problem) {
    for (int island = 0; island < cfg_.islands; ++island) {
      Candidate stub;
      stub.id = next_id_++;
      stub.program = "# seed\n";
      stub.pass_rate = 0.0;
      stub.complexity = complexity_of(stub.program, cfg_.complexity_cap);
      stub.iteration = 0;
      stub.island = island;
      archive_.insert(island, stub);
    }
    (void)problem;
  }

  ProblemOutcome run(const Problem& problem, int first_iteration = 1) {
    if (first_iteration <= 1 && archive_.empty()) seed(problem);
    for (int island = 0; island < archive_.island_count(); ++island)
      for (const auto& [cell, cand] : archive_.island(island))
        note_solved(cand.producer, cand.pass_rate);  // resume carries evidence
    for (int iter = first_iteration; iter <= cfg_.max_iterations; ++iter) {
      IterationReport report = evolve_step(problem, iter);
      if (hooks_.on_iteration) hooks_.on_iteration(report, archive_, next_id_);
      if (cfg_.stop_on_solve && report.best_pass_rate >= 1.0) break;
    }
    return outcome(problem);
  }

  ProblemOutcome outcome(const Problem& problem) const {
    ProblemOutcome o;
    o.problem_id = problem.id;
    const Candidate* best = archive_.best();
    o.best_pass_rate = best ? best->pass_rate : 0.0;
    o.solved = o.best_pass_rate >= 1.0;
    return o;
  }

  // One iteration: every island, every population slot, then migration at
  // the configured interval.
  IterationReport evolve_step(const Problem& problem, int iteration) {
    IterationReport report;
    report.iteration = iteration;
    for (int island = 0; island < cfg_.islands; ++island) {
      for (int slot = 0; slot < cfg_.population_size; ++slot) {
        try {
          run_slot(problem, iteration, island, slot, report);
        } catch (const Error& e) {
          ++report.skipped;
          if (hooks_.on_skip)
            hooks_.on_skip("slot " + std::to_string(slot) + " island " +
                           std::to_string(island) + " skipped: " + e.what());
        }
      }
    }
    if (iteration > 0 && iteration % cfg_.migration_interval == 0)
      migrate(archive_, cfg_, *rng_);
    const Candidate* best = archive_.best();
    report.best_pass_rate = best ? best->pass_rate : 0.0;
    return report;
  }

 private:
  EvolutionConfig cfg_;
  ConfidenceConfig conf_cfg_;
  Router* router_;
  GenerationService* backend_;
  CandidateEvaluator* evaluator_;
  CostLedger* ledger_;
  Rng* rng_;
  EngineHooks hooks_;
  Archive archive_;
  uint64_t next_id_ = 1;
  bool small_solved_ = false;  // per-problem observed solves by tier
  bool large_solved_ = false;

  void note_solved(const std::optional<ModelChoice>& producer, double pass) {
    if (!producer || pass < 1.0) return;
    (*producer == ModelChoice::Small ? small_solved_ : large_solved_) = true;
  }

  void run_slot(const Problem& problem, int iteration, int island, int slot,
                IterationReport& report) {
    const Candidate parent = sample_parent(archive_, island, cfg_, *rng_);
    const std::string prompt =
        build_prompt(parent, archive_.elites(), problem.statement);

    TraceEntry trace;
    trace.problem_id = problem.id;
    trace.iteration = iteration;
    trace.island = island;
    trace.slot = slot;
    trace.confidence = parent.confidence;

    RouteDecision decision;
    if (router_->needs_confidence() && !parent.confidence) {
      decision.choice = ModelChoice::Small;  // fail-cheap default for seeds
    } else {
      decision = router_->route(parent.confidence, *rng_);
    }
    trace.choice = decision.choice;
    trace.random_draw = decision.random_draw;

    const CallContext ctx{problem.id, iteration, slot};
    const EvalResult primary = generate_and_insert(
        problem, prompt, decision.choice, parent, iteration, island, ctx, report,
        trace);

    if (router_->kind() == PolicyKind::Cascade && primary.pass_rate < 1.0) {
      // Escalate within the same slot; both calls are charged.
      generate_and_insert(problem, prompt, ModelChoice::Large, parent, iteration,
                          island, ctx, report, trace);
    }

    if (router_->kind() == PolicyKind::AdaptiveHat && parent.confidence) {
      FeedbackRecord fb;
      fb.current = decision.choice;
      fb.pass_rate = primary.pass_rate;
      // Observed evidence about the other model beats the blind default:
      // within this problem's run, a solve by the other tier is known.
      const bool other_seen = decision.choice == ModelChoice::Small
                                  ? large_solved_
                                  : small_solved_;
      if (other_seen) fb.other_solvable = true;
      fb.features = parent.confidence->features();
      trace.feedback_label = router_->online_update(fb);
    }

    if (hooks_.on_trace) hooks_.on_trace(trace);
  }

  EvalResult generate_and_insert(const Problem& problem, const std::string& prompt,
                                 ModelChoice model, const Candidate& parent,
                                 int iteration, int island, const CallContext& ctx,
                                 IterationReport& report, TraceEntry& trace) {
    GenerationRecord rec = backend_->generate(model, prompt, problem.id);
    ledger_->record_call(model, ctx);
    ++report.generations;

    const EvalResult eval = evaluator_->evaluate_program(rec.output, problem);

    Candidate child;
    child.id = next_id_++;
    child.program = rec.output;
    child.pass_rate = eval.pass_rate;
    child.complexity = complexity_of(rec.output, cfg_.complexity_cap);
    child.confidence =
        rec.confidence ? rec.confidence
                       : std::optional<ConfidenceVector>(
                             confidence_vector(rec.tokens, conf_cfg_));
    child.producer = model;
    child.parent_id = parent.id;
    child.iteration = iteration;
    child.island = island;
    archive_.insert(island, child);
    note_solved(child.producer, child.pass_rate);

    (model == ModelChoice::Small ? trace.pass_small : trace.pass_large) =
        eval.pass_rate;
    return eval;
  }
};

}  // namespace evoroute
