#pragma once

/**
 * Generation sources behind one interface: a live chat-completion endpoint
 * that exposes per-token top-k log-probabilities, and a deterministic
 * simulator whose confidence metrics follow configured class-conditional
 * distributions (calibration-table defaults).
 *
 * The simulator samples the four metrics directly at the metric level and
 * emits a synthetic token stream consistent with the sampled mean
 * confidence, so confidence_vector(tokens).mc reproduces it to 1e-6. Every
 * sim draw comes from a stream derived from (world seed, problem id, call
 * index), which makes generations independent of call interleaving and
 * lets the paired evaluator re-derive ground truth without shared state.
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "evoroute/common.hpp"
#include "evoroute/confidence.hpp"
#include "evoroute/evaluator.hpp"
#include "evoroute/rng.hpp"

namespace evoroute {

// ============================================================================
// Records and parameters
// ============================================================================

struct GenerationRecord {
  ModelChoice model = ModelChoice::Small;
  std::string model_name;
  std::string prompt;
  std::string output;
  std::vector<TokenTopK> tokens;
  double latency_ms = 0.0;
  std::string finish_reason;
  int attempts = 1;
  // Metric-level confidence attached by the simulator; live records leave
  // this empty and the pipeline computes it from `tokens`.
  std::optional<ConfidenceVector> confidence;
};

struct GenParams {
  double temperature = 0.6;
  double top_p = 0.95;
  int max_tokens = 20000;
  double timeout_s = 3600.0;
  int top_logprobs = 20;
  int max_retries = 4;
  int backoff_ms = 500;
};

struct GenerationService {
  virtual ~GenerationService() = default;
  virtual GenerationRecord generate(ModelChoice model, const std::string& prompt,
                                    const std::string& problem_id) = 0;
};

// ============================================================================
// Live HTTP backend (chat-completion wire format with logprobs)
// ============================================================================

struct EndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000
  std::string model;     // served model name
  std::string api_key;   // optional bearer token
};

namespace detail {

inline std::vector<TokenTopK> parse_logprobs(const nlohmann::json& choice) {
  if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
      !choice["logprobs"].contains("content"))
    throw CapabilityError(
        "backend: endpoint returned no log-probabilities; token-level "
        "logprobs are required");
  std::vector<TokenTopK> tokens;
  size_t pos = 0;
  for (const auto& entry : choice["logprobs"]["content"]) {
    TokenTopK t;
    t.position = pos++;
    if (entry.contains("top_logprobs") && entry["top_logprobs"].is_array() &&
        !entry["top_logprobs"].empty()) {
      for (const auto& alt : entry["top_logprobs"])
        t.logprobs.push_back(
            std::min(0.0, alt.at("logprob").get<double>()));
    } else if (entry.contains("logprob")) {
      t.logprobs.push_back(std::min(0.0, entry["logprob"].get<double>()));
    } else {
      throw CapabilityError("backend: token entry carries no logprob");
    }
    std::sort(t.logprobs.begin(), t.logprobs.end(), std::greater<double>());
    tokens.push_back(std::move(t));
  }
  if (tokens.empty())
    throw CapabilityError("backend: empty logprob content on success");
  return tokens;
}

}  // namespace detail

// Declared here, defined by including evoroute/http_backend.hpp (pulls in
// the bundled HTTP client); split keeps the simulator light to include.
class HttpBackend;

// ============================================================================
// Simulated world
// ============================================================================

struct MetricStats {
  double unsolved_mean = 0.0;
  double unsolved_std = 1.0;
  double solved_mean = 0.0;
  double solved_std = 1.0;
};

enum class DifficultyLayout { UniformRandom, Ramp, TwoPhase };

struct SimWorldConfig {
  uint64_t seed = 42;
  int token_count = 256;  // even, so the synthetic stream hits mc exactly
  int top_k = 20;

  // Class-conditional metric statistics; calibration-table defaults.
  MetricStats lgc{5.858, 1.535, 7.982, 2.570};
  MetricStats mc{7.649, 1.756, 9.761, 1.981};
  MetricStats tc{8.509, 1.839, 10.285, 1.858};
  MetricStats bwc{6.373, 1.791, 8.732, 2.522};

  // Step solve curves over latent difficulty d in [0,1].
  double small_easy = 0.97, small_hard = 0.004, small_cut = 0.5;
  double large_easy = 0.995, large_hard = 0.02, large_cut = 0.9;

  DifficultyLayout layout = DifficultyLayout::UniformRandom;
  // TwoPhase: first-half difficulties in [phase1_lo, phase1_hi], second
  // half in [phase2_lo, phase2_hi].
  double phase1_lo = 0.0, phase1_hi = 0.45;
  double phase2_lo = 0.5, phase2_hi = 0.88;
};

class SimWorld {
 public:
  SimWorld(SimWorldConfig cfg, const std::vector<std::string>& problem_ids)
      : cfg_(cfg) {
    if (cfg_.token_count < 2) throw InvalidInput("sim: token_count must be >= 2");
    if (cfg_.top_k < 1) throw InvalidInput("sim: top_k must be >= 1");
    for (const auto& m : {cfg_.lgc, cfg_.mc, cfg_.tc, cfg_.bwc})
      if (!(m.unsolved_std > 0.0) || !(m.solved_std > 0.0))
        throw InvalidInput("sim: metric std devs must be > 0");
    for (int i = 0; i <= 1000; ++i) {
      const double d = i / 1000.0;
      if (p_large(d) < p_small(d))
        throw InvalidInput("sim: p_large(d) must dominate p_small(d)");
    }
    for (size_t i = 0; i < problem_ids.size(); ++i) {
      const auto& id = problem_ids[i];
      double d = 0.0;
      switch (cfg_.layout) {
        case DifficultyLayout::UniformRandom:
          d = derive_rng(cfg_.seed, "difficulty/" + id, 0).uniform();
          break;
        case DifficultyLayout::Ramp:
          d = problem_ids.size() > 1
                  ? static_cast<double>(i) /
                        static_cast<double>(problem_ids.size() - 1)
                  : 0.0;
          break;
        case DifficultyLayout::TwoPhase: {
          auto r = derive_rng(cfg_.seed, "difficulty/" + id, 0);
          if (i < problem_ids.size() / 2)
            d = r.uniform(cfg_.phase1_lo, cfg_.phase1_hi);
          else
            d = r.uniform(cfg_.phase2_lo, cfg_.phase2_hi);
          break;
        }
      }
      difficulty_[id] = d;
    }
  }

  const SimWorldConfig& config() const { return cfg_; }

  double difficulty(const std::string& problem_id) const {
    auto it = difficulty_.find(problem_id);
    if (it == difficulty_.end())
      throw InvalidInput("sim: unknown problem id '" + problem_id + "'");
    return it->second;
  }

  double p_small(double d) const {
    return d <= cfg_.small_cut ? cfg_.small_easy : cfg_.small_hard;
  }
  double p_large(double d) const {
    return d <= cfg_.large_cut ? cfg_.large_easy : cfg_.large_hard;
  }
  double solve_probability(ModelChoice m, double d) const {
    return m == ModelChoice::Small ? p_small(d) : p_large(d);
  }

 private:
  SimWorldConfig cfg_;
  std::map<std::string, double> difficulty_;
};

// ============================================================================
// Simulated generation + evaluation (one shared derived-stream scheme)
// ============================================================================

namespace detail {

inline double truncated_normal(Rng& rng, double mean, double std) {
  for (int i = 0; i < 100; ++i) {
    const double v = rng.normal(mean, std);
    if (v >= 0.0) return v;
  }
  return 0.0;
}

struct SimCallKey {
  std::string problem_id;
  std::string model;  // "small" | "large"
  std::string phase;  // draw namespace, e.g. "warmup" vs "evolve"
  uint64_t call_index = 0;
};

// Sim candidate header: carries everything needed to re-derive ground
// truth, so evaluation is stateless and replays exactly.
inline std::string sim_header(const SimCallKey& key) {
  return "# sim-candidate problem=" + key.problem_id + " call=" +
         std::to_string(key.call_index) + " model=" + key.model +
         " phase=" + key.phase + "\n";
}

inline bool parse_sim_header(const std::string& program, SimCallKey& key) {
  std::istringstream in(program.substr(0, program.find('\n')));
  std::string hash, tag, field;
  if (!(in >> hash >> tag) || hash != "#" || tag != "sim-candidate") return false;
  bool have_p = false, have_c = false, have_m = false;
  key.phase = "run";
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) return false;
    const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
    if (k == "problem") {
      key.problem_id = v;
      have_p = true;
    } else if (k == "call") {
      key.call_index = std::stoull(v);
      have_c = true;
    } else if (k == "model") {
      key.model = v;
      have_m = true;
    } else if (k == "phase") {
      key.phase = v;
    }
  }
  return have_p && have_c && have_m;
}

}  // namespace detail

struct SimGeneration {
  GenerationRecord record;
  bool solved = false;  // ground truth for this draw
};

class SimBackend : public GenerationService {
 public:
  // `run_seed` varies draw streams between runs over the same world;
  // `phase` namespaces them (warm-up draws never alias evolution draws).
  explicit SimBackend(const SimWorld& world, uint64_t run_seed = 0,
                      std::string phase = "run")
      : world_(&world),
        draw_seed_(mix_seed(world.config().seed, run_seed)),
        phase_(std::move(phase)) {}

  static uint64_t mix_seed(uint64_t world_seed, uint64_t run_seed) {
    return world_seed ^ (run_seed * 0x9e3779b97f4a7c15ULL);
  }

  // One simulated generation plus its ground-truth flag.
  SimGeneration generate_with_truth(ModelChoice model,
                                    const std::string& problem_id) {
    const uint64_t call_index = next_call_index(problem_id, model);
    return sample(model, problem_id, call_index);
  }

  GenerationRecord generate(ModelChoice model, const std::string& prompt,
                            const std::string& problem_id) override {
    auto gen = generate_with_truth(model, problem_id);
    gen.record.prompt = prompt;
    return std::move(gen.record);
  }

  // Deterministic resample of a known call (used by the paired evaluator).
  SimGeneration sample(ModelChoice model, const std::string& problem_id,
                       uint64_t call_index) const {
    return sample_keyed(
        model, {problem_id, to_string(model), phase_, call_index});
  }

  SimGeneration sample_keyed(ModelChoice model,
                             const detail::SimCallKey& key) const {
    const double d = world_->difficulty(key.problem_id);
    Rng rng = derive_rng(draw_seed_,
                         key.phase + "/gen/" + key.problem_id + "/" + key.model,
                         key.call_index);

    SimGeneration out;
    out.solved = rng.bernoulli(world_->solve_probability(model, d));

    const auto& cfg = world_->config();
    auto draw = [&](const MetricStats& m) {
      return out.solved ? detail::truncated_normal(rng, m.solved_mean, m.solved_std)
                        : detail::truncated_normal(rng, m.unsolved_mean, m.unsolved_std);
    };
    ConfidenceVector conf;
    conf.lgc = draw(cfg.lgc);
    conf.mc = draw(cfg.mc);
    conf.tc = draw(cfg.tc);
    conf.bwc = draw(cfg.bwc);
    conf.token_count = static_cast<size_t>(cfg.token_count);

    out.record.model = model;
    out.record.model_name = "sim-" + key.model;
    out.record.tokens = synth_tokens(conf.mc, cfg.token_count, cfg.top_k, rng);
    out.record.output = detail::sim_header(key) + synth_body(rng);
    out.record.latency_ms = static_cast<double>(cfg.token_count);
    out.record.finish_reason = "stop";
    out.record.confidence = conf;
    return out;
  }

  const SimWorld& world() const { return *world_; }
  uint64_t draw_seed() const { return draw_seed_; }

 private:
  const SimWorld* world_;
  uint64_t draw_seed_;
  std::string phase_;
  std::mutex mu_;
  std::map<std::string, uint64_t> call_counts_;

  uint64_t next_call_index(const std::string& problem_id, ModelChoice model) {
    std::lock_guard<std::mutex> lock(mu_);
    return call_counts_[problem_id + "/" + to_string(model)]++;
  }

  // Per-token confidences come in (mc+delta, mc-delta) pairs so the stream
  // mean equals the sampled mc up to floating-point summation.
  static std::vector<TokenTopK> synth_tokens(double mc, int count, int k, Rng& rng) {
    std::vector<double> conf(count, mc);
    for (int i = 0; i + 1 < count; i += 2) {
      const double delta = rng.uniform(0.0, 0.4 * mc);
      conf[i] = mc + delta;
      conf[i + 1] = mc - delta;
    }
    std::vector<TokenTopK> tokens(count);
    for (int i = 0; i < count; ++i) {
      tokens[i].position = static_cast<size_t>(i);
      tokens[i].logprobs.resize(k);
      const double spread = conf[i] / 2.0;
      if (k == 1) {
        tokens[i].logprobs[0] = -conf[i];
      } else {
        for (int j = 0; j < k; ++j) {
          const double frac = 1.0 - 2.0 * static_cast<double>(j) /
                                        static_cast<double>(k - 1);
          tokens[i].logprobs[j] = -conf[i] + spread * frac;
        }
      }
    }
    return tokens;
  }

  static std::string synth_body(Rng& rng) {
    static constexpr const char* kLines[] = {
        "def solve(xs):",
        "    total = 0",
        "    for x in xs:",
        "        total += x",
        "    return total",
        "def check(n):",
        "    return n % 2 == 0",
    };
    const int lines = 4 + static_cast<int>(rng.below(24));
    std::string body;
    for (int i = 0; i < lines; ++i) body += kLines[rng.below(7)], body += '\n';
    return body;
  }
};

// Scores sim candidates by re-deriving the generation's ground truth from
// its header. Stub programs (no header) score zero.
class SimEvaluator : public CandidateEvaluator {
 public:
  explicit SimEvaluator(const SimWorld& world, uint64_t run_seed = 0)
      : backend_(world, run_seed) {}

  EvalResult evaluate_program(const std::string& program,
                              const Problem& problem) override {
    detail::SimCallKey key;
    if (!detail::parse_sim_header(program, key)) {
      EvalResult r;
      r.pass_rate = 0.0;
      r.binary_accuracy = false;
      r.verdicts = {Verdict::WrongAnswer};
      return r;
    }
    if (key.problem_id != problem.id)
      throw InvalidInput("sim_evaluate: candidate belongs to problem '" +
                         key.problem_id + "', not '" + problem.id + "'");
    const auto gen =
        backend_.sample_keyed(model_choice_from_string(key.model), key);
    Rng eval_rng =
        derive_rng(backend_.draw_seed(),
                   key.phase + "/eval/" + key.problem_id + "/" + key.model,
                   key.call_index);
    return sim_evaluate(gen.solved, eval_rng);
  }

 private:
  SimBackend backend_;
};

}  // namespace evoroute
