#pragma once

/**
 * Run configuration: one JSON file with sections for general, policy,
 * backend, evolution, evaluator, and confidence settings. Every field has
 * a default matching the framework's reference configuration; unknown keys
 * are rejected so typos cannot silently fall back to defaults. Flags given
 * on the command line win over file values.
 */

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evoroute/backend.hpp"
#include "evoroute/common.hpp"
#include "evoroute/confidence.hpp"
#include "evoroute/evolution.hpp"
#include "evoroute/hoeffding.hpp"
#include "evoroute/rng.hpp"

namespace evoroute {

struct EvaluatorConfig {
  std::vector<std::string> interpreter{"python3"};
  double timeout_s = 1200.0;
  int parallel = 32;
  int max_retries = 4;
};

struct RunConfig {
  // general
  uint64_t seed = 42;
  int checkpoint_interval = 1;

  // policy
  std::string policy = "adaptive";
  double random_large_fraction = 0.5;
  double zscore_cutoff = 0.0;
  int tree_depth = 5;
  HatConfig hat;

  // backend
  std::string backend_kind = "sim";  // "sim" | "http"
  GenParams gen;
  EndpointConfig small;
  EndpointConfig large;
  SimWorldConfig world;

  EvolutionConfig evolution;
  EvaluatorConfig evaluator;
  ConfidenceConfig confidence;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& section) {
  if (!j.is_object())
    throw InvalidInput("config: section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key))
      throw InvalidInput("config: unknown key '" + key + "' in section '" +
                         section + "'");
}

inline nlohmann::json metric_to_json(const MetricStats& m) {
  return nlohmann::json::array(
      {m.unsolved_mean, m.unsolved_std, m.solved_mean, m.solved_std});
}

inline MetricStats metric_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4)
    throw InvalidInput("config: metric stats must be [unsolved_mean, "
                       "unsolved_std, solved_mean, solved_std]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

inline const char* layout_name(DifficultyLayout l) {
  switch (l) {
    case DifficultyLayout::UniformRandom: return "uniform";
    case DifficultyLayout::Ramp: return "ramp";
    case DifficultyLayout::TwoPhase: return "two_phase";
  }
  return "uniform";
}

inline DifficultyLayout layout_from_name(const std::string& s) {
  if (s == "uniform") return DifficultyLayout::UniformRandom;
  if (s == "ramp") return DifficultyLayout::Ramp;
  if (s == "two_phase") return DifficultyLayout::TwoPhase;
  throw InvalidInput("config: unknown difficulty layout '" + s + "'");
}

}  // namespace detail

inline void RunConfig::validate() const {
  policy_kind_from_string(policy);
  if (backend_kind != "sim" && backend_kind != "http")
    throw InvalidInput("config: backend.kind must be 'sim' or 'http'");
  if (random_large_fraction < 0.0 || random_large_fraction > 1.0)
    throw InvalidInput("config: random_large_fraction outside [0, 1]");
  if (tree_depth < 1) throw InvalidInput("config: tree_depth must be >= 1");
  if (checkpoint_interval < 1)
    throw InvalidInput("config: checkpoint_interval must be >= 1");
  hat.validate();
  evolution.validate();
  confidence.validate();
  if (evaluator.interpreter.empty())
    throw InvalidInput("config: evaluator.interpreter must not be empty");
  if (evaluator.parallel < 1)
    throw InvalidInput("config: evaluator.parallel must be >= 1");
}

inline nlohmann::json RunConfig::to_json() const {
  using nlohmann::json;
  json j;
  j["general"] = {{"random_seed", seed},
                  {"max_iterations", evolution.max_iterations},
                  {"checkpoint_interval", checkpoint_interval}};
  j["policy"] = {{"kind", policy},
                 {"random_large_fraction", random_large_fraction},
                 {"zscore_cutoff", zscore_cutoff},
                 {"tree_depth", tree_depth},
                 {"hat",
                  {{"grace_period", hat.grace_period},
                   {"delta", hat.delta},
                   {"tau", hat.tau},
                   {"drift_delta", hat.drift_delta}}}};
  j["backend"] = {
      {"kind", backend_kind},
      {"temperature", gen.temperature},
      {"top_p", gen.top_p},
      {"max_tokens", gen.max_tokens},
      {"timeout_s", gen.timeout_s},
      {"top_logprobs", gen.top_logprobs},
      {"max_retries", gen.max_retries},
      {"backoff_ms", gen.backoff_ms},
      {"small", {{"base_url", small.base_url}, {"model", small.model}}},
      {"large", {{"base_url", large.base_url}, {"model", large.model}}},
      {"sim",
       {{"seed", world.seed},
        {"token_count", world.token_count},
        {"top_k", world.top_k},
        {"layout", detail::layout_name(world.layout)},
        {"phase1", nlohmann::json::array({world.phase1_lo, world.phase1_hi})},
        {"phase2", nlohmann::json::array({world.phase2_lo, world.phase2_hi})},
        {"small_easy", world.small_easy},
        {"small_hard", world.small_hard},
        {"small_cut", world.small_cut},
        {"large_easy", world.large_easy},
        {"large_hard", world.large_hard},
        {"large_cut", world.large_cut},
        {"metrics",
         {{"lgc", detail::metric_to_json(world.lgc)},
          {"mc", detail::metric_to_json(world.mc)},
          {"tc", detail::metric_to_json(world.tc)},
          {"bwc", detail::metric_to_json(world.bwc)}}}}}};
  j["evolution"] = {{"population_size", evolution.population_size},
                    {"archive_size", evolution.archive_size},
                    {"islands", evolution.islands},
                    {"elite_ratio", evolution.elite_ratio},
                    {"exploration_ratio", evolution.exploration_ratio},
                    {"exploitation_ratio", evolution.exploitation_ratio},
                    {"feature_bins", evolution.feature_bins},
                    {"migration_interval", evolution.migration_interval},
                    {"migration_rate", evolution.migration_rate},
                    {"complexity_cap", evolution.complexity_cap},
                    {"stop_on_solve", evolution.stop_on_solve}};
  j["evaluator"] = {{"interpreter", evaluator.interpreter},
                    {"timeout_s", evaluator.timeout_s},
                    {"parallel", evaluator.parallel},
                    {"max_retries", evaluator.max_retries}};
  j["confidence"] = {{"top_k", confidence.top_k},
                     {"group_window", confidence.group_window},
                     {"tail_window", confidence.tail_window},
                     {"bottom_percent", confidence.bottom_percent}};
  return j;
}

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  using detail::check_keys;
  RunConfig c;
  check_keys(j, {"general", "policy", "backend", "evolution", "evaluator",
                 "confidence"},
             "<root>");

  if (j.contains("general")) {
    const auto& g = j["general"];
    check_keys(g, {"random_seed", "max_iterations", "checkpoint_interval"},
               "general");
    c.seed = g.value("random_seed", c.seed);
    c.evolution.seed = c.seed;
    c.evolution.max_iterations =
        g.value("max_iterations", c.evolution.max_iterations);
    c.checkpoint_interval = g.value("checkpoint_interval", c.checkpoint_interval);
  }

  if (j.contains("policy")) {
    const auto& p = j["policy"];
    check_keys(p, {"kind", "random_large_fraction", "zscore_cutoff",
                   "tree_depth", "hat"},
               "policy");
    c.policy = p.value("kind", c.policy);
    c.random_large_fraction =
        p.value("random_large_fraction", c.random_large_fraction);
    c.zscore_cutoff = p.value("zscore_cutoff", c.zscore_cutoff);
    c.tree_depth = p.value("tree_depth", c.tree_depth);
    if (p.contains("hat")) {
      const auto& h = p["hat"];
      check_keys(h, {"grace_period", "delta", "tau", "drift_delta"}, "policy.hat");
      c.hat.grace_period = h.value("grace_period", c.hat.grace_period);
      c.hat.delta = h.value("delta", c.hat.delta);
      c.hat.tau = h.value("tau", c.hat.tau);
      c.hat.drift_delta = h.value("drift_delta", c.hat.drift_delta);
    }
  }

  if (j.contains("backend")) {
    const auto& b = j["backend"];
    check_keys(b,
               {"kind", "temperature", "top_p", "max_tokens", "timeout_s",
                "top_logprobs", "max_retries", "backoff_ms", "small", "large",
                "sim"},
               "backend");
    c.backend_kind = b.value("kind", c.backend_kind);
    c.gen.temperature = b.value("temperature", c.gen.temperature);
    c.gen.top_p = b.value("top_p", c.gen.top_p);
    c.gen.max_tokens = b.value("max_tokens", c.gen.max_tokens);
    c.gen.timeout_s = b.value("timeout_s", c.gen.timeout_s);
    c.gen.top_logprobs = b.value("top_logprobs", c.gen.top_logprobs);
    c.gen.max_retries = b.value("max_retries", c.gen.max_retries);
    c.gen.backoff_ms = b.value("backoff_ms", c.gen.backoff_ms);
    for (auto [name, ep] : {std::pair{"small", &c.small}, {"large", &c.large}}) {
      if (!b.contains(name)) continue;
      const auto& e = b[name];
      check_keys(e, {"base_url", "model", "api_key"},
                 std::string("backend.") + name);
      ep->base_url = e.value("base_url", ep->base_url);
      ep->model = e.value("model", ep->model);
      ep->api_key = e.value("api_key", ep->api_key);
    }
    if (b.contains("sim")) {
      const auto& s = b["sim"];
      check_keys(s,
                 {"seed", "token_count", "top_k", "layout", "phase1", "phase2",
                  "small_easy", "small_hard", "small_cut", "large_easy",
                  "large_hard", "large_cut", "metrics"},
                 "backend.sim");
      c.world.seed = s.value("seed", c.world.seed);
      c.world.token_count = s.value("token_count", c.world.token_count);
      c.world.top_k = s.value("top_k", c.world.top_k);
      if (s.contains("layout"))
        c.world.layout = detail::layout_from_name(s["layout"].get<std::string>());
      if (s.contains("phase1")) {
        c.world.phase1_lo = s["phase1"].at(0).get<double>();
        c.world.phase1_hi = s["phase1"].at(1).get<double>();
      }
      if (s.contains("phase2")) {
        c.world.phase2_lo = s["phase2"].at(0).get<double>();
        c.world.phase2_hi = s["phase2"].at(1).get<double>();
      }
      c.world.small_easy = s.value("small_easy", c.world.small_easy);
      c.world.small_hard = s.value("small_hard", c.world.small_hard);
      c.world.small_cut = s.value("small_cut", c.world.small_cut);
      c.world.large_easy = s.value("large_easy", c.world.large_easy);
      c.world.large_hard = s.value("large_hard", c.world.large_hard);
      c.world.large_cut = s.value("large_cut", c.world.large_cut);
      if (s.contains("metrics")) {
        const auto& m = s["metrics"];
        check_keys(m, {"lgc", "mc", "tc", "bwc"}, "backend.sim.metrics");
        if (m.contains("lgc")) c.world.lgc = detail::metric_from_json(m["lgc"]);
        if (m.contains("mc")) c.world.mc = detail::metric_from_json(m["mc"]);
        if (m.contains("tc")) c.world.tc = detail::metric_from_json(m["tc"]);
        if (m.contains("bwc")) c.world.bwc = detail::metric_from_json(m["bwc"]);
      }
    }
  }

  if (j.contains("evolution")) {
    const auto& e = j["evolution"];
    check_keys(e,
               {"population_size", "archive_size", "islands", "elite_ratio",
                "exploration_ratio", "exploitation_ratio", "feature_bins",
                "migration_interval", "migration_rate", "complexity_cap",
                "stop_on_solve"},
               "evolution");
    c.evolution.population_size =
        e.value("population_size", c.evolution.population_size);
    c.evolution.archive_size = e.value("archive_size", c.evolution.archive_size);
    c.evolution.islands = e.value("islands", c.evolution.islands);
    c.evolution.elite_ratio = e.value("elite_ratio", c.evolution.elite_ratio);
    c.evolution.exploration_ratio =
        e.value("exploration_ratio", c.evolution.exploration_ratio);
    c.evolution.exploitation_ratio =
        e.value("exploitation_ratio", c.evolution.exploitation_ratio);
    c.evolution.feature_bins = e.value("feature_bins", c.evolution.feature_bins);
    c.evolution.migration_interval =
        e.value("migration_interval", c.evolution.migration_interval);
    c.evolution.migration_rate =
        e.value("migration_rate", c.evolution.migration_rate);
    c.evolution.complexity_cap =
        e.value("complexity_cap", c.evolution.complexity_cap);
    c.evolution.stop_on_solve = e.value("stop_on_solve", c.evolution.stop_on_solve);
  }

  if (j.contains("evaluator")) {
    const auto& e = j["evaluator"];
    check_keys(e, {"interpreter", "timeout_s", "parallel", "max_retries"},
               "evaluator");
    if (e.contains("interpreter"))
      c.evaluator.interpreter = e["interpreter"].get<std::vector<std::string>>();
    c.evaluator.timeout_s = e.value("timeout_s", c.evaluator.timeout_s);
    c.evaluator.parallel = e.value("parallel", c.evaluator.parallel);
    c.evaluator.max_retries = e.value("max_retries", c.evaluator.max_retries);
  }

  if (j.contains("confidence")) {
    const auto& f = j["confidence"];
    check_keys(f, {"top_k", "group_window", "tail_window", "bottom_percent"},
               "confidence");
    c.confidence.top_k = f.value("top_k", c.confidence.top_k);
    c.confidence.group_window = f.value("group_window", c.confidence.group_window);
    c.confidence.tail_window = f.value("tail_window", c.confidence.tail_window);
    c.confidence.bottom_percent =
        f.value("bottom_percent", c.confidence.bottom_percent);
  }

  c.validate();
  return c;
}

// Environment variables override endpoint settings from the file.
inline void apply_env_overrides(RunConfig& cfg) {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  if (auto v = env("EVOROUTE_SMALL_URL"); !v.empty()) cfg.small.base_url = v;
  if (auto v = env("EVOROUTE_LARGE_URL"); !v.empty()) cfg.large.base_url = v;
  if (auto v = env("EVOROUTE_SMALL_MODEL"); !v.empty()) cfg.small.model = v;
  if (auto v = env("EVOROUTE_LARGE_MODEL"); !v.empty()) cfg.large.model = v;
  if (auto v = env("EVOROUTE_API_KEY"); !v.empty()) {
    cfg.small.api_key = v;
    cfg.large.api_key = v;
  }
}

inline RunConfig load_config(const std::string& path) {
  if (path.empty()) {
    RunConfig c;
    apply_env_overrides(c);
    return c;
  }
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError("config: " + path + ": " + e.what());
  }
  RunConfig c = RunConfig::from_json(j);
  apply_env_overrides(c);
  return c;
}

// Effective-config hash printed by every command and stamped into run
// artifacts.
inline std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.to_json().dump())));
  return buf;
}

// Hash over everything except the policy section and seed; runs that agree
// here measure the same workload and may be merged into one comparison.
inline std::string compat_hash(const RunConfig& cfg) {
  nlohmann::json j = cfg.to_json();
  j.erase("policy");
  j["general"].erase("random_seed");
  j["backend"]["sim"].erase("seed");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace evoroute
