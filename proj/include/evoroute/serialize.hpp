#pragma once

/**
 * JSON encodings for run artifacts: traces, warm-up records, router state
 * (including the full adaptive-tree learning state), archives, ledgers,
 * and whole-run checkpoints. Everything round-trips exactly: doubles use
 * shortest-round-trip formatting and keys are emitted in sorted order, so
 * identical states serialize to identical bytes.
 */

#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evoroute/adwin.hpp"
#include "evoroute/backend.hpp"
#include "evoroute/confidence.hpp"
#include "evoroute/evolution.hpp"
#include "evoroute/hoeffding.hpp"
#include "evoroute/ledger.hpp"
#include "evoroute/router.hpp"
#include "evoroute/rng.hpp"
#include "evoroute/tree.hpp"

namespace evoroute {

using json = nlohmann::json;

// ============================================================================
// Confidence vectors
// ============================================================================

inline json conf_to_json(const ConfidenceVector& v) {
  return json{{"lgc", v.lgc}, {"mc", v.mc},     {"tc", v.tc},
              {"bwc", v.bwc}, {"tokens", v.token_count}};
}

inline ConfidenceVector conf_from_json(const json& j) {
  ConfidenceVector v;
  v.lgc = j.at("lgc").get<double>();
  v.mc = j.at("mc").get<double>();
  v.tc = j.at("tc").get<double>();
  v.bwc = j.at("bwc").get<double>();
  v.token_count = j.value("tokens", size_t{0});
  return v;
}

// ============================================================================
// Adwin / Gaussian / HAT state
// ============================================================================

inline json adwin_to_json(const Adwin& a) {
  const auto s = a.save();
  json levels = json::array();
  for (const auto& row : s.levels) {
    json jrow = json::array();
    for (const auto& [total, variance] : row)
      jrow.push_back(json::array({total, variance}));
    levels.push_back(jrow);
  }
  return json{{"delta", s.delta},       {"width", s.width},
              {"time", s.time},         {"total", s.total},
              {"variance", s.variance}, {"levels", levels}};
}

inline Adwin adwin_from_json(const json& j) {
  Adwin::State s;
  s.delta = j.at("delta").get<double>();
  s.width = j.at("width").get<int64_t>();
  s.time = j.at("time").get<int64_t>();
  s.total = j.at("total").get<double>();
  s.variance = j.at("variance").get<double>();
  for (const auto& jrow : j.at("levels")) {
    s.levels.emplace_back();
    for (const auto& b : jrow)
      s.levels.back().emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  }
  return Adwin::restore(s);
}

inline json gaussian_to_json(const GaussianEstimator& g) {
  if (g.count() == 0) return json{{"n", 0}};
  const auto s = g.save();
  return json{{"n", s.n}, {"mean", s.mean}, {"m2", s.m2},
              {"min", s.min}, {"max", s.max}};
}

inline GaussianEstimator gaussian_from_json(const json& j) {
  GaussianEstimator::State s;
  s.n = j.at("n").get<int64_t>();
  if (s.n > 0) {
    s.mean = j.at("mean").get<double>();
    s.m2 = j.at("m2").get<double>();
    s.min = j.at("min").get<double>();
    s.max = j.at("max").get<double>();
  }
  return GaussianEstimator::restore(s);
}

inline json hat_node_to_json(const HoeffdingAdaptiveTree::Node& node) {
  json j;
  j["leaf"] = node.is_leaf;
  if (node.is_leaf) {
    j["counts"] = json::array({node.counts[0], node.counts[1]});
    j["wcheck"] = node.weight_at_last_check;
    j["mc_ok"] = node.majority_correct;
    j["nb_ok"] = node.bayes_correct;
    json gauss = json::array();
    for (const auto& feature : node.summaries) {
      json per_class = json::array();
      for (const auto& g : feature) per_class.push_back(gaussian_to_json(g));
      gauss.push_back(per_class);
    }
    j["gauss"] = gauss;
  } else {
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["error"] = adwin_to_json(node.error);
    j["left"] = hat_node_to_json(*node.left);
    j["right"] = hat_node_to_json(*node.right);
    if (node.alternate) {
      j["alt"] = hat_node_to_json(*node.alternate);
      j["alt_error"] = adwin_to_json(node.alternate_error);
    }
  }
  return j;
}

inline HoeffdingAdaptiveTree::NodePtr hat_node_from_json(const json& j) {
  auto node = std::make_unique<HoeffdingAdaptiveTree::Node>();
  node->is_leaf = j.at("leaf").get<bool>();
  if (node->is_leaf) {
    node->counts = {j.at("counts")[0].get<double>(),
                    j.at("counts")[1].get<double>()};
    node->weight_at_last_check = j.at("wcheck").get<double>();
    node->majority_correct = j.at("mc_ok").get<double>();
    node->bayes_correct = j.at("nb_ok").get<double>();
    const auto& gauss = j.at("gauss");
    for (int f = 0; f < 4; ++f)
      for (int c = 0; c < 2; ++c)
        node->summaries[f][c] = gaussian_from_json(gauss.at(f).at(c));
  } else {
    node->feature = j.at("feature").get<int>();
    node->threshold = j.at("threshold").get<double>();
    node->error = adwin_from_json(j.at("error"));
    node->left = hat_node_from_json(j.at("left"));
    node->right = hat_node_from_json(j.at("right"));
    if (j.contains("alt")) {
      node->alternate = hat_node_from_json(j.at("alt"));
      node->alternate_error = adwin_from_json(j.at("alt_error"));
    }
  }
  return node;
}

inline json hat_to_json(const HoeffdingAdaptiveTree& hat) {
  const auto& cfg = hat.config();
  return json{{"grace", cfg.grace_period},
              {"delta", cfg.delta},
              {"tau", cfg.tau},
              {"drift_delta", cfg.drift_delta},
              {"examples", hat.examples_seen()},
              {"root", hat_node_to_json(*hat.root())}};
}

inline HoeffdingAdaptiveTree hat_from_json(const json& j) {
  HatConfig cfg;
  cfg.grace_period = j.at("grace").get<int>();
  cfg.delta = j.at("delta").get<double>();
  cfg.tau = j.at("tau").get<double>();
  cfg.drift_delta = j.at("drift_delta").get<double>();
  HoeffdingAdaptiveTree hat(cfg);
  hat.mutable_root() = hat_node_from_json(j.at("root"));
  hat.set_examples_seen(j.at("examples").get<int64_t>());
  return hat;
}

// ============================================================================
// Router state
// ============================================================================

inline json router_to_json(const Router& router) {
  json j;
  j["policy"] = to_string(router.kind());
  switch (router.kind()) {
    case PolicyKind::AdaptiveHat:
      j["hat"] = hat_to_json(router.hat());
      break;
    case PolicyKind::StaticTree:
      j["tree"] = router.tree().serialize();
      break;
    case PolicyKind::ZScoreThreshold: {
      const auto& z = router.zscore_params();
      j["means"] = z.means;
      j["stds"] = z.stds;
      j["cutoff"] = z.cutoff;
      break;
    }
    case PolicyKind::Random:
      j["large_fraction"] = router.large_fraction();
      break;
    default:
      break;
  }
  return j;
}

inline Router router_from_json(const json& j) {
  const PolicyKind kind = policy_kind_from_string(j.at("policy").get<std::string>());
  switch (kind) {
    case PolicyKind::AdaptiveHat:
      return Router::adaptive_from(hat_from_json(j.at("hat")));
    case PolicyKind::StaticTree:
      return Router::static_tree(
          DecisionTree::deserialize(j.at("tree").get<std::string>()));
    case PolicyKind::ZScoreThreshold: {
      ZScoreParams z;
      z.means = j.at("means").get<FeatureVector>();
      z.stds = j.at("stds").get<FeatureVector>();
      z.cutoff = j.at("cutoff").get<double>();
      return Router::zscore(z);
    }
    case PolicyKind::Random:
      return Router::random(j.at("large_fraction").get<double>());
    case PolicyKind::Cascade:
      return Router::cascade();
    case PolicyKind::AlwaysSmall:
      return Router::always_small();
    case PolicyKind::AlwaysLarge:
      return Router::always_large();
  }
  throw InvalidInput("router_from_json: unhandled policy");
}

// ============================================================================
// Candidates, archive, ledger
// ============================================================================

inline json candidate_to_json(const Candidate& c) {
  json j;
  j["id"] = c.id;
  j["program"] = c.program;
  j["pass"] = c.pass_rate;
  j["complexity"] = c.complexity;
  j["conf"] = c.confidence ? conf_to_json(*c.confidence) : json(nullptr);
  j["producer"] = c.producer ? json(to_string(*c.producer)) : json(nullptr);
  j["parent"] = c.parent_id ? json(*c.parent_id) : json(nullptr);
  j["iter"] = c.iteration;
  j["island"] = c.island;
  return j;
}

inline Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.id = j.at("id").get<uint64_t>();
  c.program = j.at("program").get<std::string>();
  c.pass_rate = j.at("pass").get<double>();
  c.complexity = j.at("complexity").get<double>();
  if (!j.at("conf").is_null()) c.confidence = conf_from_json(j.at("conf"));
  if (!j.at("producer").is_null())
    c.producer = model_choice_from_string(j.at("producer").get<std::string>());
  if (!j.at("parent").is_null()) c.parent_id = j.at("parent").get<uint64_t>();
  c.iteration = j.at("iter").get<int>();
  c.island = j.at("island").get<int>();
  return c;
}

inline json archive_to_json(const Archive& archive) {
  json islands = json::array();
  for (int i = 0; i < archive.island_count(); ++i) {
    json cells = json::array();
    for (const auto& [key, cand] : archive.island(i))
      cells.push_back(candidate_to_json(cand));
    islands.push_back(cells);
  }
  json elites = json::array();
  for (const auto& e : archive.elites()) elites.push_back(candidate_to_json(e));
  return json{{"bins", archive.bins()}, {"islands", islands}, {"elites", elites}};
}

inline Archive archive_from_json(const json& j, int elite_capacity) {
  const auto& islands = j.at("islands");
  Archive archive(static_cast<int>(islands.size()), j.at("bins").get<int>(),
                  elite_capacity);
  for (size_t i = 0; i < islands.size(); ++i)
    for (const auto& cell : islands[i])
      archive.restore_cell(static_cast<int>(i), candidate_from_json(cell));
  std::vector<Candidate> elites;
  for (const auto& e : j.at("elites")) elites.push_back(candidate_from_json(e));
  archive.restore_elites(std::move(elites));
  return archive;
}

inline json ledger_to_json(const CostLedger& ledger) {
  const auto s = ledger.save();
  json events = json::array();
  for (const auto& ev : s.events)
    events.push_back(json{{"model", to_string(ev.model)},
                          {"problem", ev.problem_id},
                          {"iter", ev.iteration},
                          {"slot", ev.slot},
                          {"seq", ev.seq}});
  return json{{"small", s.small_calls}, {"large", s.large_calls},
              {"events", events}};
}

inline void ledger_from_json(const json& j, CostLedger& ledger) {
  CostLedger::State s;
  s.small_calls = j.at("small").get<uint64_t>();
  s.large_calls = j.at("large").get<uint64_t>();
  for (const auto& ev : j.at("events")) {
    CallEvent e;
    e.model = model_choice_from_string(ev.at("model").get<std::string>());
    e.problem_id = ev.at("problem").get<std::string>();
    e.iteration = ev.at("iter").get<int>();
    e.slot = ev.at("slot").get<int>();
    e.seq = ev.at("seq").get<uint64_t>();
    s.events.push_back(std::move(e));
  }
  ledger.restore_from(s);
}

// ============================================================================
// Trace lines and warm-up records
// ============================================================================

inline json trace_to_json(const TraceEntry& t) {
  json j;
  j["problem"] = t.problem_id;
  j["iter"] = t.iteration;
  j["island"] = t.island;
  j["slot"] = t.slot;
  j["conf"] = t.confidence ? conf_to_json(*t.confidence) : json(nullptr);
  j["choice"] = to_string(t.choice);
  j["u"] = t.random_draw ? json(*t.random_draw) : json(nullptr);
  j["pass_small"] = t.pass_small ? json(*t.pass_small) : json(nullptr);
  j["pass_large"] = t.pass_large ? json(*t.pass_large) : json(nullptr);
  j["feedback"] = t.feedback_label ? json(*t.feedback_label) : json(nullptr);
  return j;
}

inline TraceEntry trace_from_json(const json& j) {
  TraceEntry t;
  t.problem_id = j.at("problem").get<std::string>();
  t.iteration = j.at("iter").get<int>();
  t.island = j.at("island").get<int>();
  t.slot = j.at("slot").get<int>();
  if (!j.at("conf").is_null()) t.confidence = conf_from_json(j.at("conf"));
  t.choice = model_choice_from_string(j.at("choice").get<std::string>());
  if (!j.at("u").is_null()) t.random_draw = j.at("u").get<double>();
  if (!j.at("pass_small").is_null())
    t.pass_small = j.at("pass_small").get<double>();
  if (!j.at("pass_large").is_null())
    t.pass_large = j.at("pass_large").get<double>();
  if (!j.at("feedback").is_null()) t.feedback_label = j.at("feedback").get<int>();
  return t;
}

inline json warmup_record_to_json(const WarmupRecord& r) {
  return json{{"problem", r.problem_id},
              {"pass_small", r.small_pass_rate},
              {"pass_large", r.large_pass_rate},
              {"conf", conf_to_json(r.confidence)},
              {"label_small", r.label_small_perspective},
              {"label_large", r.label_large_perspective}};
}

inline WarmupRecord warmup_record_from_json(const json& j) {
  WarmupRecord r;
  r.problem_id = j.at("problem").get<std::string>();
  r.small_pass_rate = j.at("pass_small").get<double>();
  r.large_pass_rate = j.at("pass_large").get<double>();
  r.confidence = conf_from_json(j.at("conf"));
  r.label_small_perspective = j.at("label_small").get<int>();
  r.label_large_perspective = j.at("label_large").get<int>();
  return r;
}

template <typename T, typename ToJson>
inline void write_jsonl(const std::string& path, const std::vector<T>& items,
                        ToJson to_json_fn) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  for (const auto& item : items) out << to_json_fn(item).dump() << "\n";
}

template <typename FromJson>
inline auto read_jsonl(const std::string& path, FromJson from_json_fn)
    -> std::vector<decltype(from_json_fn(json{}))> {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  std::vector<decltype(from_json_fn(json{}))> items;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      items.push_back(from_json_fn(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  return items;
}

// ============================================================================
// Run checkpoints
// ============================================================================

struct Checkpoint {
  int format_version = 1;
  std::string config_hash;
  std::string policy;
  uint64_t seed = 0;
  size_t problem_index = 0;  // suite position of the problem being evolved
  std::string problem_id;
  int iteration = 0;  // last completed iteration for that problem
  json archive;
  uint64_t next_candidate_id = 1;
  json ledger;
  json router;
  std::array<uint64_t, 4> rng_state{};
  std::vector<ProblemOutcome> outcomes;  // problems completed so far
};

inline json checkpoint_to_json(const Checkpoint& c) {
  json outcomes = json::array();
  for (const auto& o : c.outcomes)
    outcomes.push_back(json{{"problem", o.problem_id},
                            {"solved", o.solved},
                            {"best_pass", o.best_pass_rate}});
  return json{{"format_version", c.format_version},
              {"config_hash", c.config_hash},
              {"policy", c.policy},
              {"seed", c.seed},
              {"problem_index", c.problem_index},
              {"problem_id", c.problem_id},
              {"iteration", c.iteration},
              {"archive", c.archive},
              {"next_candidate_id", c.next_candidate_id},
              {"ledger", c.ledger},
              {"router", c.router},
              {"rng_state", c.rng_state},
              {"outcomes", outcomes}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  c.format_version = j.at("format_version").get<int>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.policy = j.at("policy").get<std::string>();
  c.seed = j.at("seed").get<uint64_t>();
  c.problem_index = j.at("problem_index").get<size_t>();
  c.problem_id = j.at("problem_id").get<std::string>();
  c.iteration = j.at("iteration").get<int>();
  c.archive = j.at("archive");
  c.next_candidate_id = j.at("next_candidate_id").get<uint64_t>();
  c.ledger = j.at("ledger");
  c.router = j.at("router");
  c.rng_state = j.at("rng_state").get<std::array<uint64_t, 4>>();
  for (const auto& o : j.at("outcomes")) {
    ProblemOutcome out;
    out.problem_id = o.at("problem").get<std::string>();
    out.solved = o.at("solved").get<bool>();
    out.best_pass_rate = o.at("best_pass").get<double>();
    c.outcomes.push_back(std::move(out));
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write checkpoint " + path);
  out << checkpoint_to_json(c).dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace evoroute
