#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sptlb/evaluation.hpp"
#include "sptlb/hierarchy.hpp"
#include "sptlb/model.hpp"
#include "sptlb/problem.hpp"
#include "sptlb/solvers.hpp"

namespace sptlb::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSnapshotFormat = "sptlb-snapshot v1";
inline constexpr const char* kSolutionFormat = "sptlb-solution v1";

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

namespace detail {

inline const Json& field(const Json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path + "." + key, "missing field");
  return *it;
}

inline double number(const Json& j, const char* key, const std::string& path) {
  const Json& v = field(j, key, path);
  if (!v.is_number()) throw ValidationError(path + "." + key, "expected a number");
  return v.get<double>();
}

inline double number_or(const Json& j, const char* key, const std::string& path, double fallback) {
  return j.contains(key) ? number(j, key, path) : fallback;
}

inline std::int64_t integer(const Json& j, const char* key, const std::string& path) {
  const Json& v = field(j, key, path);
  if (!v.is_number_integer()) throw ValidationError(path + "." + key, "expected an integer");
  return v.get<std::int64_t>();
}

inline std::string string(const Json& j, const char* key, const std::string& path) {
  const Json& v = field(j, key, path);
  if (!v.is_string()) throw ValidationError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

inline const Json& array(const Json& j, const char* key, const std::string& path) {
  const Json& v = field(j, key, path);
  if (!v.is_array()) throw ValidationError(path + "." + key, "expected an array");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Snapshot
// ---------------------------------------------------------------------------

inline Json to_json(const Snapshot& s) {
  Json j;
  j["format"] = kSnapshotFormat;
  Json tiers = Json::array();
  for (const auto& t : s.tiers()) {
    Json regions = Json::object();
    for (const auto& [region, slots] : t.regions) regions[region] = slots;
    tiers.push_back({{"tier_id", t.tier_id},
                     {"cpu_capacity", t.cpu_capacity},
                     {"mem_capacity", t.mem_capacity},
                     {"task_limit", t.task_limit},
                     {"util_target_cpu", t.util_target_cpu},
                     {"util_target_mem", t.util_target_mem},
                     {"util_target_tasks", t.util_target_tasks},
                     {"supported_slos", t.supported_slos},
                     {"regions", regions}});
  }
  j["tiers"] = std::move(tiers);
  Json apps = Json::array();
  for (const auto& a : s.apps()) {
    apps.push_back({{"app_id", a.app_id},
                    {"cpu_p99", a.cpu_p99},
                    {"mem_p99", a.mem_p99},
                    {"task_count", a.task_count},
                    {"slo_score", a.slo_score},
                    {"criticality_score", a.criticality_score},
                    {"source_region", a.source_region},
                    {"current_tier", a.current_tier}});
  }
  j["apps"] = std::move(apps);
  if (const auto& model = s.latency_model()) {
    Json pairs = Json::array();
    for (const auto& [key, d] : model->pairs()) {
      pairs.push_back(
          {{"from", key.first}, {"to", key.second}, {"mean_ms", d.mean_ms}, {"stddev_ms", d.stddev_ms}});
    }
    j["latency_model"] = {{"symmetric", model->symmetric()}, {"pairs", std::move(pairs)}};
  }
  return j;
}

inline Snapshot snapshot_from_json(const Json& j, SnapshotOptions options = {}) {
  using namespace detail;
  if (!j.is_object()) throw ParseError("snapshot: top level must be an object");
  if (!j.contains("format") || j["format"] != kSnapshotFormat) {
    throw ParseError(std::string("snapshot: missing or unsupported format header (expected '") +
                     kSnapshotFormat + "')");
  }
  std::vector<TierSpec> tiers;
  const Json& jt = array(j, "tiers", "snapshot");
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const std::string path = "tiers[" + std::to_string(i) + "]";
    const Json& e = jt[i];
    TierSpec t;
    t.tier_id = string(e, "tier_id", path);
    t.cpu_capacity = number(e, "cpu_capacity", path);
    t.mem_capacity = number(e, "mem_capacity", path);
    t.task_limit = integer(e, "task_limit", path);
    t.util_target_cpu = number_or(e, "util_target_cpu", path, 0.70);
    t.util_target_mem = number_or(e, "util_target_mem", path, 0.70);
    t.util_target_tasks = number_or(e, "util_target_tasks", path, 0.80);
    const Json& slos = array(e, "supported_slos", path);
    for (const auto& v : slos) {
      if (!v.is_number_integer()) throw ValidationError(path + ".supported_slos", "expected integers");
      t.supported_slos.insert(v.get<int>());
    }
    const Json& regions = field(e, "regions", path);
    if (!regions.is_object()) throw ValidationError(path + ".regions", "expected an object");
    for (const auto& [region, slots] : regions.items()) {
      if (!slots.is_number_integer()) {
        throw ValidationError(path + ".regions." + region, "expected an integer slot count");
      }
      t.regions[region] = slots.get<std::int64_t>();
    }
    tiers.push_back(std::move(t));
  }

  std::vector<AppRecord> apps;
  const Json& ja = array(j, "apps", "snapshot");
  for (std::size_t i = 0; i < ja.size(); ++i) {
    const std::string path = "apps[" + std::to_string(i) + "]";
    const Json& e = ja[i];
    AppRecord a;
    a.app_id = string(e, "app_id", path);
    a.cpu_p99 = number(e, "cpu_p99", path);
    a.mem_p99 = number(e, "mem_p99", path);
    a.task_count = integer(e, "task_count", path);
    a.slo_score = static_cast<int>(integer(e, "slo_score", path));
    a.criticality_score = number(e, "criticality_score", path);
    a.source_region = string(e, "source_region", path);
    a.current_tier = string(e, "current_tier", path);
    apps.push_back(std::move(a));
  }

  std::optional<LatencyModel> model;
  if (j.contains("latency_model") && !j["latency_model"].is_null()) {
    const Json& jm = j["latency_model"];
    const bool symmetric = jm.contains("symmetric") ? jm["symmetric"].get<bool>() : true;
    model.emplace(symmetric);
    const Json& pairs = array(jm, "pairs", "latency_model");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const std::string path = "latency_model.pairs[" + std::to_string(i) + "]";
      model->set(string(pairs[i], "from", path), string(pairs[i], "to", path),
                 {number(pairs[i], "mean_ms", path), number(pairs[i], "stddev_ms", path)});
    }
  }
  return Snapshot(std::move(tiers), std::move(apps), std::move(model), options);
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Snapshot read_snapshot(const std::string& path, SnapshotOptions options = {}) {
  return snapshot_from_json(parse_json(read_file(path), path), options);
}

inline void write_snapshot(const std::string& path, const Snapshot& s) {
  write_file(path, dump(to_json(s)));
}

// ---------------------------------------------------------------------------
// Solution
// ---------------------------------------------------------------------------

inline Json metrics_json(const std::vector<TierMetrics>& metrics) {
  Json out = Json::array();
  for (const auto& m : metrics) {
    out.push_back({{"tier_id", m.tier_id},
                   {"cpu_used", m.cpu_used},
                   {"mem_used", m.mem_used},
                   {"tasks_used", m.tasks_used},
                   {"app_count", m.app_count},
                   {"cpu_util", m.cpu_util},
                   {"mem_util", m.mem_util},
                   {"task_util", m.task_util}});
  }
  return out;
}

inline Json score_json(const ScoreVector& sc) {
  return {{"over_target", sc.over_target},
          {"resource_imbalance", sc.resource_imbalance},
          {"task_imbalance", sc.task_imbalance},
          {"movement_cost", sc.movement_cost},
          {"critical_moves", sc.critical_moves}};
}

inline Json moves_json(const Snapshot& s, const std::vector<Move>& moves) {
  Json out = Json::array();
  for (const auto& m : moves) {
    out.push_back({{"app_id", s.app(m.app).app_id},
                   {"from", s.tier(m.from).tier_id},
                   {"to", s.tier(m.to).tier_id}});
  }
  return out;
}

inline Json avoid_json(const Snapshot& s,
                       const std::vector<std::pair<std::size_t, std::size_t>>& avoid) {
  std::vector<std::pair<std::string, std::string>> ids;
  for (auto [a, t] : avoid) ids.emplace_back(s.app(a).app_id, s.tier(t).tier_id);
  std::sort(ids.begin(), ids.end());
  Json out = Json::array();
  for (const auto& [a, t] : ids) out.push_back({a, t});
  return out;
}

/// Solution file. Carries the run settings needed to re-check it.
inline Json to_json(const Problem& problem, const RunConfig& config, const Solution& sol,
                    bool record_timing = false) {
  const auto& s = problem.snapshot();
  Json j;
  j["format"] = kSolutionFormat;
  j["solver"] = sol.solver_name;
  j["status"] = to_string(sol.status);
  j["terminated_by"] = to_string(sol.terminated_by);
  j["iterations"] = sol.iterations;
  if (record_timing) j["elapsed_s"] = sol.elapsed_s;
  j["config"] = {{"move_budget_fraction", config.move_budget_fraction},
                 {"variant", to_string(problem.variant())},
                 {"region_overlap_threshold", config.region_overlap_threshold},
                 {"seed", config.seed},
                 {"timeout_s", config.timeout_s}};
  if (config.criticality_threshold) {
    j["config"]["criticality_threshold"] = *config.criticality_threshold;
  }
  j["move_budget"] = problem.move_budget();
  j["avoid"] = avoid_json(s, {problem.avoid().begin(), problem.avoid().end()});
  Json mapping = Json::object();
  for (std::size_t a = 0; a < sol.mapping.size(); ++a) {
    mapping[s.app(a).app_id] = s.tier(sol.mapping[a]).tier_id;
  }
  j["mapping"] = std::move(mapping);
  j["moves"] = moves_json(s, sol.moves);
  j["score"] = score_json(sol.score);
  j["projected"] = metrics_json(sol.projected);
  Json violations = Json::array();
  for (const auto& v : sol.violations) violations.push_back(v.describe());
  j["violations"] = std::move(violations);
  return j;
}

/// Parsed solution file.
struct SolutionFile {
  std::string solver;
  std::string status;
  RunConfig config;
  std::vector<std::pair<std::string, std::string>> avoid;
  IdMapping mapping;
  std::vector<TierMetrics> projected;
};

inline SolutionFile solution_from_json(const Json& j) {
  using namespace detail;
  if (!j.is_object() || !j.contains("format") || j["format"] != kSolutionFormat) {
    throw ParseError(std::string("solution: missing or unsupported format header (expected '") +
                     kSolutionFormat + "')");
  }
  SolutionFile out;
  out.solver = string(j, "solver", "solution");
  out.status = string(j, "status", "solution");
  const Json& cfg = field(j, "config", "solution");
  out.config.move_budget_fraction = number(cfg, "move_budget_fraction", "solution.config");
  out.config.variant = parse_variant(string(cfg, "variant", "solution.config"));
  out.config.region_overlap_threshold = number(cfg, "region_overlap_threshold", "solution.config");
  if (cfg.contains("criticality_threshold")) {
    out.config.criticality_threshold = number(cfg, "criticality_threshold", "solution.config");
  }
  for (const auto& pair : array(j, "avoid", "solution")) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
      throw ValidationError("solution.avoid", "expected [app_id, tier_id] pairs");
    }
    out.avoid.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
  }
  const Json& mapping = field(j, "mapping", "solution");
  if (!mapping.is_object()) throw ValidationError("solution.mapping", "expected an object");
  for (const auto& [app, tier] : mapping.items()) {
    if (!tier.is_string()) throw ValidationError("solution.mapping." + app, "expected a tier id");
    out.mapping[app] = tier.get<std::string>();
  }
  const Json& projected = array(j, "projected", "solution");
  for (std::size_t i = 0; i < projected.size(); ++i) {
    const std::string path = "solution.projected[" + std::to_string(i) + "]";
    const Json& e = projected[i];
    TierMetrics m;
    m.tier_id = string(e, "tier_id", path);
    m.cpu_used = number(e, "cpu_used", path);
    m.mem_used = number(e, "mem_used", path);
    m.tasks_used = integer(e, "tasks_used", path);
    m.app_count = integer(e, "app_count", path);
    m.cpu_util = number(e, "cpu_util", path);
    m.mem_util = number(e, "mem_util", path);
    m.task_util = number(e, "task_util", path);
    out.projected.push_back(std::move(m));
  }
  return out;
}

struct VerifyResult {
  FeasibilityReport feasibility;
  std::vector<std::string> metric_mismatches;

  bool ok() const { return feasibility.feasible && metric_mismatches.empty(); }
};

/// Re-checks a solution file against its snapshot: hard constraints and the
/// recorded projected metrics.
inline VerifyResult verify(std::shared_ptr<const Snapshot> snapshot, const SolutionFile& file) {
  Problem problem = compile(snapshot, file.config);
  for (const auto& [app, tier] : file.avoid) problem = add_avoid(problem, app, tier);
  const Assignment assignment = to_assignment(*snapshot, file.mapping);
  VerifyResult out;
  out.feasibility = is_feasible(problem, assignment);
  const auto actual = project_metrics(*snapshot, assignment);
  if (actual.size() != file.projected.size()) {
    out.metric_mismatches.push_back("projected lists " + std::to_string(file.projected.size()) +
                                    " tiers, snapshot has " + std::to_string(actual.size()));
    return out;
  }
  auto near = [](double x, double y) { return std::fabs(x - y) <= 1e-9 * std::max(1.0, std::fabs(y)); };
  for (std::size_t t = 0; t < actual.size(); ++t) {
    const auto& a = actual[t];
    const auto& f = file.projected[t];
    if (a.tier_id != f.tier_id || !near(f.cpu_used, a.cpu_used) || !near(f.mem_used, a.mem_used) ||
        f.tasks_used != a.tasks_used || f.app_count != a.app_count ||
        !near(f.cpu_util, a.cpu_util) || !near(f.mem_util, a.mem_util) ||
        !near(f.task_util, a.task_util)) {
      out.metric_mismatches.push_back("projected metrics for tier '" + a.tier_id +
                                      "' do not match the mapping");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hierarchy trace
// ---------------------------------------------------------------------------

inline Json to_json(const Problem& problem, const RunConfig& config, const CoopTrace& trace,
                    bool record_timing = false) {
  const auto& s = problem.snapshot();
  Json j;
  j["format"] = "sptlb-coop-trace v1";
  j["outcome"] = to_string(trace.outcome);
  Json iterations = Json::array();
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const auto& it = trace.iterations[i];
    iterations.push_back({{"iteration", i + 1},
                          {"solver_status", to_string(it.solver_status)},
                          {"proposed", moves_json(s, it.proposed)},
                          {"region_rejections", moves_json(s, it.region_rejections)},
                          {"host_rejections", moves_json(s, it.host_rejections)},
                          {"avoid_added", avoid_json(s, it.avoid_added)}});
  }
  j["iterations"] = std::move(iterations);
  Json placements = Json::array();
  for (const auto& d : trace.placements) {
    placements.push_back({{"app_id", s.app(d.move.app).app_id},
                          {"to", s.tier(d.move.to).tier_id},
                          {"region", d.region}});
  }
  j["placements"] = std::move(placements);
  j["avoid"] = avoid_json(s, trace.avoid);
  Problem final_problem = problem;
  for (auto [a, t] : trace.avoid) final_problem = final_problem.with_avoid(a, t);
  j["final"] = to_json(final_problem, config, trace.final, record_timing);
  return j;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline constexpr const char* kBalanceCsvHeader =
    "solver,status,tier_id,resource,target,initial_util,final_util,initial_imbalance,"
    "final_imbalance,moves";

/// One row per (solver, tier, resource).
inline std::string balance_csv(const BalanceReport& r, bool record_timing = false) {
  std::string out = kBalanceCsvHeader;
  if (record_timing) out += ",elapsed_s";
  out += "\n";
  for (const auto& sb : r.solvers) {
    for (std::size_t t = 0; t < r.tiers.size(); ++t) {
      for (int k = 0; k < 3; ++k) {
        const Resource res = kAllResources[k];
        out += sb.solver + "," + to_string(sb.status) + "," + r.tiers[t].tier_id + "," +
               to_string(res) + "," + fixed(r.tiers[t].target(res)) + "," +
               fixed(r.initial_metrics[t].util(res)) + "," + fixed(sb.final_metrics[t].util(res)) +
               "," + fixed(r.initial_imbalance[k]) + "," + fixed(sb.final_imbalance[k]) + "," +
               std::to_string(sb.moves);
        if (record_timing) out += "," + fixed(sb.elapsed_s);
        out += "\n";
      }
    }
  }
  return out;
}

inline Json to_json(const BalanceReport& r, bool record_timing = false) {
  Json j;
  j["format"] = "sptlb-balance-report v1";
  Json initial = Json::object();
  for (int k = 0; k < 3; ++k) initial[to_string(kAllResources[k])] = r.initial_imbalance[k];
  j["initial_imbalance"] = std::move(initial);
  j["initial"] = metrics_json(r.initial_metrics);
  Json solvers = Json::array();
  for (const auto& sb : r.solvers) {
    Json e;
    e["solver"] = sb.solver;
    e["status"] = to_string(sb.status);
    if (!sb.error.empty()) e["error"] = sb.error;
    e["moves"] = sb.moves;
    if (record_timing) e["elapsed_s"] = sb.elapsed_s;
    Json imb = Json::object();
    for (int k = 0; k < 3; ++k) imb[to_string(kAllResources[k])] = sb.final_imbalance[k];
    e["final_imbalance"] = std::move(imb);
    e["score"] = score_json(sb.score);
    e["final"] = metrics_json(sb.final_metrics);
    solvers.push_back(std::move(e));
  }
  j["solvers"] = std::move(solvers);
  return j;
}

inline constexpr const char* kLatencyCsvHeader =
    "variant,solver,timeout_s,status,moves,sample_count,p0_ms,p50_ms,p99_ms,manual_rounds";

/// One row per (variant, solver, timeout); latency columns are whole ms.
inline std::string latency_csv(const LatencyReport& r, bool record_timing = false) {
  std::string out = kLatencyCsvHeader;
  if (record_timing) out += ",solve_elapsed_s";
  out += "\n";
  for (const auto& c : r.cells) {
    out += std::string(to_string(c.variant)) + "," + to_string(c.solver) + "," +
           fixed(c.timeout_s, 3) + "," + to_string(c.status) + "," + std::to_string(c.moves) +
           "," + std::to_string(c.sample_count) + "," + std::to_string(c.p0_ms) + "," +
           std::to_string(c.p50_ms) + "," + std::to_string(c.p99_ms) + "," +
           std::to_string(c.manual_rounds);
    if (record_timing) out += "," + fixed(c.solve_elapsed_s);
    out += "\n";
  }
  return out;
}

inline Json to_json(const Snapshot& s, const LatencyReport& r, bool record_timing = false) {
  Json j;
  j["format"] = "sptlb-latency-report v1";
  j["samples_per_pair"] = r.samples_per_pair;
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    Json e;
    e["variant"] = to_string(c.variant);
    e["solver"] = to_string(c.solver);
    e["timeout_s"] = c.timeout_s;
    e["status"] = to_string(c.status);
    e["moves"] = c.moves;
    e["sample_count"] = c.sample_count;
    e["p0_ms"] = c.p0_ms;
    e["p50_ms"] = c.p50_ms;
    e["worst_case_p99_ms"] = c.p99_ms;
    e["manual_rounds"] = c.manual_rounds;
    if (record_timing) e["solve_elapsed_s"] = c.solve_elapsed_s;
    Json transitions = Json::array();
    for (const auto& t : c.transitions) {
      transitions.push_back({{"from", s.tier(t.from).tier_id},
                             {"to", s.tier(t.to).tier_id},
                             {"apps", t.apps},
                             {"p99_ms", t.p99_ms}});
    }
    e["transitions"] = std::move(transitions);
    cells.push_back(std::move(e));
  }
  j["cells"] = std::move(cells);
  return j;
}

}  // namespace sptlb::io
