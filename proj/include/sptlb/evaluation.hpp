#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sptlb/hierarchy.hpp"
#include "sptlb/problem.hpp"
#include "sptlb/random.hpp"
#include "sptlb/solvers.hpp"

namespace sptlb {

// ---------------------------------------------------------------------------
// Balance comparison
// ---------------------------------------------------------------------------

struct SolverBalance {
  std::string solver;
  SolveStatus status = SolveStatus::kOk;
  std::string error;  // set when the solver threw
  Assignment mapping;
  std::vector<TierMetrics> final_metrics;
  std::array<double, 3> final_imbalance{};  // cpu, mem, tasks
  ScoreVector score;
  std::int64_t moves = 0;
  double elapsed_s = 0.0;
};

struct BalanceReport {
  std::vector<TierSpec> tiers;
  std::vector<TierMetrics> initial_metrics;
  std::array<double, 3> initial_imbalance{};
  std::vector<SolverBalance> solvers;

  const SolverBalance& at(const std::string& solver) const {
    for (const auto& s : solvers) {
      if (s.solver == solver) return s;
    }
    throw std::out_of_range("no solver '" + solver + "' in report");
  }
};

inline std::array<double, 3> imbalances(const std::vector<TierMetrics>& m) {
  return {imbalance(m, Resource::kCpu), imbalance(m, Resource::kMem),
          imbalance(m, Resource::kTasks)};
}

/// Runs the configured balancer and the three greedy baselines on the same
/// input and collects per-tier utilization before and after.
inline BalanceReport eval_balance(std::shared_ptr<const Snapshot> snapshot, const RunConfig& config) {
  const Problem problem = compile(snapshot, config);
  BalanceReport report;
  report.tiers = snapshot->tiers();
  report.initial_metrics = project_metrics(*snapshot, snapshot->initial_assignment());
  report.initial_imbalance = imbalances(report.initial_metrics);

  std::vector<SolverKind> kinds{config.solver};
  for (auto k : {SolverKind::kGreedyCpu, SolverKind::kGreedyMem, SolverKind::kGreedyTasks}) {
    if (k != config.solver) kinds.push_back(k);
  }
  for (SolverKind kind : kinds) {
    SolverBalance entry;
    entry.solver = to_string(kind);
    RunConfig cfg = config;
    cfg.solver = kind;
    try {
      const Solution sol = solve(problem, cfg);
      entry.status = sol.status;
      entry.mapping = sol.mapping;
      entry.final_metrics = sol.projected;
      entry.score = sol.score;
      entry.moves = static_cast<std::int64_t>(sol.moves.size());
      entry.elapsed_s = sol.elapsed_s;
    } catch (const std::exception& e) {
      entry.status = SolveStatus::kUnsatisfiable;
      entry.error = e.what();
      entry.mapping = snapshot->initial_assignment();
      entry.final_metrics = report.initial_metrics;
    }
    entry.final_imbalance = imbalances(entry.final_metrics);
    report.solvers.push_back(std::move(entry));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Network latency comparison
// ---------------------------------------------------------------------------

inline constexpr int kSamplesPerPair = 1000;

/// Nearest-rank quantile of sorted samples; 0 for an empty set.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (q <= 0.0) return sorted.front();
  const double rank = std::ceil(q * static_cast<double>(sorted.size()));
  const std::size_t idx = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

/// Round half up to whole milliseconds.
inline std::int64_t round_ms(double ms) { return static_cast<std::int64_t>(std::floor(ms + 0.5)); }

/// Destination region a moved app lands in when no host scheduler is in the
/// loop: the destination tier's region nearest to the app's source.
inline std::string nearest_region(const Snapshot& s, std::size_t app, std::size_t tier) {
  const auto& model = s.latency_model();
  if (!model) throw ModelIncompleteError("snapshot has no latency model");
  const auto& source = s.app(app).source_region;
  std::string best;
  double best_mean = 0.0;
  for (const auto& [region, slots] : s.tier(tier).regions) {
    const double mean = model->at(source, region).mean_ms;
    if (best.empty() || mean < best_mean) {
      best = region;
      best_mean = mean;
    }
  }
  return best;
}

struct TransitionStat {
  std::size_t from = 0;
  std::size_t to = 0;
  std::int64_t apps = 0;
  std::int64_t p99_ms = 0;
};

struct LatencySample {
  std::vector<double> pooled;  // sorted
  std::vector<TransitionStat> transitions;
};

/// Draws `samples_per_pair` batches per (source tier, destination tier), one
/// sample per moved app per batch, and pools everything into one CDF.
/// `placement` overrides the landing region of specific apps.
inline LatencySample sample_latency(const Snapshot& s, const std::vector<Move>& moves, Rng& rng,
                                    int samples_per_pair = kSamplesPerPair,
                                    const std::map<std::size_t, std::string>& placement = {}) {
  const auto& model = s.latency_model();
  if (!model) throw ModelIncompleteError("snapshot has no latency model");
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_pair;
  for (const auto& m : moves) by_pair[{m.from, m.to}].push_back(m.app);

  LatencySample out;
  for (auto& [pair, apps] : by_pair) {
    std::sort(apps.begin(), apps.end());
    std::vector<LatencyDist> dists;
    for (std::size_t a : apps) {
      auto it = placement.find(a);
      const std::string region = it != placement.end() ? it->second : nearest_region(s, a, pair.second);
      dists.push_back(model->at(s.app(a).source_region, region));
    }
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(samples_per_pair) * apps.size());
    for (int batch = 0; batch < samples_per_pair; ++batch) {
      for (const auto& d : dists) samples.push_back(rng.truncated_normal(d.mean_ms, d.stddev_ms));
    }
    std::sort(samples.begin(), samples.end());
    out.transitions.push_back({pair.first, pair.second, static_cast<std::int64_t>(apps.size()),
                               round_ms(quantile_sorted(samples, 0.99))});
    out.pooled.insert(out.pooled.end(), samples.begin(), samples.end());
  }
  std::sort(out.pooled.begin(), out.pooled.end());
  return out;
}

struct LatencyMatrix {
  std::vector<Variant> variants{Variant::kNoCnst, Variant::kWCnst, Variant::kManualCnst};
  std::vector<SolverKind> solvers{SolverKind::kLocal, SolverKind::kOptimal};
  std::vector<double> timeouts_s{30.0};
  int samples_per_pair = kSamplesPerPair;
};

struct LatencyCell {
  Variant variant = Variant::kNoCnst;
  SolverKind solver = SolverKind::kLocal;
  double timeout_s = 0.0;
  SolveStatus status = SolveStatus::kOk;
  std::int64_t moves = 0;
  std::int64_t sample_count = 0;
  std::int64_t p0_ms = 0;
  std::int64_t p50_ms = 0;
  std::int64_t p99_ms = 0;  // worst-case p99
  double solve_elapsed_s = 0.0;
  int manual_rounds = 0;
  std::vector<TransitionStat> transitions;
  Assignment mapping;
};

struct LatencyReport {
  int samples_per_pair = kSamplesPerPair;
  std::vector<LatencyCell> cells;

  const LatencyCell& at(Variant v, SolverKind s, double timeout_s) const {
    for (const auto& c : cells) {
      if (c.variant == v && c.solver == s && c.timeout_s == timeout_s) return c;
    }
    throw std::out_of_range("no such latency cell");
  }
};

inline std::string cell_label(Variant v, SolverKind s, double timeout_s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", timeout_s);
  return std::string("latency/") + to_string(v) + "/" + to_string(s) + "/" + buf;
}

/// One cell of the latency matrix. manual_cnst starts from the no_cnst answer
/// and keeps forbidding (app, destination) pairs on transitions whose p99
/// exceeds the manual threshold, re-solving each time.
inline LatencyCell eval_latency_cell(std::shared_ptr<const Snapshot> snapshot, RunConfig config,
                                     Variant variant, SolverKind solver, double timeout_s,
                                     int samples_per_pair = kSamplesPerPair) {
  const auto& s = *snapshot;
  if (!s.latency_model()) throw ModelIncompleteError("snapshot has no latency model");
  config.solver = solver;
  config.timeout_s = timeout_s;
  config.variant = variant == Variant::kManualCnst ? Variant::kNoCnst : variant;

  LatencyCell cell;
  cell.variant = variant;
  cell.solver = solver;
  cell.timeout_s = timeout_s;
  const std::string label = cell_label(variant, solver, timeout_s);

  Problem problem = compile(snapshot, config);
  Solution sol = solve(problem, config);
  cell.solve_elapsed_s = sol.elapsed_s;

  if (variant == Variant::kManualCnst) {
    for (int round = 1; round <= config.max_hierarchy_iterations && sol.ok(); ++round) {
      Rng probe(config.seed, label + "/probe/" + std::to_string(round));
      const LatencySample sample = sample_latency(s, sol.moves, probe, samples_per_pair);
      std::vector<std::pair<std::size_t, std::size_t>> hot;
      for (const auto& tr : sample.transitions) {
        if (tr.p99_ms > config.manual_latency_threshold_ms) hot.emplace_back(tr.from, tr.to);
      }
      if (hot.empty()) break;
      for (const auto& m : sol.moves) {
        if (std::find(hot.begin(), hot.end(), std::make_pair(m.from, m.to)) != hot.end()) {
          problem = problem.with_avoid(m.app, m.to);
        }
      }
      sol = solve(problem, config);
      cell.solve_elapsed_s += sol.elapsed_s;
      cell.manual_rounds = round;
    }
  }

  cell.status = sol.status;
  cell.mapping = sol.mapping;
  cell.moves = static_cast<std::int64_t>(sol.moves.size());
  Rng rng(config.seed, label);
  const LatencySample sample = sample_latency(s, sol.moves, rng, samples_per_pair);
  cell.sample_count = static_cast<std::int64_t>(sample.pooled.size());
  cell.p0_ms = round_ms(quantile_sorted(sample.pooled, 0.0));
  cell.p50_ms = round_ms(quantile_sorted(sample.pooled, 0.5));
  cell.p99_ms = round_ms(quantile_sorted(sample.pooled, 0.99));
  cell.transitions = sample.transitions;
  return cell;
}

inline LatencyReport eval_latency(std::shared_ptr<const Snapshot> snapshot, const RunConfig& config,
                                  const LatencyMatrix& matrix) {
  if (!snapshot->latency_model()) throw ModelIncompleteError("snapshot has no latency model");
  LatencyReport report;
  report.samples_per_pair = matrix.samples_per_pair;
  for (Variant v : matrix.variants) {
    for (SolverKind solver : matrix.solvers) {
      for (double timeout : matrix.timeouts_s) {
        report.cells.push_back(
            eval_latency_cell(snapshot, config, v, solver, timeout, matrix.samples_per_pair));
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Decision comparison
// ---------------------------------------------------------------------------

class SnapshotMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TierDelta {
  std::string tier_id;
  std::array<double, 3> util_delta{};  // b - a for cpu, mem, tasks
};

struct SolutionDiff {
  ScoreVector a_score;
  ScoreVector b_score;
  std::array<double, 5> goal_delta{};  // b - a, in Goal declaration order
  std::vector<TierDelta> tiers;
  std::vector<Move> only_in_a;
  std::vector<Move> only_in_b;
  std::weak_ordering verdict = std::weak_ordering::equivalent;  // a relative to b

  const char* verdict_text() const {
    if (verdict < 0) return "a";
    if (verdict > 0) return "b";
    return "tie";
  }
};

/// Scores both solutions under `problem` and reports where they differ.
inline SolutionDiff compare_solutions(const Solution& a, const Solution& b, const Problem& problem) {
  const auto& s = problem.snapshot();
  for (const Solution* sol : {&a, &b}) {
    if (sol->snapshot_fingerprint != s.fingerprint() || sol->mapping.size() != s.app_count()) {
      throw SnapshotMismatchError("solution '" + sol->solver_name +
                                  "' was produced for a different snapshot");
    }
  }
  SolutionDiff diff;
  diff.a_score = score(problem, a.mapping);
  diff.b_score = score(problem, b.mapping);
  const Goal goals[] = {Goal::kOverTarget, Goal::kResourceImbalance, Goal::kTaskImbalance,
                        Goal::kMovementCost, Goal::kCriticalMoves};
  for (std::size_t i = 0; i < 5; ++i) {
    diff.goal_delta[i] = diff.b_score.get(goals[i]) - diff.a_score.get(goals[i]);
  }
  const auto ma = project_metrics(s, a.mapping);
  const auto mb = project_metrics(s, b.mapping);
  for (std::size_t t = 0; t < s.tier_count(); ++t) {
    TierDelta d{s.tier(t).tier_id, {}};
    for (int k = 0; k < 3; ++k) {
      d.util_delta[k] = mb[t].util(kAllResources[k]) - ma[t].util(kAllResources[k]);
    }
    diff.tiers.push_back(std::move(d));
  }
  for (std::size_t app = 0; app < s.app_count(); ++app) {
    if (a.mapping[app] == b.mapping[app]) continue;
    if (a.mapping[app] != s.home(app)) diff.only_in_a.push_back({app, s.home(app), a.mapping[app]});
    if (b.mapping[app] != s.home(app)) diff.only_in_b.push_back({app, s.home(app), b.mapping[app]});
  }
  diff.verdict = compare(diff.a_score, diff.b_score, problem.priorities());
  return diff;
}

}  // namespace sptlb
