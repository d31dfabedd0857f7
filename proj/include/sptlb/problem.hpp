#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sptlb/model.hpp"

namespace sptlb {

enum class SolverKind { kLocal, kOptimal, kGreedyCpu, kGreedyMem, kGreedyTasks };

inline const char* to_string(SolverKind s) {
  switch (s) {
    case SolverKind::kLocal: return "local";
    case SolverKind::kOptimal: return "optimal";
    case SolverKind::kGreedyCpu: return "greedy_cpu";
    case SolverKind::kGreedyMem: return "greedy_mem";
    case SolverKind::kGreedyTasks: return "greedy_tasks";
  }
  return "?";
}

inline SolverKind parse_solver(const std::string& s) {
  for (auto k : {SolverKind::kLocal, SolverKind::kOptimal, SolverKind::kGreedyCpu,
                 SolverKind::kGreedyMem, SolverKind::kGreedyTasks}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown solver '" + s + "'");
}

/// How region awareness is folded into the balancing problem.
enum class Variant { kNoCnst, kWCnst, kManualCnst };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kNoCnst: return "no_cnst";
    case Variant::kWCnst: return "w_cnst";
    case Variant::kManualCnst: return "manual_cnst";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::kNoCnst, Variant::kWCnst, Variant::kManualCnst}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + s + "'");
}

/// Soft objectives, in default priority order.
enum class Goal {
  kOverTarget,         // utilization above the ideal target
  kResourceImbalance,  // cpu + mem spread
  kTaskImbalance,      // task-count spread
  kMovementCost,       // task_count of moved apps
  kCriticalMoves,      // criticality of moved high-criticality apps
};

inline const std::vector<Goal>& default_priorities() {
  static const std::vector<Goal> kDefault = {Goal::kOverTarget, Goal::kResourceImbalance,
                                             Goal::kTaskImbalance, Goal::kMovementCost,
                                             Goal::kCriticalMoves};
  return kDefault;
}

inline const char* to_string(Goal g) {
  switch (g) {
    case Goal::kOverTarget: return "over_target";
    case Goal::kResourceImbalance: return "resource_imbalance";
    case Goal::kTaskImbalance: return "task_imbalance";
    case Goal::kMovementCost: return "movement_cost";
    case Goal::kCriticalMoves: return "critical_moves";
  }
  return "?";
}

struct RunConfig {
  double move_budget_fraction = 0.10;
  double timeout_s = 30.0;
  SolverKind solver = SolverKind::kLocal;
  Variant variant = Variant::kNoCnst;
  double region_overlap_threshold = 0.5;
  std::uint64_t seed = 0;
  int max_hierarchy_iterations = 20;
  std::int64_t manual_latency_threshold_ms = 20;
  /// Overrides the median-criticality default.
  std::optional<double> criticality_threshold;
  std::vector<Goal> priorities = default_priorities();
  /// Greedy ignores SLO support when picking moves (ablation only).
  bool greedy_raw = false;
  /// Regions within this mean latency of an app's source are acceptable to
  /// the region scheduler.
  double latency_radius_ms = 30.0;

  void validate() const {
    if (!(move_budget_fraction >= 0.0 && move_budget_fraction <= 1.0)) {
      throw ValidationError("move_budget_fraction", "must be in [0, 1]");
    }
    if (!(timeout_s > 0.0)) throw ValidationError("timeout", "must be > 0");
    if (max_hierarchy_iterations < 1) {
      throw ValidationError("max_hierarchy_iterations", "must be >= 1");
    }
    std::vector<Goal> sorted = priorities;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != default_priorities()) {
      throw ValidationError("priorities", "must be a permutation of the five goals");
    }
  }
};

/// Lexicographic objective values. Lower is better on every component.
struct ScoreVector {
  double over_target = 0.0;
  double resource_imbalance = 0.0;
  double task_imbalance = 0.0;
  std::int64_t movement_cost = 0;
  double critical_moves = 0.0;

  double get(Goal g) const {
    switch (g) {
      case Goal::kOverTarget: return over_target;
      case Goal::kResourceImbalance: return resource_imbalance;
      case Goal::kTaskImbalance: return task_imbalance;
      case Goal::kMovementCost: return static_cast<double>(movement_cost);
      case Goal::kCriticalMoves: return critical_moves;
    }
    return 0.0;
  }

  bool operator==(const ScoreVector&) const = default;
};

inline constexpr double kScoreTolerance = 1e-9;

/// Lexicographic comparison in priority order; reals tie within 1e-9.
inline std::weak_ordering compare(const ScoreVector& a, const ScoreVector& b,
                                  const std::vector<Goal>& priorities = default_priorities()) {
  for (Goal g : priorities) {
    if (g == Goal::kMovementCost) {
      if (a.movement_cost != b.movement_cost) return a.movement_cost <=> b.movement_cost;
      continue;
    }
    const double x = a.get(g);
    const double y = b.get(g);
    if (x < y - kScoreTolerance) return std::weak_ordering::less;
    if (x > y + kScoreTolerance) return std::weak_ordering::greater;
  }
  return std::weak_ordering::equivalent;
}

enum class Constraint { kCapacity, kTaskLimit, kMovement, kPlacement, kTransition };

inline const char* to_string(Constraint c) {
  switch (c) {
    case Constraint::kCapacity: return "C1";
    case Constraint::kTaskLimit: return "C2";
    case Constraint::kMovement: return "C3";
    case Constraint::kPlacement: return "C4";
    case Constraint::kTransition: return "W";
  }
  return "?";
}

struct Violation {
  Constraint constraint;
  std::string detail;

  std::string describe() const { return std::string(to_string(constraint)) + ": " + detail; }
  bool operator==(const Violation&) const = default;
};

struct FeasibilityReport {
  bool feasible = true;
  std::vector<Violation> violations;

  bool has(Constraint c) const {
    return std::any_of(violations.begin(), violations.end(),
                       [c](const Violation& v) { return v.constraint == c; });
  }
};

/// A snapshot compiled into hard constraints and prioritized goals.
/// Immutable; add_avoid returns a new value.
class Problem {
 public:
  Problem(std::shared_ptr<const Snapshot> snapshot, const RunConfig& config)
      : snapshot_(std::move(snapshot)), variant_(config.variant), priorities_(config.priorities) {
    if (!snapshot_) throw std::invalid_argument("null snapshot");
    config.validate();
    const auto& s = *snapshot_;
    const double n = static_cast<double>(s.app_count());
    // Epsilon keeps 0.3 * 10 from flooring to 2.
    move_budget_ = static_cast<std::int64_t>(std::floor(config.move_budget_fraction * n + 1e-9));
    move_budget_ = std::clamp<std::int64_t>(move_budget_, 0,
                                            static_cast<std::int64_t>(s.app_count()));

    if (config.criticality_threshold) {
      criticality_threshold_ = *config.criticality_threshold;
    } else {
      criticality_threshold_ = median_criticality(s);
    }

    if (variant_ == Variant::kWCnst) {
      const std::size_t tn = s.tier_count();
      allowed_.assign(tn, std::vector<char>(tn, 0));
      for (std::size_t from = 0; from < tn; ++from) {
        const auto& src = s.tier(from).regions;
        for (std::size_t to = 0; to < tn; ++to) {
          if (from == to) {
            allowed_[from][to] = 1;
            continue;
          }
          const auto& dst = s.tier(to).regions;
          std::size_t shared = 0;
          for (const auto& [region, slots] : src) shared += dst.count(region);
          const double overlap = static_cast<double>(shared) / static_cast<double>(src.size());
          allowed_[from][to] = overlap > config.region_overlap_threshold ? 1 : 0;
        }
      }
    }
    rebuild_blocked();
  }

  const Snapshot& snapshot() const noexcept { return *snapshot_; }
  const std::shared_ptr<const Snapshot>& snapshot_ptr() const noexcept { return snapshot_; }
  std::int64_t move_budget() const noexcept { return move_budget_; }
  Variant variant() const noexcept { return variant_; }
  double criticality_threshold() const noexcept { return criticality_threshold_; }
  const std::vector<Goal>& priorities() const noexcept { return priorities_; }
  const std::set<std::pair<std::size_t, std::size_t>>& avoid() const noexcept { return avoid_; }
  bool restricts_transitions() const noexcept { return !allowed_.empty(); }

  std::vector<std::pair<std::string, std::string>> avoid_ids() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (auto [a, t] : avoid_) out.emplace_back(snapshot_->app(a).app_id, snapshot_->tier(t).tier_id);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// (from, to) tier transition permitted; always true outside w_cnst.
  bool transition_allowed(std::size_t from, std::size_t to) const {
    return allowed_.empty() || allowed_[from][to] != 0;
  }

  bool is_avoided(std::size_t app, std::size_t tier) const {
    return avoid_.count({app, tier}) != 0;
  }

  /// App may not sit on tier: avoided pair or unsupported SLO.
  bool blocked(std::size_t app, std::size_t tier) const { return blocked_[app][tier] != 0; }

  bool is_critical(std::size_t app) const {
    return snapshot_->app(app).criticality_score > criticality_threshold_;
  }

  Problem with_avoid(std::size_t app, std::size_t tier) const {
    Problem out = *this;
    if (out.avoid_.emplace(app, tier).second) out.blocked_[app][tier] = 1;
    return out;
  }

  static double median_criticality(const Snapshot& s) {
    if (s.app_count() == 0) return 0.0;
    std::vector<double> v;
    v.reserve(s.app_count());
    for (const auto& app : s.apps()) v.push_back(app.criticality_score);
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  }

 private:
  void rebuild_blocked() {
    const auto& s = *snapshot_;
    blocked_.assign(s.app_count(), std::vector<char>(s.tier_count(), 0));
    for (std::size_t a = 0; a < s.app_count(); ++a) {
      for (std::size_t t = 0; t < s.tier_count(); ++t) {
        blocked_[a][t] = s.tier(t).supports(s.app(a).slo_score) ? 0 : 1;
      }
    }
    for (auto [a, t] : avoid_) blocked_[a][t] = 1;
  }

  std::shared_ptr<const Snapshot> snapshot_;
  Variant variant_;
  std::vector<Goal> priorities_;
  std::int64_t move_budget_ = 0;
  double criticality_threshold_ = 0.0;
  std::set<std::pair<std::size_t, std::size_t>> avoid_;
  std::vector<std::vector<char>> allowed_;
  std::vector<std::vector<char>> blocked_;
};

inline Problem compile(std::shared_ptr<const Snapshot> snapshot, const RunConfig& config) {
  return Problem(std::move(snapshot), config);
}

inline Problem compile(const Snapshot& snapshot, const RunConfig& config) {
  return Problem(std::make_shared<const Snapshot>(snapshot), config);
}

inline Problem add_avoid(const Problem& problem, const std::string& app_id,
                         const std::string& tier_id) {
  const auto& s = problem.snapshot();
  return problem.with_avoid(s.app_index(app_id), s.tier_index(tier_id));
}

/// Balance goals and movement goals from per-tier usage. `used(t, r)` yields
/// the usage of tier t for resource r.
template <typename UsedFn>
ScoreVector score_from_usage(const Snapshot& s, UsedFn&& used, std::int64_t movement_cost,
                             double critical_moves) {
  ScoreVector out;
  out.movement_cost = movement_cost;
  out.critical_moves = critical_moves;
  double lo[3] = {0.0, 0.0, 0.0};
  double hi[3] = {0.0, 0.0, 0.0};
  for (std::size_t t = 0; t < s.tier_count(); ++t) {
    const auto& tier = s.tier(t);
    for (int k = 0; k < 3; ++k) {
      const Resource r = kAllResources[k];
      const double util = used(t, r) / tier.capacity(r);
      out.over_target += std::max(0.0, util - tier.target(r));
      if (t == 0) {
        lo[k] = hi[k] = util;
      } else {
        lo[k] = std::min(lo[k], util);
        hi[k] = std::max(hi[k], util);
      }
    }
  }
  out.resource_imbalance = (hi[0] - lo[0]) + (hi[1] - lo[1]);
  out.task_imbalance = hi[2] - lo[2];
  return out;
}

inline ScoreVector score(const Problem& problem, const Assignment& assignment) {
  const auto& s = problem.snapshot();
  const auto metrics = project_metrics(s, assignment);
  std::int64_t movement = 0;
  double critical = 0.0;
  for (std::size_t a = 0; a < assignment.size(); ++a) {
    if (assignment[a] == s.home(a)) continue;
    movement += s.app(a).task_count;
    if (problem.is_critical(a)) critical += s.app(a).criticality_score;
  }
  return score_from_usage(
      s, [&](std::size_t t, Resource r) { return metrics[t].used(r); }, movement, critical);
}

inline FeasibilityReport is_feasible(const Problem& problem, const Assignment& assignment) {
  const auto& s = problem.snapshot();
  const auto metrics = project_metrics(s, assignment);
  FeasibilityReport report;
  auto fail = [&](Constraint c, std::string detail) {
    report.feasible = false;
    report.violations.push_back({c, std::move(detail)});
  };

  for (std::size_t t = 0; t < s.tier_count(); ++t) {
    const auto& tier = s.tier(t);
    const auto& m = metrics[t];
    if (m.cpu_used > tier.cpu_capacity) {
      fail(Constraint::kCapacity, "tier '" + tier.tier_id + "' cpu " + std::to_string(m.cpu_used) +
                                      " exceeds capacity " + std::to_string(tier.cpu_capacity));
    }
    if (m.mem_used > tier.mem_capacity) {
      fail(Constraint::kCapacity, "tier '" + tier.tier_id + "' mem " + std::to_string(m.mem_used) +
                                      " exceeds capacity " + std::to_string(tier.mem_capacity));
    }
    if (m.tasks_used > tier.task_limit) {
      fail(Constraint::kTaskLimit, "tier '" + tier.tier_id + "' tasks " +
                                       std::to_string(m.tasks_used) + " exceed limit " +
                                       std::to_string(tier.task_limit));
    }
  }

  std::int64_t moved = 0;
  for (std::size_t a = 0; a < assignment.size(); ++a) {
    const std::size_t t = assignment[a];
    const std::size_t home = s.home(a);
    const auto& app = s.app(a);
    if (t != home) {
      ++moved;
      if (!problem.transition_allowed(home, t)) {
        fail(Constraint::kTransition, "app '" + app.app_id + "' transition '" +
                                          s.tier(home).tier_id + "' -> '" + s.tier(t).tier_id +
                                          "' lacks region overlap");
      }
    }
    if (!s.tier(t).supports(app.slo_score)) {
      fail(Constraint::kPlacement, "app '" + app.app_id + "' SLO " +
                                       std::to_string(app.slo_score) + " unsupported by tier '" +
                                       s.tier(t).tier_id + "'");
    }
    if (problem.is_avoided(a, t)) {
      fail(Constraint::kPlacement,
           "app '" + app.app_id + "' placed on avoided tier '" + s.tier(t).tier_id + "'");
    }
  }
  if (moved > problem.move_budget()) {
    fail(Constraint::kMovement, std::to_string(moved) + " apps moved, budget " +
                                    std::to_string(problem.move_budget()));
  }
  return report;
}

/// Incrementally maintained per-tier load for neighborhood search.
class LoadTracker {
 public:
  LoadTracker(const Problem& problem, Assignment start)
      : problem_(&problem), assignment_(std::move(start)) {
    const auto& s = problem.snapshot();
    check_assignment(s, assignment_);
    used_.assign(s.tier_count(), {0.0, 0.0, 0.0});
    for (std::size_t a = 0; a < assignment_.size(); ++a) {
      add(a, assignment_[a], +1.0);
      if (assignment_[a] != s.home(a)) account_move(a, +1);
      if (problem.blocked(a, assignment_[a])) ++misplaced_;
    }
  }

  const Assignment& assignment() const noexcept { return assignment_; }
  std::int64_t moved_count() const noexcept { return moved_; }
  double used(std::size_t t, Resource r) const { return used_[t][static_cast<int>(r)]; }

  /// Budget, transition rule, and placement rule for putting app on tier.
  bool structurally_allowed(std::size_t app, std::size_t to) const {
    const auto& s = problem_->snapshot();
    const std::size_t home = s.home(app);
    const std::size_t from = assignment_[app];
    if (to == from) return false;
    if (problem_->blocked(app, to)) return false;
    if (to != home) {
      if (from == home && moved_ + 1 > problem_->move_budget()) return false;
      if (!problem_->transition_allowed(home, to)) return false;
    }
    return true;
  }

  /// Destination stays within capacity and task limit after the move.
  bool fits(std::size_t app, std::size_t to) const {
    const auto& s = problem_->snapshot();
    const auto& tier = s.tier(to);
    const auto& rec = s.app(app);
    return used(to, Resource::kCpu) + rec.cpu_p99 <= tier.cpu_capacity &&
           used(to, Resource::kMem) + rec.mem_p99 <= tier.mem_capacity &&
           used(to, Resource::kTasks) + static_cast<double>(rec.task_count) <=
               static_cast<double>(tier.task_limit);
  }

  void move(std::size_t app, std::size_t to) {
    const auto& s = problem_->snapshot();
    const std::size_t from = assignment_[app];
    if (from == to) return;
    if (problem_->blocked(app, from)) --misplaced_;
    if (from != s.home(app)) account_move(app, -1);
    assignment_[app] = to;
    resum(from);
    resum(to);
    if (to != s.home(app)) account_move(app, +1);
    if (problem_->blocked(app, to)) ++misplaced_;
  }

  ScoreVector score() const {
    return score_from_usage(
        problem_->snapshot(), [&](std::size_t t, Resource r) { return used(t, r); }, movement_cost_,
        critical_);
  }

  /// Score after relocating app to `to`, without committing the move.
  ScoreVector score_if(std::size_t app, std::size_t to) const {
    const auto& s = problem_->snapshot();
    const std::size_t from = assignment_[app];
    const auto& rec = s.app(app);
    auto used_fn = [&](std::size_t t, Resource r) {
      double u = used(t, r);
      if (t == from) u -= rec.demand(r);
      if (t == to) u += rec.demand(r);
      return u;
    };
    std::int64_t mc = movement_cost_;
    double cc = critical_;
    const std::size_t home = s.home(app);
    const double crit = problem_->is_critical(app) ? rec.criticality_score : 0.0;
    if (from == home && to != home) {
      mc += rec.task_count;
      cc += crit;
    } else if (from != home && to == home) {
      mc -= rec.task_count;
      cc -= crit;
    }
    return score_from_usage(s, used_fn, mc, std::max(0.0, cc));
  }

  /// Total hard-constraint violation: normalized overload plus misplaced apps.
  double violation() const {
    const auto& s = problem_->snapshot();
    double v = static_cast<double>(misplaced_);
    for (std::size_t t = 0; t < s.tier_count(); ++t) v += overload(t, used_[t]);
    return v;
  }

  double violation_if(std::size_t app, std::size_t to) const {
    const auto& s = problem_->snapshot();
    const std::size_t from = assignment_[app];
    const auto& rec = s.app(app);
    double v = violation();
    v -= overload(from, used_[from]) + overload(to, used_[to]);
    auto f = used_[from];
    auto g = used_[to];
    for (int k = 0; k < 3; ++k) {
      f[k] -= rec.demand(kAllResources[k]);
      g[k] += rec.demand(kAllResources[k]);
    }
    v += overload(from, f) + overload(to, g);
    if (problem_->blocked(app, from)) v -= 1.0;
    if (problem_->blocked(app, to)) v += 1.0;
    return v;
  }

 private:
  double overload(std::size_t t, const std::array<double, 3>& u) const {
    const auto& tier = problem_->snapshot().tier(t);
    double v = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double cap = tier.capacity(kAllResources[k]);
      v += std::max(0.0, u[k] - cap) / cap;
    }
    return v;
  }

  // Summed in app order so values match project_metrics bit for bit.
  void resum(std::size_t t) {
    used_[t] = {0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < assignment_.size(); ++a) {
      if (assignment_[a] == t) add(a, t, +1.0);
    }
  }

  void add(std::size_t app, std::size_t t, double sign) {
    const auto& rec = problem_->snapshot().app(app);
    for (int k = 0; k < 3; ++k) used_[t][k] += sign * rec.demand(kAllResources[k]);
  }

  void account_move(std::size_t app, int sign) {
    const auto& rec = problem_->snapshot().app(app);
    moved_ += sign;
    movement_cost_ += sign * rec.task_count;
    if (problem_->is_critical(app)) critical_ += sign * rec.criticality_score;
    if (moved_ == 0) critical_ = 0.0;
  }

  const Problem* problem_;
  Assignment assignment_;
  std::vector<std::array<double, 3>> used_;
  std::int64_t moved_ = 0;
  std::int64_t movement_cost_ = 0;
  double critical_ = 0.0;
  std::int64_t misplaced_ = 0;
};

}  // namespace sptlb
