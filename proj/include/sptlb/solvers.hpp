#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sptlb/problem.hpp"
#include "sptlb/random.hpp"

namespace sptlb {

enum class Termination { kConverged, kTimeout, kBudgetExhausted };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kTimeout: return "timeout";
    case Termination::kBudgetExhausted: return "budget_exhausted";
  }
  return "?";
}

enum class SolveStatus {
  kOk,
  kUnsatisfiable,  // no feasible mapping found before stopping
  kInfeasible,     // proven infeasible, or the returned mapping breaks a hard constraint
  kUnresolved,     // hierarchy loop ended without an acknowledged mapping
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOk: return "ok";
    case SolveStatus::kUnsatisfiable: return "unsatisfiable";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kUnresolved: return "unresolved";
  }
  return "?";
}

struct Move {
  std::size_t app = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  bool operator==(const Move&) const = default;
};

struct Solution {
  Assignment mapping;
  std::vector<Move> moves;
  ScoreVector score;
  std::vector<TierMetrics> projected;
  std::string solver_name;
  double elapsed_s = 0.0;
  std::int64_t iterations = 0;
  Termination terminated_by = Termination::kConverged;
  SolveStatus status = SolveStatus::kOk;
  std::vector<Violation> violations;
  std::uint64_t snapshot_fingerprint = 0;

  bool ok() const noexcept { return status == SolveStatus::kOk; }
};

/// Cooperative wall-clock budget, polled at iteration boundaries.
class Deadline {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Deadline(double seconds)
      : start_(Clock::now()),
        end_(start_ + std::chrono::duration_cast<Clock::duration>(
                          std::chrono::duration<double>(seconds))) {}

  bool expired() const { return Clock::now() >= end_; }
  double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }
  double remaining() const {
    return std::max(0.0, std::chrono::duration<double>(end_ - Clock::now()).count());
  }

 private:
  Clock::time_point start_;
  Clock::time_point end_;
};

/// Builds a Solution from a final assignment. Status is kInfeasible when the
/// mapping breaks a hard constraint.
inline Solution make_solution(const Problem& problem, Assignment mapping, std::string name,
                              double elapsed_s, std::int64_t iterations, Termination termination) {
  const auto& s = problem.snapshot();
  Solution out;
  out.projected = project_metrics(s, mapping);
  out.score = score(problem, mapping);
  for (std::size_t a = 0; a < mapping.size(); ++a) {
    if (mapping[a] != s.home(a)) out.moves.push_back({a, s.home(a), mapping[a]});
  }
  auto report = is_feasible(problem, mapping);
  out.status = report.feasible ? SolveStatus::kOk : SolveStatus::kInfeasible;
  out.violations = std::move(report.violations);
  out.mapping = std::move(mapping);
  out.solver_name = std::move(name);
  out.elapsed_s = elapsed_s;
  out.iterations = iterations;
  out.terminated_by = termination;
  out.snapshot_fingerprint = s.fingerprint();
  return out;
}

inline Solution identity_solution(const Problem& problem, std::string name) {
  return make_solution(problem, problem.snapshot().initial_assignment(), std::move(name), 0.0, 0,
                       Termination::kConverged);
}

namespace detail {

inline Termination settle(const LoadTracker& tracker, const Problem& problem) {
  return problem.move_budget() > 0 && tracker.moved_count() == problem.move_budget()
             ? Termination::kBudgetExhausted
             : Termination::kConverged;
}

}  // namespace detail

/// Best-improvement single-relocation search from the current mapping. An
/// infeasible start is first repaired by moves that strictly shrink total
/// hard-constraint violation.
inline Solution solve_local(const Problem& problem, const RunConfig& config) {
  const Deadline deadline(config.timeout_s);
  const auto& s = problem.snapshot();
  const auto& prio = problem.priorities();
  LoadTracker tracker(problem, s.initial_assignment());

  std::vector<std::size_t> order(s.app_count());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed, "local-order");
  rng.shuffle(order);

  std::int64_t iterations = 0;
  bool timed_out = false;

  // Repair.
  while (tracker.violation() > 0.0) {
    if (deadline.expired()) {
      timed_out = true;
      break;
    }
    const double current = tracker.violation();
    std::optional<std::pair<std::size_t, std::size_t>> best;
    double best_v = current;
    ScoreVector best_score;
    for (std::size_t a : order) {
      for (std::size_t t = 0; t < s.tier_count(); ++t) {
        if (!tracker.structurally_allowed(a, t)) continue;
        const double v = tracker.violation_if(a, t);
        if (v > best_v + 1e-12) continue;
        const ScoreVector sc = tracker.score_if(a, t);
        if (!best || v < best_v - 1e-12 || compare(sc, best_score, prio) < 0) {
          best = {a, t};
          best_v = v;
          best_score = sc;
        }
      }
    }
    if (!best || best_v >= current - 1e-12) break;
    tracker.move(best->first, best->second);
    ++iterations;
  }

  if (tracker.violation() > 0.0) {
    Solution out = make_solution(problem, tracker.assignment(), "local", deadline.elapsed(),
                                 iterations,
                                 timed_out ? Termination::kTimeout : Termination::kConverged);
    out.status = SolveStatus::kUnsatisfiable;
    return out;
  }

  // Improve.
  while (true) {
    if (deadline.expired()) {
      timed_out = true;
      break;
    }
    const ScoreVector current = tracker.score();
    std::optional<std::pair<std::size_t, std::size_t>> best;
    ScoreVector best_score = current;
    for (std::size_t a : order) {
      for (std::size_t t = 0; t < s.tier_count(); ++t) {
        if (!tracker.structurally_allowed(a, t) || !tracker.fits(a, t)) continue;
        const ScoreVector sc = tracker.score_if(a, t);
        if (compare(sc, best_score, prio) < 0) {
          best = {a, t};
          best_score = sc;
        }
      }
    }
    if (!best) break;
    tracker.move(best->first, best->second);
    ++iterations;
  }

  return make_solution(problem, tracker.assignment(), "local", deadline.elapsed(), iterations,
                       timed_out ? Termination::kTimeout : detail::settle(tracker, problem));
}

/// Baseline that repeatedly moves the largest not-yet-moved app from the most
/// loaded tier (used / (capacity * target)) to the least loaded one, for a
/// single resource.
inline Solution solve_greedy(const Problem& problem, Resource objective, const RunConfig& config) {
  const Deadline deadline(config.timeout_s);
  const auto& s = problem.snapshot();
  const std::string name = std::string("greedy_") + to_string(objective);
  LoadTracker tracker(problem, s.initial_assignment());
  std::vector<bool> moved(s.app_count(), false);

  auto key = [&](std::size_t t) {
    const auto& tier = s.tier(t);
    return tracker.used(t, objective) / (tier.capacity(objective) * tier.target(objective));
  };
  auto placeable = [&](std::size_t a, std::size_t to) {
    if (config.greedy_raw ? problem.is_avoided(a, to) : problem.blocked(a, to)) return false;
    if (!problem.transition_allowed(s.home(a), to)) return false;
    return tracker.fits(a, to);
  };

  std::int64_t iterations = 0;
  Termination termination = Termination::kConverged;
  while (true) {
    if (deadline.expired()) {
      termination = Termination::kTimeout;
      break;
    }
    if (tracker.moved_count() >= problem.move_budget()) {
      termination = Termination::kBudgetExhausted;
      break;
    }
    std::size_t hi = 0;
    std::size_t lo = 0;
    for (std::size_t t = 1; t < s.tier_count(); ++t) {
      const auto& id = s.tier(t).tier_id;
      if (key(t) > key(hi) || (key(t) == key(hi) && id < s.tier(hi).tier_id)) hi = t;
      if (key(t) < key(lo) || (key(t) == key(lo) && id < s.tier(lo).tier_id)) lo = t;
    }
    if (key(hi) - key(lo) <= 1e-12) break;

    std::vector<std::size_t> candidates;
    for (std::size_t a = 0; a < s.app_count(); ++a) {
      if (tracker.assignment()[a] == hi && !moved[a]) candidates.push_back(a);
    }
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t x, std::size_t y) {
      const double dx = s.app(x).demand(objective);
      const double dy = s.app(y).demand(objective);
      if (dx != dy) return dx > dy;
      return s.app(x).app_id < s.app(y).app_id;
    });
    bool progressed = false;
    for (std::size_t a : candidates) {
      if (!placeable(a, lo)) continue;
      tracker.move(a, lo);
      moved[a] = true;
      progressed = true;
      ++iterations;
      break;
    }
    if (!progressed) break;
  }
  return make_solution(problem, tracker.assignment(), name, deadline.elapsed(), iterations,
                       termination);
}

namespace detail {

/// Depth-first branch-and-bound over "which apps move, and where", with
/// lexicographic pruning against the incumbent. Per-tier utilization is
/// bracketed by what the remaining move budget could still add or remove.
class BranchAndBound {
 public:
  BranchAndBound(const Problem& problem, const Deadline& deadline)
      : p_(problem), s_(problem.snapshot()), deadline_(deadline) {
    const std::size_t n = s_.app_count();
    const std::size_t tn = s_.tier_count();

    // Larger apps first: they move the bounds the most.
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    std::vector<double> size(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (Resource r : kAllResources) {
        double cap = 0.0;
        for (const auto& t : s_.tiers()) cap += t.capacity(r);
        size[a] = std::max(size[a], s_.app(a).demand(r) * static_cast<double>(tn) / cap);
      }
    }
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t x, std::size_t y) { return size[x] > size[y]; });
    position_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) position_[order_[i]] = i;

    forced_.assign(n, false);
    options_.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t home = s_.home(a);
      forced_[a] = p_.blocked(a, home);
      if (!forced_[a]) options_[a].push_back(home);
      for (std::size_t t = 0; t < tn; ++t) {
        if (t == home || p_.blocked(a, t) || !p_.transition_allowed(home, t)) continue;
        options_[a].push_back(t);
      }
    }

    // Suffix counts of forced moves along the branching order.
    forced_suffix_count_.assign(n + 1, 0);
    forced_suffix_tasks_.assign(n + 1, 0);
    forced_suffix_crit_.assign(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) {
      const std::size_t a = order_[i];
      forced_suffix_count_[i] = forced_suffix_count_[i + 1] + (forced_[a] ? 1 : 0);
      forced_suffix_tasks_[i] = forced_suffix_tasks_[i + 1] + (forced_[a] ? s_.app(a).task_count : 0);
      forced_suffix_crit_[i] = forced_suffix_crit_[i + 1] +
                               (forced_[a] && p_.is_critical(a) ? s_.app(a).criticality_score : 0.0);
    }

    for (int k = 0; k < 3; ++k) {
      out_lists_[k].resize(tn);
      in_lists_[k].resize(tn);
      for (std::size_t t = 0; t < tn; ++t) {
        for (std::size_t a = 0; a < n; ++a) {
          const std::size_t home = s_.home(a);
          if (home == t && !forced_[a]) out_lists_[k][t].push_back(a);
          if (home != t && !p_.blocked(a, t) && p_.transition_allowed(home, t)) {
            in_lists_[k][t].push_back(a);
          }
        }
        auto by_demand = [&, r = kAllResources[k]](std::size_t x, std::size_t y) {
          return s_.app(x).demand(r) > s_.app(y).demand(r);
        };
        std::stable_sort(out_lists_[k][t].begin(), out_lists_[k][t].end(), by_demand);
        std::stable_sort(in_lists_[k][t].begin(), in_lists_[k][t].end(), by_demand);
      }
    }

    assignment_ = s_.initial_assignment();
    partial_.assign(tn, {0.0, 0.0, 0.0});
    rest_.assign(tn, {0.0, 0.0, 0.0});
    for (std::size_t a = 0; a < n; ++a) {
      if (forced_[a]) continue;
      for (int k = 0; k < 3; ++k) rest_[s_.home(a)][k] += s_.app(a).demand(kAllResources[k]);
    }
  }

  void offer(const Assignment& candidate) {
    if (!is_feasible(p_, candidate).feasible) return;
    const ScoreVector sc = score(p_, candidate);
    if (!best_ || compare(sc, *best_, p_.priorities()) < 0) {
      best_ = sc;
      best_assignment_ = candidate;
    }
  }

  /// Returns true when the search space was exhausted.
  bool run() {
    complete_ = true;
    descend(0);
    return complete_;
  }

  const std::optional<ScoreVector>& best() const noexcept { return best_; }
  const Assignment& best_assignment() const noexcept { return best_assignment_; }
  std::int64_t nodes() const noexcept { return nodes_; }

 private:
  void descend(std::size_t depth) {
    if (!complete_) return;
    if ((++nodes_ & 0xff) == 0 && deadline_.expired()) {
      complete_ = false;
      return;
    }
    const std::int64_t remaining = p_.move_budget() - moved_;
    if (forced_suffix_count_[depth] > remaining) return;

    if (depth == order_.size() || (remaining == 0 && forced_suffix_count_[depth] == 0)) {
      leaf();
      return;
    }
    if (!promising(depth, remaining)) return;

    const std::size_t a = order_[depth];
    const std::size_t home = s_.home(a);
    const auto& app = s_.app(a);
    if (!forced_[a]) {
      for (int k = 0; k < 3; ++k) rest_[home][k] -= app.demand(kAllResources[k]);
    }
    for (std::size_t t : options_[a]) {
      const bool moves = t != home;
      if (moves && remaining == 0) continue;
      place(a, t, +1.0);
      if (moves) account(a, +1);
      descend(depth + 1);
      if (moves) account(a, -1);
      place(a, t, -1.0);
      if (!complete_) break;
    }
    if (!forced_[a]) {
      for (int k = 0; k < 3; ++k) rest_[home][k] += app.demand(kAllResources[k]);
    }
  }

  void place(std::size_t a, std::size_t t, double sign) {
    for (int k = 0; k < 3; ++k) partial_[t][k] += sign * s_.app(a).demand(kAllResources[k]);
    assignment_[a] = sign > 0 ? t : s_.home(a);
  }

  void account(std::size_t a, int sign) {
    moved_ += sign;
    movement_cost_ += sign * s_.app(a).task_count;
    if (p_.is_critical(a)) critical_ += sign * s_.app(a).criticality_score;
  }

  double top_sum(const std::vector<std::size_t>& list, int k, std::size_t depth,
                 std::int64_t m) const {
    double sum = 0.0;
    std::int64_t taken = 0;
    for (std::size_t a : list) {
      if (taken >= m) break;
      if (position_[a] < depth) continue;
      sum += s_.app(a).demand(kAllResources[k]);
      ++taken;
    }
    return sum;
  }

  // False when no completion can satisfy C1/C2 or beat the incumbent.
  bool promising(std::size_t depth, std::int64_t remaining) const {
    const std::size_t tn = s_.tier_count();
    ScoreVector lb;
    lb.movement_cost = movement_cost_ + forced_suffix_tasks_[depth];
    lb.critical_moves = critical_ + forced_suffix_crit_[depth];
    double max_lo[3] = {0.0, 0.0, 0.0};
    double min_hi[3] = {0.0, 0.0, 0.0};
    for (std::size_t t = 0; t < tn; ++t) {
      const auto& tier = s_.tier(t);
      for (int k = 0; k < 3; ++k) {
        const Resource r = kAllResources[k];
        const double base = partial_[t][k] + rest_[t][k];
        const double lo = base - top_sum(out_lists_[k][t], k, depth, remaining);
        const double hi = base + top_sum(in_lists_[k][t], k, depth, remaining);
        const double cap = tier.capacity(r);
        if (lo > cap * (1.0 + 1e-12)) return false;
        const double lo_u = std::max(0.0, lo) / cap;
        const double hi_u = hi / cap;
        lb.over_target += std::max(0.0, lo_u - tier.target(r));
        max_lo[k] = t == 0 ? lo_u : std::max(max_lo[k], lo_u);
        min_hi[k] = t == 0 ? hi_u : std::min(min_hi[k], hi_u);
      }
    }
    lb.resource_imbalance =
        std::max(0.0, max_lo[0] - min_hi[0]) + std::max(0.0, max_lo[1] - min_hi[1]);
    lb.task_imbalance = std::max(0.0, max_lo[2] - min_hi[2]);
    // Slack keeps accumulated rounding in the bound from pruning a tie-breaker.
    lb.over_target = std::max(0.0, lb.over_target - 1e-11);
    lb.resource_imbalance = std::max(0.0, lb.resource_imbalance - 1e-11);
    lb.task_imbalance = std::max(0.0, lb.task_imbalance - 1e-11);
    lb.critical_moves = std::max(0.0, lb.critical_moves - 1e-11);
    return !best_ || compare(lb, *best_, p_.priorities()) < 0;
  }

  void leaf() {
    const std::size_t tn = s_.tier_count();
    for (std::size_t t = 0; t < tn; ++t) {
      for (int k = 0; k < 3; ++k) {
        if (partial_[t][k] + rest_[t][k] > s_.tier(t).capacity(kAllResources[k]) * (1.0 + 1e-12)) {
          return;
        }
      }
    }
    const ScoreVector approx = score_from_usage(
        s_, [&](std::size_t t, Resource r) {
          const int k = static_cast<int>(r);
          return partial_[t][k] + rest_[t][k];
        },
        movement_cost_, critical_);
    if (best_ && compare(approx, *best_, p_.priorities()) >= 0) return;
    offer(assignment_);
  }

  const Problem& p_;
  const Snapshot& s_;
  const Deadline& deadline_;

  std::vector<std::size_t> order_;
  std::vector<std::size_t> position_;
  std::vector<bool> forced_;
  std::vector<std::vector<std::size_t>> options_;
  std::vector<std::int64_t> forced_suffix_count_;
  std::vector<std::int64_t> forced_suffix_tasks_;
  std::vector<double> forced_suffix_crit_;
  std::array<std::vector<std::vector<std::size_t>>, 3> out_lists_;
  std::array<std::vector<std::vector<std::size_t>>, 3> in_lists_;

  Assignment assignment_;
  std::vector<std::array<double, 3>> partial_;
  std::vector<std::array<double, 3>> rest_;
  std::int64_t moved_ = 0;
  std::int64_t movement_cost_ = 0;
  double critical_ = 0.0;

  std::optional<ScoreVector> best_;
  Assignment best_assignment_;
  std::int64_t nodes_ = 0;
  bool complete_ = true;
};

}  // namespace detail

/// Exact lexicographic search. The incumbent is seeded with the local and
/// greedy answers, so a run cut short by the timeout is never worse than them.
inline Solution solve_optimal(const Problem& problem, const RunConfig& config) {
  const Deadline deadline(config.timeout_s);
  detail::BranchAndBound bnb(problem, deadline);

  RunConfig seeding = config;
  const Solution local = solve_local(problem, seeding);
  if (local.ok()) bnb.offer(local.mapping);
  for (Resource r : kAllResources) {
    seeding.timeout_s = std::max(1e-3, deadline.remaining());
    const Solution g = solve_greedy(problem, r, seeding);
    if (g.ok()) bnb.offer(g.mapping);
  }

  const bool complete = !deadline.expired() && bnb.run();
  const Termination termination = complete ? Termination::kConverged : Termination::kTimeout;
  if (bnb.best()) {
    return make_solution(problem, bnb.best_assignment(), "optimal", deadline.elapsed(),
                         bnb.nodes(), termination);
  }
  Solution out = make_solution(problem, problem.snapshot().initial_assignment(), "optimal",
                               deadline.elapsed(), bnb.nodes(), termination);
  out.status = complete ? SolveStatus::kInfeasible : SolveStatus::kUnsatisfiable;
  if (out.violations.empty()) {
    out.violations.push_back({Constraint::kMovement, "no assignment satisfies all constraints"});
  }
  return out;
}

inline Solution solve(const Problem& problem, const RunConfig& config) {
  switch (config.solver) {
    case SolverKind::kLocal: return solve_local(problem, config);
    case SolverKind::kOptimal: return solve_optimal(problem, config);
    case SolverKind::kGreedyCpu: return solve_greedy(problem, Resource::kCpu, config);
    case SolverKind::kGreedyMem: return solve_greedy(problem, Resource::kMem, config);
    case SolverKind::kGreedyTasks: return solve_greedy(problem, Resource::kTasks, config);
  }
  return solve_local(problem, config);
}

}  // namespace sptlb
