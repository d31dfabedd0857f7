#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sptlb/problem.hpp"
#include "sptlb/solvers.hpp"

namespace sptlb {

/// Regions each app may run in without losing locality to its data source.
/// Tier regions come from the snapshot.
struct RegionPolicy {
  std::vector<std::set<std::string>> acceptable;  // per app position

  /// Source region plus every region whose mean latency from it is within
  /// `radius_ms`. Without a latency model only the source region qualifies.
  static RegionPolicy derive(const Snapshot& s, double radius_ms) {
    std::set<std::string> universe;
    for (const auto& t : s.tiers()) {
      for (const auto& [region, slots] : t.regions) universe.insert(region);
    }
    RegionPolicy out;
    out.acceptable.reserve(s.app_count());
    for (const auto& app : s.apps()) {
      std::set<std::string> ok{app.source_region};
      if (const auto& model = s.latency_model()) {
        for (const auto& region : universe) {
          if (auto d = model->find(app.source_region, region); d && d->mean_ms <= radius_ms) {
            ok.insert(region);
          }
        }
      }
      out.acceptable.push_back(std::move(ok));
    }
    return out;
  }
};

/// Free host slots per (tier, region). One slot per placed app.
class HostPool {
 public:
  HostPool() = default;

  static HostPool from_snapshot(const Snapshot& s) {
    HostPool pool;
    for (std::size_t t = 0; t < s.tier_count(); ++t) {
      for (const auto& [region, slots] : s.tier(t).regions) pool.free_[{t, region}] = slots;
    }
    return pool;
  }

  std::int64_t free_slots(std::size_t tier, const std::string& region) const {
    auto it = free_.find({tier, region});
    return it == free_.end() ? 0 : it->second;
  }

  void set_free(std::size_t tier, const std::string& region, std::int64_t slots) {
    if (slots < 0) throw std::invalid_argument("host slots must be >= 0");
    free_[{tier, region}] = slots;
  }

  void take(std::size_t tier, const std::string& region) {
    auto it = free_.find({tier, region});
    if (it == free_.end() || it->second <= 0) {
      throw std::logic_error("no free slot in (" + std::to_string(tier) + ", " + region + ")");
    }
    --it->second;
  }

  std::int64_t total_free() const {
    std::int64_t sum = 0;
    for (const auto& [key, slots] : free_) sum += slots;
    return sum;
  }

  bool operator==(const HostPool&) const = default;

 private:
  std::map<std::pair<std::size_t, std::string>, std::int64_t> free_;
};

/// Region scheduler: the move is acceptable iff the destination tier has at
/// least one region the app may run in.
inline bool region_check(const Snapshot& s, std::size_t app, std::size_t dest,
                         const RegionPolicy& policy) {
  if (app >= s.app_count() || dest >= s.tier_count() || app >= policy.acceptable.size()) {
    throw UnknownIdError("region_check on unknown app or tier position");
  }
  const auto& regions = s.tier(dest).regions;
  return std::any_of(policy.acceptable[app].begin(), policy.acceptable[app].end(),
                     [&](const std::string& r) { return regions.count(r) != 0; });
}

inline bool region_check(const Snapshot& s, const std::string& app_id, const std::string& tier_id,
                         const RegionPolicy& policy) {
  return region_check(s, s.app_index(app_id), s.tier_index(tier_id), policy);
}

struct HostDecision {
  Move move;
  bool accepted = false;
  std::string region;  // chosen region when accepted
};

struct HostAllocation {
  std::vector<HostDecision> decisions;  // in app_id order
  HostPool pool;

  std::size_t accepted_count() const {
    return static_cast<std::size_t>(std::count_if(decisions.begin(), decisions.end(),
                                                  [](const HostDecision& d) { return d.accepted; }));
  }
};

/// Host scheduler: processes moves by ascending app id and places each in
/// the acceptable destination region with the most free slots (ties by
/// region id). A move with no free acceptable slot is rejected and leaves the
/// pool untouched.
inline HostAllocation host_allocate(const Snapshot& s, std::vector<Move> moves,
                                    const RegionPolicy& policy, HostPool pool) {
  for (const auto& m : moves) {
    if (m.app >= s.app_count() || m.to >= s.tier_count() || m.app >= policy.acceptable.size()) {
      throw UnknownIdError("host_allocate on unknown app or tier position");
    }
  }
  std::sort(moves.begin(), moves.end(), [&](const Move& x, const Move& y) {
    return s.app(x.app).app_id < s.app(y.app).app_id;
  });
  HostAllocation out;
  for (const auto& m : moves) {
    HostDecision d{m, false, {}};
    std::int64_t best_free = 0;
    for (const auto& [region, slots] : s.tier(m.to).regions) {
      if (!policy.acceptable[m.app].count(region)) continue;
      const std::int64_t free = pool.free_slots(m.to, region);
      if (free > best_free) {
        best_free = free;
        d.region = region;
      }
    }
    if (best_free > 0) {
      pool.take(m.to, d.region);
      d.accepted = true;
    } else {
      d.region.clear();
    }
    out.decisions.push_back(std::move(d));
  }
  out.pool = std::move(pool);
  return out;
}

enum class CoopOutcome { kAcknowledged, kTimeout, kIterationLimit, kSolverFailed };

inline const char* to_string(CoopOutcome o) {
  switch (o) {
    case CoopOutcome::kAcknowledged: return "acknowledged";
    case CoopOutcome::kTimeout: return "timeout";
    case CoopOutcome::kIterationLimit: return "iteration_limit";
    case CoopOutcome::kSolverFailed: return "solver_failed";
  }
  return "?";
}

struct CoopIteration {
  std::vector<Move> proposed;
  std::vector<Move> region_rejections;
  std::vector<Move> host_rejections;
  std::vector<std::pair<std::size_t, std::size_t>> avoid_added;  // (app, tier)
  SolveStatus solver_status = SolveStatus::kOk;
};

struct CoopTrace {
  std::vector<CoopIteration> iterations;
  CoopOutcome outcome = CoopOutcome::kIterationLimit;
  Solution final;
  /// Placement region per accepted move of the final solution.
  std::vector<HostDecision> placements;
  HostPool pool;
  std::vector<std::pair<std::size_t, std::size_t>> avoid;  // final avoid set

  bool acknowledged() const noexcept { return outcome == CoopOutcome::kAcknowledged; }
};

/// Proposes mappings to the region and host schedulers; every rejection turns
/// into an avoid pair and the problem is re-solved from scratch. The timeout
/// covers the whole exchange, solver time included.
inline CoopTrace cooperate(const Problem& problem, const RunConfig& config,
                           const RegionPolicy& policy, const HostPool& pool) {
  config.validate();
  const Deadline deadline(config.timeout_s);
  const auto& s = problem.snapshot();
  Problem current = problem;
  CoopTrace trace;
  trace.pool = pool;
  trace.outcome = CoopOutcome::kIterationLimit;

  for (int round = 0; round < config.max_hierarchy_iterations; ++round) {
    if (deadline.expired()) {
      trace.outcome = CoopOutcome::kTimeout;
      break;
    }
    RunConfig cfg = config;
    cfg.timeout_s = std::max(1e-3, deadline.remaining());
    Solution proposal = solve(current, cfg);

    CoopIteration it;
    it.proposed = proposal.moves;
    it.solver_status = proposal.status;
    if (!proposal.ok()) {
      trace.iterations.push_back(std::move(it));
      trace.outcome = CoopOutcome::kSolverFailed;
      break;
    }

    for (const auto& m : proposal.moves) {
      if (!region_check(s, m.app, m.to, policy)) it.region_rejections.push_back(m);
    }
    if (it.region_rejections.empty()) {
      HostAllocation alloc = host_allocate(s, proposal.moves, policy, pool);
      for (const auto& d : alloc.decisions) {
        if (!d.accepted) it.host_rejections.push_back(d.move);
      }
      if (it.host_rejections.empty()) {
        trace.iterations.push_back(std::move(it));
        trace.outcome = CoopOutcome::kAcknowledged;
        trace.final = std::move(proposal);
        trace.placements = std::move(alloc.decisions);
        trace.pool = std::move(alloc.pool);
        break;
      }
    }

    for (const auto* rejected : {&it.region_rejections, &it.host_rejections}) {
      for (const auto& m : *rejected) {
        if (!current.is_avoided(m.app, m.to)) {
          current = current.with_avoid(m.app, m.to);
          it.avoid_added.emplace_back(m.app, m.to);
        }
      }
    }
    trace.iterations.push_back(std::move(it));
  }

  if (!trace.acknowledged()) {
    trace.final = identity_solution(current, to_string(config.solver));
    trace.final.status = SolveStatus::kUnresolved;
  }
  trace.avoid.assign(current.avoid().begin(), current.avoid().end());
  return trace;
}

}  // namespace sptlb
