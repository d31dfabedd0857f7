#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sptlb/error.hpp"
#include "sptlb/random.hpp"

namespace sptlb {

enum class Resource { kCpu, kMem, kTasks };

inline constexpr Resource kAllResources[] = {Resource::kCpu, Resource::kMem, Resource::kTasks};

inline const char* to_string(Resource r) {
  switch (r) {
    case Resource::kCpu: return "cpu";
    case Resource::kMem: return "mem";
    case Resource::kTasks: return "tasks";
  }
  return "?";
}

inline Resource parse_resource(const std::string& s) {
  if (s == "cpu") return Resource::kCpu;
  if (s == "mem") return Resource::kMem;
  if (s == "tasks") return Resource::kTasks;
  throw std::invalid_argument("unknown resource '" + s + "'");
}

/// One streaming application. Demands are p99 aggregates.
struct AppRecord {
  std::string app_id;
  double cpu_p99 = 0.0;
  double mem_p99 = 0.0;
  std::int64_t task_count = 1;
  int slo_score = 0;
  double criticality_score = 0.0;
  std::string source_region;
  std::string current_tier;

  double demand(Resource r) const {
    switch (r) {
      case Resource::kCpu: return cpu_p99;
      case Resource::kMem: return mem_p99;
      case Resource::kTasks: return static_cast<double>(task_count);
    }
    return 0.0;
  }

  bool operator==(const AppRecord&) const = default;
};

struct TierSpec {
  std::string tier_id;
  double cpu_capacity = 0.0;
  double mem_capacity = 0.0;
  std::int64_t task_limit = 0;
  double util_target_cpu = 0.70;
  double util_target_mem = 0.70;
  double util_target_tasks = 0.80;
  std::set<int> supported_slos;
  /// region id -> host slots
  std::map<std::string, std::int64_t> regions;

  double capacity(Resource r) const {
    switch (r) {
      case Resource::kCpu: return cpu_capacity;
      case Resource::kMem: return mem_capacity;
      case Resource::kTasks: return static_cast<double>(task_limit);
    }
    return 0.0;
  }

  double target(Resource r) const {
    switch (r) {
      case Resource::kCpu: return util_target_cpu;
      case Resource::kMem: return util_target_mem;
      case Resource::kTasks: return util_target_tasks;
    }
    return 0.0;
  }

  bool supports(int slo) const { return supported_slos.count(slo) != 0; }
  bool has_region(const std::string& region) const { return regions.count(region) != 0; }

  bool operator==(const TierSpec&) const = default;
};

/// Network latency between two regions, truncated-normal at zero.
struct LatencyDist {
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  bool operator==(const LatencyDist&) const = default;
};

/// Per region-pair latency distributions. Lookups fall back to the reversed
/// pair when the model is symmetric.
class LatencyModel {
 public:
  explicit LatencyModel(bool symmetric = true) : symmetric_(symmetric) {}

  void set(const std::string& from, const std::string& to, LatencyDist d) {
    if (d.mean_ms < 0.0 || d.stddev_ms < 0.0 || !std::isfinite(d.mean_ms) ||
        !std::isfinite(d.stddev_ms)) {
      throw ValidationError("latency_model[" + from + "," + to + "]",
                            "mean_ms and stddev_ms must be finite and >= 0");
    }
    pairs_[{from, to}] = d;
  }

  std::optional<LatencyDist> find(const std::string& from, const std::string& to) const {
    if (auto it = pairs_.find({from, to}); it != pairs_.end()) return it->second;
    if (symmetric_) {
      if (auto it = pairs_.find({to, from}); it != pairs_.end()) return it->second;
    }
    return std::nullopt;
  }

  LatencyDist at(const std::string& from, const std::string& to) const {
    if (auto d = find(from, to)) return *d;
    throw ModelIncompleteError("latency model has no distribution for region pair (" + from +
                               ", " + to + ")");
  }

  bool symmetric() const noexcept { return symmetric_; }
  const std::map<std::pair<std::string, std::string>, LatencyDist>& pairs() const noexcept {
    return pairs_;
  }

  bool operator==(const LatencyModel&) const = default;

 private:
  bool symmetric_;
  std::map<std::pair<std::string, std::string>, LatencyDist> pairs_;
};

struct SnapshotOptions {
  /// Reject apps whose SLO is unsupported by their current tier instead of
  /// recording a warning.
  bool strict_slo = false;
};

/// App → tier assignment, indexed by app position in the snapshot; values are
/// tier positions.
using Assignment = std::vector<std::size_t>;

/// App → tier assignment keyed by ids.
using IdMapping = std::map<std::string, std::string>;

/// Validated, immutable cluster state.
class Snapshot {
 public:
  Snapshot(std::vector<TierSpec> tiers, std::vector<AppRecord> apps,
           std::optional<LatencyModel> latency_model = std::nullopt,
           SnapshotOptions options = {})
      : tiers_(std::move(tiers)), apps_(std::move(apps)), latency_(std::move(latency_model)) {
    validate(options);
  }

  const std::vector<TierSpec>& tiers() const noexcept { return tiers_; }
  const std::vector<AppRecord>& apps() const noexcept { return apps_; }
  const std::optional<LatencyModel>& latency_model() const noexcept { return latency_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  std::size_t tier_count() const noexcept { return tiers_.size(); }
  std::size_t app_count() const noexcept { return apps_.size(); }

  const TierSpec& tier(std::size_t t) const { return tiers_.at(t); }
  const AppRecord& app(std::size_t a) const { return apps_.at(a); }

  /// Tier position an app starts on.
  std::size_t home(std::size_t a) const { return home_.at(a); }
  const Assignment& initial_assignment() const noexcept { return home_; }

  std::optional<std::size_t> find_tier(const std::string& id) const {
    if (auto it = tier_index_.find(id); it != tier_index_.end()) return it->second;
    return std::nullopt;
  }
  std::optional<std::size_t> find_app(const std::string& id) const {
    if (auto it = app_index_.find(id); it != app_index_.end()) return it->second;
    return std::nullopt;
  }
  std::size_t tier_index(const std::string& id) const {
    if (auto t = find_tier(id)) return *t;
    throw UnknownIdError("unknown tier '" + id + "'");
  }
  std::size_t app_index(const std::string& id) const {
    if (auto a = find_app(id)) return *a;
    throw UnknownIdError("unknown app '" + id + "'");
  }

  /// Order-sensitive digest of app and tier ids, used to detect solutions
  /// that belong to a different snapshot.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  bool operator==(const Snapshot& o) const {
    return tiers_ == o.tiers_ && apps_ == o.apps_ && latency_ == o.latency_;
  }

 private:
  void validate(const SnapshotOptions& options) {
    auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    auto in_unit = [](double v) { return std::isfinite(v) && v > 0.0 && v <= 1.0; };

    if (tiers_.empty()) throw ValidationError("tiers", "at least one tier is required");
    for (std::size_t t = 0; t < tiers_.size(); ++t) {
      const auto& tier = tiers_[t];
      const std::string path = "tiers[" + std::to_string(t) + "]";
      if (tier.tier_id.empty()) throw ValidationError(path + ".tier_id", "must be non-empty");
      if (!tier_index_.emplace(tier.tier_id, t).second) {
        throw ValidationError(path + ".tier_id", "duplicate tier id '" + tier.tier_id + "'");
      }
      if (!(std::isfinite(tier.cpu_capacity) && tier.cpu_capacity > 0.0)) {
        throw ValidationError(path + ".cpu_capacity", "must be > 0");
      }
      if (!(std::isfinite(tier.mem_capacity) && tier.mem_capacity > 0.0)) {
        throw ValidationError(path + ".mem_capacity", "must be > 0");
      }
      if (tier.task_limit <= 0) throw ValidationError(path + ".task_limit", "must be > 0");
      if (!in_unit(tier.util_target_cpu)) {
        throw ValidationError(path + ".util_target_cpu", "must be in (0, 1]");
      }
      if (!in_unit(tier.util_target_mem)) {
        throw ValidationError(path + ".util_target_mem", "must be in (0, 1]");
      }
      if (!in_unit(tier.util_target_tasks)) {
        throw ValidationError(path + ".util_target_tasks", "must be in (0, 1]");
      }
      if (tier.supported_slos.empty()) {
        throw ValidationError(path + ".supported_slos", "must be non-empty");
      }
      if (tier.regions.empty()) throw ValidationError(path + ".regions", "must be non-empty");
      for (const auto& [region, slots] : tier.regions) {
        if (slots < 0) {
          throw ValidationError(path + ".regions." + region, "host slots must be >= 0");
        }
      }
    }

    home_.reserve(apps_.size());
    for (std::size_t a = 0; a < apps_.size(); ++a) {
      const auto& app = apps_[a];
      const std::string path = "apps[" + std::to_string(a) + "]";
      if (app.app_id.empty()) throw ValidationError(path + ".app_id", "must be non-empty");
      if (!app_index_.emplace(app.app_id, a).second) {
        throw ValidationError(path + ".app_id", "duplicate app id '" + app.app_id + "'");
      }
      if (!finite_nonneg(app.cpu_p99)) throw ValidationError(path + ".cpu_p99", "must be >= 0");
      if (!finite_nonneg(app.mem_p99)) throw ValidationError(path + ".mem_p99", "must be >= 0");
      if (app.task_count < 1) throw ValidationError(path + ".task_count", "must be >= 1");
      if (!finite_nonneg(app.criticality_score)) {
        throw ValidationError(path + ".criticality_score", "must be >= 0");
      }
      auto it = tier_index_.find(app.current_tier);
      if (it == tier_index_.end()) {
        throw ValidationError(path + ".current_tier", "unknown tier '" + app.current_tier + "'");
      }
      home_.push_back(it->second);
      if (!tiers_[it->second].supports(app.slo_score)) {
        const std::string msg = "app '" + app.app_id + "' has SLO " +
                                std::to_string(app.slo_score) + " unsupported by tier '" +
                                app.current_tier + "'";
        if (options.strict_slo) throw ValidationError(path + ".slo_score", msg);
        warnings_.push_back(path + ".slo_score: " + msg);
      }
    }

    std::uint64_t h = fnv1a("sptlb");
    for (const auto& t : tiers_) h = fnv1a(t.tier_id, fnv1a("\x1f", h));
    for (const auto& a : apps_) h = fnv1a(a.app_id, fnv1a("\x1e", h));
    fingerprint_ = h;
  }

  std::vector<TierSpec> tiers_;
  std::vector<AppRecord> apps_;
  std::optional<LatencyModel> latency_;
  std::unordered_map<std::string, std::size_t> tier_index_;
  std::unordered_map<std::string, std::size_t> app_index_;
  Assignment home_;
  std::vector<std::string> warnings_;
  std::uint64_t fingerprint_ = 0;
};

/// Projected load of one tier under some assignment.
struct TierMetrics {
  std::string tier_id;
  double cpu_used = 0.0;
  double mem_used = 0.0;
  std::int64_t tasks_used = 0;
  std::int64_t app_count = 0;
  double cpu_util = 0.0;
  double mem_util = 0.0;
  double task_util = 0.0;

  double used(Resource r) const {
    switch (r) {
      case Resource::kCpu: return cpu_used;
      case Resource::kMem: return mem_used;
      case Resource::kTasks: return static_cast<double>(tasks_used);
    }
    return 0.0;
  }

  double util(Resource r) const {
    switch (r) {
      case Resource::kCpu: return cpu_util;
      case Resource::kMem: return mem_util;
      case Resource::kTasks: return task_util;
    }
    return 0.0;
  }

  bool operator==(const TierMetrics&) const = default;
};

/// Converts an id-keyed mapping into positional form. The mapping must cover
/// exactly the snapshot's apps.
inline Assignment to_assignment(const Snapshot& snapshot, const IdMapping& mapping) {
  Assignment out(snapshot.app_count(), 0);
  std::vector<bool> seen(snapshot.app_count(), false);
  for (const auto& [app_id, tier_id] : mapping) {
    const std::size_t a = snapshot.app_index(app_id);
    out[a] = snapshot.tier_index(tier_id);
    seen[a] = true;
  }
  for (std::size_t a = 0; a < seen.size(); ++a) {
    if (!seen[a]) throw UnknownIdError("mapping misses app '" + snapshot.app(a).app_id + "'");
  }
  return out;
}

inline IdMapping to_id_mapping(const Snapshot& snapshot, const Assignment& assignment) {
  IdMapping out;
  for (std::size_t a = 0; a < assignment.size(); ++a) {
    out.emplace(snapshot.app(a).app_id, snapshot.tier(assignment[a]).tier_id);
  }
  return out;
}

inline void check_assignment(const Snapshot& snapshot, const Assignment& assignment) {
  if (assignment.size() != snapshot.app_count()) {
    throw UnknownIdError("assignment covers " + std::to_string(assignment.size()) +
                         " apps, snapshot has " + std::to_string(snapshot.app_count()));
  }
  for (std::size_t t : assignment) {
    if (t >= snapshot.tier_count()) {
      throw UnknownIdError("assignment references tier position " + std::to_string(t));
    }
  }
}

inline std::vector<TierMetrics> project_metrics(const Snapshot& snapshot,
                                                const Assignment& assignment) {
  check_assignment(snapshot, assignment);
  std::vector<TierMetrics> out(snapshot.tier_count());
  for (std::size_t t = 0; t < out.size(); ++t) out[t].tier_id = snapshot.tier(t).tier_id;
  for (std::size_t a = 0; a < assignment.size(); ++a) {
    const auto& app = snapshot.app(a);
    auto& m = out[assignment[a]];
    m.cpu_used += app.cpu_p99;
    m.mem_used += app.mem_p99;
    m.tasks_used += app.task_count;
    m.app_count += 1;
  }
  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto& tier = snapshot.tier(t);
    auto& m = out[t];
    m.cpu_util = m.cpu_used / tier.cpu_capacity;
    m.mem_util = m.mem_used / tier.mem_capacity;
    m.task_util = static_cast<double>(m.tasks_used) / static_cast<double>(tier.task_limit);
  }
  return out;
}

inline std::vector<TierMetrics> project_metrics(const Snapshot& snapshot,
                                                const IdMapping& mapping) {
  return project_metrics(snapshot, to_assignment(snapshot, mapping));
}

/// Spread of capacity-normalized utilization: max minus min over tiers.
inline double imbalance(std::span<const TierMetrics> metrics, Resource r) {
  if (metrics.empty()) throw std::invalid_argument("imbalance of an empty metrics list");
  double lo = metrics.front().util(r);
  double hi = lo;
  for (const auto& m : metrics) {
    lo = std::min(lo, m.util(r));
    hi = std::max(hi, m.util(r));
  }
  return hi - lo;
}

}  // namespace sptlb
