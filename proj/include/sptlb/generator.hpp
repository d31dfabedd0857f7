#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sptlb/model.hpp"
#include "sptlb/random.hpp"

namespace sptlb {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// How tiers share regions. Grouped: tiers split into two geographic groups
/// that each own half the regions. Ring: tier i holds a window of
/// consecutive regions, so neighbours overlap partially.
enum class RegionLayout { kGrouped, kRing };

struct GeneratorSpec {
  int tier_count = 5;
  int app_count = 100;
  int region_count = 6;
  /// Position of a tier that receives `hot_skew` times the placement weight.
  std::optional<int> hot_tier_index;
  double hot_skew = 2.5;
  /// SLO -> tier positions. Empty selects the default layout.
  std::map<int, std::set<int>> slo_layout;
  std::uint64_t seed = 1;

  Range cpu_demand{1.0, 20.0};
  Range mem_demand{2.0, 40.0};
  Range task_demand{1.0, 30.0};
  /// Each app is heavy in one randomly chosen resource and light in the rest.
  bool heterogeneous = false;

  /// Mean utilization used to derive capacities when no explicit range is set.
  double base_util = 0.5;
  std::optional<Range> cpu_capacity;
  std::optional<Range> mem_capacity;
  std::optional<Range> task_limit;
  double util_target_cpu = 0.70;
  double util_target_mem = 0.70;
  double util_target_tasks = 0.80;

  RegionLayout region_layout = RegionLayout::kGrouped;
  int regions_per_tier = 3;
  std::optional<std::int64_t> host_slots;

  bool with_latency_model = true;
  double intra_region_ms = 2.0;
  double near_region_ms = 12.0;
  double far_region_ms = 60.0;
  double latency_cv = 0.2;  // stddev / mean
};

/// Tiers [0, split) form the first group: SLO1/SLO2 live there, SLO4 lives in
/// the rest, SLO3 everywhere. Five tiers give {t1,t2,t3} / {t4,t5}.
inline int default_split(int tier_count) {
  if (tier_count <= 1) return 1;
  return std::clamp(static_cast<int>(std::lround(0.6 * tier_count)), 1, tier_count - 1);
}

inline std::map<int, std::set<int>> default_slo_layout(int tier_count) {
  const int split = default_split(tier_count);
  std::set<int> first, second, all;
  for (int t = 0; t < tier_count; ++t) {
    all.insert(t);
    (t < split ? first : second).insert(t);
  }
  if (second.empty()) second = all;
  return {{1, first}, {2, first}, {3, all}, {4, second}};
}

namespace detail {

inline double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

inline std::string padded(const std::string& prefix, int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

}  // namespace detail

/// Deterministic synthetic snapshot. The initial placement always respects
/// capacities and SLO support.
inline Snapshot generate(const GeneratorSpec& spec) {
  if (spec.tier_count < 1) throw ValidationError("tier_count", "must be >= 1");
  if (spec.app_count < 0) throw ValidationError("app_count", "must be >= 0");
  if (spec.region_count < 1) throw ValidationError("region_count", "must be >= 1");
  if (spec.hot_tier_index && (*spec.hot_tier_index < 0 || *spec.hot_tier_index >= spec.tier_count)) {
    throw ValidationError("hot_tier_index", "out of range");
  }
  if (!(spec.base_util > 0.0 && spec.base_util <= 1.0)) {
    throw ValidationError("base_util", "must be in (0, 1]");
  }
  for (const Range* r : {&spec.cpu_demand, &spec.mem_demand, &spec.task_demand}) {
    if (!(r->lo >= 0.0 && r->hi >= r->lo)) throw ValidationError("demand", "invalid range");
  }

  const int tn = spec.tier_count;
  const auto layout = spec.slo_layout.empty() ? default_slo_layout(tn) : spec.slo_layout;
  for (const auto& [slo, tiers] : layout) {
    if (tiers.empty()) {
      throw ValidationError("slo_layout." + std::to_string(slo), "must name at least one tier");
    }
    for (int t : tiers) {
      if (t < 0 || t >= tn) {
        throw ValidationError("slo_layout." + std::to_string(slo), "unknown tier position");
      }
    }
  }

  // Regions.
  const int rn = spec.region_count;
  const int split = default_split(tn);
  const int half = std::max(1, rn / 2);
  auto region_id = [](int r) { return "r" + std::to_string(r + 1); };
  auto region_group = [&](int r) { return rn == 1 ? 0 : (r < half ? 0 : 1); };
  std::vector<std::vector<int>> tier_regions(tn);
  for (int t = 0; t < tn; ++t) {
    if (spec.region_layout == RegionLayout::kGrouped) {
      const int group = (tn == 1 || t < split) ? 0 : 1;
      for (int r = 0; r < rn; ++r) {
        if (rn == 1 || region_group(r) == group) tier_regions[t].push_back(r);
      }
    } else {
      const int width = std::clamp(spec.regions_per_tier, 1, rn);
      const int start = (t * rn) / tn;
      for (int i = 0; i < width; ++i) tier_regions[t].push_back((start + i) % rn);
      std::sort(tier_regions[t].begin(), tier_regions[t].end());
    }
  }

  Rng place_rng(spec.seed, "generator/placement");
  Rng demand_rng(spec.seed, "generator/demand");
  Rng tier_rng(spec.seed, "generator/tiers");

  std::vector<int> slo_classes;
  std::vector<double> slo_weights;
  for (const auto& [slo, tiers] : layout) {
    slo_classes.push_back(slo);
    double w = 1.0;
    if (spec.slo_layout.empty()) w = slo == 1 ? 0.30 : slo == 2 ? 0.20 : slo == 3 ? 0.35 : 0.15;
    slo_weights.push_back(w);
  }
  auto pick_weighted = [](Rng& rng, const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (u < w[i]) return i;
      u -= w[i];
    }
    return w.size() - 1;
  };

  const int width = std::max(4, static_cast<int>(std::to_string(spec.app_count).size()));
  std::vector<AppRecord> apps;
  std::vector<int> app_tier;
  apps.reserve(spec.app_count);
  for (int i = 0; i < spec.app_count; ++i) {
    AppRecord app;
    app.app_id = detail::padded("app", i + 1, width);
    app.slo_score = slo_classes[pick_weighted(place_rng, slo_weights)];
    std::vector<int> candidates(layout.at(app.slo_score).begin(), layout.at(app.slo_score).end());
    std::vector<double> w;
    for (int t : candidates) w.push_back(spec.hot_tier_index == t ? spec.hot_skew : 1.0);
    app_tier.push_back(candidates[pick_weighted(place_rng, w)]);

    auto draw = [&](const Range& r, bool heavy, bool light) {
      if (heavy) return demand_rng.uniform(r.lo + 0.6 * (r.hi - r.lo), r.hi);
      if (light) return demand_rng.uniform(r.lo, r.lo + 0.15 * (r.hi - r.lo));
      return demand_rng.uniform(r.lo, r.hi);
    };
    const int dominant = spec.heterogeneous ? static_cast<int>(demand_rng.below(3)) : -1;
    app.cpu_p99 = detail::round3(draw(spec.cpu_demand, dominant == 0, dominant > 0));
    app.mem_p99 = detail::round3(draw(spec.mem_demand, dominant == 1, dominant >= 0 && dominant != 1));
    app.task_count = std::max<std::int64_t>(
        1, std::llround(draw(spec.task_demand, dominant == 2, dominant >= 0 && dominant != 2)));
    app.criticality_score = detail::round3(demand_rng.uniform(0.0, 10.0));
    apps.push_back(std::move(app));
  }

  // Capacities.
  std::vector<TierSpec> tiers(tn);
  std::array<double, 3> total{0.0, 0.0, 0.0};
  for (const auto& app : apps) {
    for (int k = 0; k < 3; ++k) total[k] += app.demand(kAllResources[k]);
  }
  const std::array<std::optional<Range>, 3> explicit_caps{spec.cpu_capacity, spec.mem_capacity,
                                                         spec.task_limit};
  for (int t = 0; t < tn; ++t) {
    auto& tier = tiers[t];
    tier.tier_id = "t" + std::to_string(t + 1);
    tier.util_target_cpu = spec.util_target_cpu;
    tier.util_target_mem = spec.util_target_mem;
    tier.util_target_tasks = spec.util_target_tasks;
    for (const auto& [slo, members] : layout) {
      if (members.count(t)) tier.supported_slos.insert(slo);
    }
    if (tier.supported_slos.empty()) tier.supported_slos.insert(layout.begin()->first);
    for (int k = 0; k < 3; ++k) {
      double cap;
      if (explicit_caps[k]) {
        cap = tier_rng.uniform(explicit_caps[k]->lo, explicit_caps[k]->hi);
      } else {
        const double fair = std::max(total[k], 1.0) / tn / spec.base_util;
        cap = fair * tier_rng.uniform(0.9, 1.1);
      }
      if (k == 0) tier.cpu_capacity = std::max(1.0, detail::round3(cap));
      if (k == 1) tier.mem_capacity = std::max(1.0, detail::round3(cap));
      if (k == 2) tier.task_limit = std::max<std::int64_t>(1, std::llround(cap));
    }
  }
  for (int k = 0; k < 3; ++k) {
    if (!explicit_caps[k]) continue;
    double cap_sum = 0.0;
    for (const auto& tier : tiers) cap_sum += tier.capacity(kAllResources[k]);
    if (cap_sum < total[k]) {
      throw ValidationError("generator", std::string("total ") + to_string(kAllResources[k]) +
                                             " demand exceeds total capacity");
    }
  }

  // Initial placement must fit. Derived capacities stretch to 95% of what
  // landed on them; explicit capacities spill apps onto other tiers.
  std::vector<std::array<double, 3>> used(tn, {0.0, 0.0, 0.0});
  auto fits = [&](int t, const AppRecord& app) {
    for (int k = 0; k < 3; ++k) {
      if (explicit_caps[k] &&
          used[t][k] + app.demand(kAllResources[k]) > tiers[t].capacity(kAllResources[k])) {
        return false;
      }
    }
    return true;
  };
  for (std::size_t i = 0; i < apps.size(); ++i) {
    int t = app_tier[i];
    if (!fits(t, apps[i])) {
      bool placed = false;
      for (int alt : layout.at(apps[i].slo_score)) {
        if (fits(alt, apps[i])) {
          t = alt;
          placed = true;
          break;
        }
      }
      if (!placed) {
        throw ValidationError("generator", "no valid initial placement for '" + apps[i].app_id + "'");
      }
      app_tier[i] = t;
    }
    for (int k = 0; k < 3; ++k) used[t][k] += apps[i].demand(kAllResources[k]);
  }
  for (int t = 0; t < tn; ++t) {
    auto& tier = tiers[t];
    if (!explicit_caps[0]) {
      tier.cpu_capacity = std::max(tier.cpu_capacity, std::ceil(used[t][0] / 0.95));
    }
    if (!explicit_caps[1]) {
      tier.mem_capacity = std::max(tier.mem_capacity, std::ceil(used[t][1] / 0.95));
    }
    if (!explicit_caps[2]) {
      tier.task_limit = std::max<std::int64_t>(tier.task_limit,
                                               static_cast<std::int64_t>(std::ceil(used[t][2] / 0.95)));
    }
  }

  // Regions, hosts, and sources.
  for (int t = 0; t < tn; ++t) {
    const auto region_n = static_cast<std::int64_t>(tier_regions[t].size());
    const std::int64_t slots =
        spec.host_slots.value_or(std::max<std::int64_t>(
            4, (2 * static_cast<std::int64_t>(spec.app_count) + tn * region_n - 1) / (tn * region_n)));
    for (int r : tier_regions[t]) tiers[t].regions[region_id(r)] = slots;
  }
  Rng source_rng(spec.seed, "generator/sources");
  for (std::size_t i = 0; i < apps.size(); ++i) {
    const auto& regions = tier_regions[app_tier[i]];
    apps[i].source_region = region_id(regions[source_rng.below(regions.size())]);
    apps[i].current_tier = tiers[app_tier[i]].tier_id;
  }

  std::optional<LatencyModel> model;
  if (spec.with_latency_model) {
    model.emplace(true);
    for (int a = 0; a < rn; ++a) {
      for (int b = a; b < rn; ++b) {
        const double mean = a == b ? spec.intra_region_ms
                            : region_group(a) == region_group(b) ? spec.near_region_ms
                                                                 : spec.far_region_ms;
        model->set(region_id(a), region_id(b), {mean, spec.latency_cv * mean});
      }
    }
  }
  return Snapshot(std::move(tiers), std::move(apps), std::move(model));
}

}  // namespace sptlb
