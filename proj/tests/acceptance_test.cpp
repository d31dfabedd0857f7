// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sptlb/sptlb.hpp"
#include "test_support.hpp"

namespace {

using namespace sptlb;
using namespace sptlb::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

const std::vector<SolverKind> kAllSolvers{SolverKind::kLocal, SolverKind::kOptimal,
                                          SolverKind::kGreedyCpu, SolverKind::kGreedyMem,
                                          SolverKind::kGreedyTasks};

// ---------------------------------------------------------------------------
// 1 + 3: soundness and movement budget over a generated corpus
// ---------------------------------------------------------------------------

Outcome soundness_and_budget() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  std::size_t runs = 0, flagged = 0, violations = 0, over_budget = 0;
  std::string first_bad;
  const int instances = 1000;
  for (int i = 0; i < instances; ++i) {
    GeneratorSpec spec;
    spec.seed = 1000 + i;
    spec.tier_count = pick(2, 6);
    spec.app_count = pick(5, 200);
    spec.region_count = pick(2, 8);
    spec.regions_per_tier = pick(1, 3);
    spec.region_layout = pick(0, 1) ? RegionLayout::kRing : RegionLayout::kGrouped;
    spec.heterogeneous = pick(0, 1) == 1;
    spec.base_util = 0.3 + 0.1 * pick(0, 4);
    if (pick(0, 1)) spec.hot_tier_index = pick(0, spec.tier_count - 1);
    const auto s = share(generate(spec));

    RunConfig config;
    config.move_budget_fraction = 0.10;
    config.timeout_s = 0.05;
    config.seed = i;
    const bool w_cnst = pick(0, 2) == 0;
    config.variant = w_cnst ? Variant::kWCnst : Variant::kNoCnst;
    Problem problem = compile(s, config);

    OracleRules rules;
    rules.budget = static_cast<std::int64_t>(s->app_count()) / 10;
    rules.restrict_transitions = w_cnst;
    if (w_cnst) rules.allowed = oracle_transitions(*s, 0.5);
    if (pick(0, 2) == 0) {
      for (int k = 0; k < 4; ++k) {
        const auto a = static_cast<std::size_t>(pick(0, static_cast<int>(s->app_count()) - 1));
        const auto t = static_cast<std::size_t>(pick(0, spec.tier_count - 1));
        if (t == home_of(*s, a)) continue;
        problem = problem.with_avoid(a, t);
        rules.avoid.insert({a, t});
      }
    }

    for (SolverKind kind : kAllSolvers) {
      config.solver = kind;
      const Solution sol = solve(problem, config);
      ++runs;
      if (static_cast<std::int64_t>(sol.moves.size()) > rules.budget) ++over_budget;
      if (!sol.ok()) {
        ++flagged;
        continue;
      }
      std::size_t moved = 0;
      for (std::size_t a = 0; a < sol.mapping.size(); ++a) moved += sol.mapping[a] != home_of(*s, a);
      const bool ok = sol.mapping.size() == s->app_count() && moved == sol.moves.size() &&
                      oracle_feasible(*s, sol.mapping, rules);
      if (!ok) {
        ++violations;
        if (first_bad.empty()) first_bad = fmt(" first: instance %d %s", i, to_string(kind));
      }
    }
  }
  const double elapsed = seconds_since(start);

  Outcome c1;
  c1.pass = violations == 0 && elapsed <= 300.0;
  c1.detail = fmt("%d instances, %zu runs, %zu flagged, %zu violations, %.1fs (limit 300s)%s",
                  instances, runs, flagged, violations, elapsed, first_bad.c_str());
  report(1, "constraint soundness", c1);

  Outcome c3;
  c3.pass = over_budget == 0;
  c3.detail = fmt("%zu runs at fraction 0.10, %zu over floor(0.10*N)", runs, over_budget);
  return c3;
}

// ---------------------------------------------------------------------------
// 2: optimal search against exhaustive enumeration
// ---------------------------------------------------------------------------

void oracle_optimality() {
  const auto start = Clock::now();
  std::mt19937_64 rng(777);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int matched = 0, infeasible_agreed = 0, mismatched = 0;
  std::string first_bad;
  const int instances = 200;
  for (int i = 0; i < instances; ++i) {
    const auto s = share(random_small_instance(rng, 8, 3));
    const std::int64_t n = static_cast<std::int64_t>(s->app_count());
    const int quarters = std::array{1, 2, 4}[pick(0, 2)];
    RunConfig config;
    config.move_budget_fraction = quarters / 4.0;
    config.timeout_s = 20.0;
    config.seed = i;
    const bool w_cnst = pick(0, 3) == 0;
    config.variant = w_cnst ? Variant::kWCnst : Variant::kNoCnst;
    Problem problem = compile(s, config);

    OracleRules rules;
    rules.budget = n * quarters / 4;
    rules.restrict_transitions = w_cnst;
    if (w_cnst) rules.allowed = oracle_transitions(*s, 0.5);
    std::vector<double> crit;
    for (const auto& app : s->apps()) crit.push_back(app.criticality_score);
    rules.critical_threshold = oracle_median(crit);
    if (pick(0, 3) == 0) {
      const auto a = static_cast<std::size_t>(pick(0, static_cast<int>(n) - 1));
      const auto t = static_cast<std::size_t>(pick(0, static_cast<int>(s->tier_count()) - 1));
      if (t != home_of(*s, a)) {
        problem = problem.with_avoid(a, t);
        rules.avoid.insert({a, t});
      }
    }

    const OracleBest best = oracle_best(*s, rules);
    const Solution sol = solve_optimal(problem, config);
    bool ok;
    if (!best.score) {
      ok = sol.status == SolveStatus::kInfeasible;
      infeasible_agreed += ok;
    } else {
      const OracleScore got{sol.score.over_target, sol.score.resource_imbalance,
                            sol.score.task_imbalance, static_cast<double>(sol.score.movement_cost),
                            sol.score.critical_moves};
      ok = sol.ok() && oracle_feasible(*s, sol.mapping, rules) &&
           oracle_compare(oracle_score(*s, sol.mapping, rules), *best.score) == 0 &&
           oracle_compare(got, *best.score) == 0 &&
           static_cast<double>(sol.score.movement_cost) == (*best.score)[3];
      matched += ok;
    }
    if (!ok) {
      ++mismatched;
      if (first_bad.empty()) first_bad = fmt(" first: instance %d", i);
    }
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = mismatched == 0 && elapsed <= 120.0;
  o.detail = fmt("%d instances (<=8 apps, <=3 tiers), %d equal to enumeration at 1e-9, "
                 "%d agreed infeasible, %d mismatched, %.1fs (limit 120s)%s",
                 instances, matched, infeasible_agreed, mismatched, elapsed, first_bad.c_str());
  report(2, "oracle optimality", o);
}

// ---------------------------------------------------------------------------
// 4: balance trend
// ---------------------------------------------------------------------------

// Each of the first three tiers is hot in exactly one resource; the rest hold
// small filler apps.
Snapshot adversarial_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const int tn = 4 + static_cast<int>(seed % 3);
  std::vector<TierSpec> tiers;
  for (int t = 0; t < tn; ++t) tiers.push_back(make_tier("t" + std::to_string(t + 1), 100, 100, 100));
  std::vector<AppRecord> apps;
  int id = 0;
  auto name = [&] { return fmt("a%03d", id++); };
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 8; ++i) {
      const double h = std::round(uni(7.5, 9.0) * 10) / 10;
      apps.push_back(make_app(name(), k == 0 ? h : 1, k == 1 ? h : 1,
                              k == 2 ? static_cast<std::int64_t>(std::lround(h)) : 1,
                              "t" + std::to_string(k + 1)));
    }
  }
  for (int i = 0; i < 96; ++i) apps.push_back(make_app(name(), 0.2, 0.2, 1, "t" + std::to_string(i % tn + 1)));
  return Snapshot(tiers, apps);
}

const char* kResource[3] = {"cpu", "mem", "tasks"};

void balance_trend() {
  RunConfig config;
  config.timeout_s = 30.0;
  config.solver = SolverKind::kLocal;
  std::vector<std::string> problems;
  const std::array<std::string, 3> greedy{"greedy_cpu", "greedy_mem", "greedy_tasks"};

  // Hot-tier family: local reduces all three, each greedy reduces its own.
  const int hot_seeds = 6;
  for (int seed = 1; seed <= hot_seeds; ++seed) {
    GeneratorSpec spec;
    spec.seed = seed;
    spec.hot_tier_index = 2;
    spec.heterogeneous = true;
    config.seed = seed;
    const auto r = eval_balance(share(generate(spec)), config);
    const auto& local = r.at("local").final_imbalance;
    for (int k = 0; k < 3; ++k) {
      if (!(local[k] < r.initial_imbalance[k])) {
        problems.push_back(fmt("hot seed %d: local %s %.3f >= initial %.3f", seed, kResource[k],
                               local[k], r.initial_imbalance[k]));
      }
      const auto& g = r.at(greedy[k]).final_imbalance;
      if (!(g[k] < r.initial_imbalance[k])) {
        problems.push_back(fmt("hot seed %d: %s own %.3f >= initial %.3f", seed, greedy[k].c_str(),
                               g[k], r.initial_imbalance[k]));
      }
    }
  }

  // Adversarial family: greedy leaves another resource >= 1.5x local's final.
  const int adversarial_seeds = 10;
  double worst_ratio = 1e9;
  for (int seed = 1; seed <= adversarial_seeds; ++seed) {
    config.seed = seed;
    const auto r = eval_balance(share(adversarial_instance(seed)), config);
    const auto& local = r.at("local").final_imbalance;
    for (int k = 0; k < 3; ++k) {
      const auto& g = r.at(greedy[k]).final_imbalance;
      if (!(g[k] < r.initial_imbalance[k])) {
        problems.push_back(fmt("adversarial seed %d: %s own %.3f >= initial %.3f", seed,
                               greedy[k].c_str(), g[k], r.initial_imbalance[k]));
      }
      double best = 0.0;
      for (int other = 0; other < 3; ++other) {
        if (other == k) continue;
        best = std::max(best, local[other] > 0 ? g[other] / local[other] : (g[other] > 0 ? 1e9 : 0.0));
      }
      worst_ratio = std::min(worst_ratio, best);
      if (!(best >= 1.5)) {
        problems.push_back(fmt("adversarial seed %d: %s best other-resource ratio %.2f < 1.5", seed,
                               greedy[k].c_str(), best));
      }
    }
  }

  // Determinism of the trend inputs: a repeated run gives the same report.
  GeneratorSpec spec;
  spec.seed = 1;
  spec.hot_tier_index = 2;
  spec.heterogeneous = true;
  config.seed = 1;
  const auto s = share(generate(spec));
  const auto a = eval_balance(s, config), b = eval_balance(s, config);
  for (std::size_t i = 0; i < a.solvers.size(); ++i) {
    if (a.solvers[i].mapping != b.solvers[i].mapping) problems.push_back("repeat run differs");
  }

  Outcome o;
  o.pass = problems.empty();
  o.detail = fmt("%d hot-tier seeds, %d adversarial seeds, min greedy/local other-resource ratio %.2f",
                 hot_seeds, adversarial_seeds, worst_ratio);
  if (!problems.empty()) o.detail += "; " + problems.front();
  report(4, "balance trend", o);
}

// ---------------------------------------------------------------------------
// 5: latency trend
// ---------------------------------------------------------------------------

void latency_trend() {
  std::vector<std::string> problems;
  GeneratorSpec spec;
  spec.seed = 5;
  spec.hot_tier_index = 2;
  // Cross-region mean far above intra-region mean.
  spec.intra_region_ms = 2.0;
  spec.near_region_ms = 12.0;
  spec.far_region_ms = 60.0;
  const auto s = share(generate(spec));
  RunConfig config;
  config.seed = 11;
  std::string p99s;
  for (SolverKind solver : {SolverKind::kLocal, SolverKind::kOptimal}) {
    const double timeout = solver == SolverKind::kLocal ? 30.0 : 1.0;
    const auto no = eval_latency_cell(s, config, Variant::kNoCnst, solver, timeout).p99_ms;
    const auto w = eval_latency_cell(s, config, Variant::kWCnst, solver, timeout).p99_ms;
    const auto manual = eval_latency_cell(s, config, Variant::kManualCnst, solver, timeout).p99_ms;
    p99s += fmt("%s p99 no/manual/w = %lld/%lld/%lld ms; ", to_string(solver),
                static_cast<long long>(no), static_cast<long long>(manual), static_cast<long long>(w));
    if (!(no >= manual && manual >= w - 1)) problems.push_back(std::string(to_string(solver)) + " p99 order");
  }

  // Mean solve time over 20 seeded runs of the default balancer.
  double sum_no = 0.0, sum_w = 0.0;
  const int runs = 20;
  for (int seed = 1; seed <= runs; ++seed) {
    GeneratorSpec g = spec;
    g.seed = 100 + seed;
    const auto inst = share(generate(g));
    RunConfig c;
    c.seed = seed;
    sum_no += eval_latency_cell(inst, c, Variant::kNoCnst, SolverKind::kLocal, 30.0).solve_elapsed_s;
    sum_w += eval_latency_cell(inst, c, Variant::kWCnst, SolverKind::kLocal, 30.0).solve_elapsed_s;
  }
  const double mean_no = sum_no / runs, mean_w = sum_w / runs;
  if (!(mean_w >= mean_no)) problems.push_back("mean solve_elapsed(w_cnst) < mean solve_elapsed(no_cnst)");

  Outcome o;
  o.pass = problems.empty();
  o.detail = p99s + fmt("mean solve_elapsed over %d runs no_cnst %.6fs w_cnst %.6fs", runs, mean_no, mean_w);
  if (!problems.empty()) o.detail += "; " + problems.front();
  report(5, "latency trend", o);
}

// ---------------------------------------------------------------------------
// 6: hierarchy protocol
// ---------------------------------------------------------------------------

bool avoid_growth_monotone(const CoopTrace& trace) {
  std::size_t size = 0;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const std::size_t next = size + trace.iterations[i].avoid_added.size();
    const bool final = i + 1 == trace.iterations.size();
    if (!final && next <= size) return false;
    size = next;
  }
  return size == trace.avoid.size();
}

void hierarchy_protocol() {
  std::vector<std::string> problems;

  // Always-reject policy on a generated instance.
  GeneratorSpec spec;
  spec.seed = 9;
  spec.hot_tier_index = 1;
  const auto s = share(generate(spec));
  RunConfig config;
  config.timeout_s = 60.0;
  config.max_hierarchy_iterations = 8;
  RegionPolicy reject_all;
  reject_all.acceptable.assign(s->app_count(), {"no-such-region"});
  const auto stubborn = cooperate(compile(s, config), config, reject_all, HostPool::from_snapshot(*s));
  if (static_cast<int>(stubborn.iterations.size()) > config.max_hierarchy_iterations) {
    problems.push_back("always-reject exceeded the iteration cap");
  }
  if (stubborn.outcome == CoopOutcome::kIterationLimit && stubborn.final.status != SolveStatus::kUnresolved) {
    problems.push_back("always-reject fallback not unresolved");
  }
  if (!avoid_growth_monotone(stubborn)) problems.push_back("always-reject avoid growth not monotone");

  // Two tiers in disjoint regions; x may not leave its region.
  const auto fixture = share(Snapshot(
      {make_tier("t1", 100, 100, 100, {3}, {{"rA", 5}}), make_tier("t2", 100, 100, 100, {3}, {{"rB", 5}})},
      {make_app("x", 40, 1, 1, "t1", 3, 1, "rA"), make_app("y", 30, 1, 1, "t1", 3, 1, "rB"),
       make_app("z", 5, 1, 1, "t1", 3, 1, "rA")}));
  RunConfig fc;
  fc.move_budget_fraction = 0.34;
  fc.timeout_s = 10.0;
  const auto trace =
      cooperate(compile(fixture, fc), fc, RegionPolicy::derive(*fixture, 30.0), HostPool::from_snapshot(*fixture));
  if (!trace.acknowledged()) problems.push_back("fixture not acknowledged");
  if (trace.iterations.size() > 2) problems.push_back("fixture took more than 2 iterations");
  if (trace.iterations.empty() || trace.iterations[0].region_rejections.empty()) {
    problems.push_back("fixture first proposal was not rejected");
  }
  if (trace.final.mapping.size() != 3 || trace.final.mapping[0] == 1) {
    problems.push_back("fixture final mapping uses the rejected pair");
  }
  if (!avoid_growth_monotone(trace)) problems.push_back("fixture avoid growth not monotone");

  // Ordinary policies over a generated family.
  int acknowledged = 0;
  for (int seed = 1; seed <= 10; ++seed) {
    GeneratorSpec g;
    g.seed = 50 + seed;
    g.hot_tier_index = seed % 5;
    g.region_layout = RegionLayout::kRing;
    const auto inst = share(generate(g));
    RunConfig c;
    c.timeout_s = 30.0;
    c.seed = seed;
    const auto t = cooperate(compile(inst, c), c, RegionPolicy::derive(*inst, 15.0), HostPool::from_snapshot(*inst));
    acknowledged += t.acknowledged();
    if (static_cast<int>(t.iterations.size()) > c.max_hierarchy_iterations) {
      problems.push_back(fmt("seed %d exceeded the iteration cap", seed));
    }
    if (!avoid_growth_monotone(t)) problems.push_back(fmt("seed %d avoid growth not monotone", seed));
  }

  Outcome o;
  o.pass = problems.empty();
  o.detail = fmt("always-reject stopped after %zu/%d iterations (%s); fixture %s in %zu iterations; "
                 "%d/10 generated runs acknowledged",
                 stubborn.iterations.size(), config.max_hierarchy_iterations, to_string(stubborn.outcome),
                 to_string(trace.outcome), trace.iterations.size(), acknowledged);
  if (!problems.empty()) o.detail += "; " + problems.front();
  report(6, "hierarchy protocol", o);
}

// ---------------------------------------------------------------------------
// 7: byte-identical reports
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / "sptlb_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = SPTLB_CLI_PATH;
  const std::string sample = std::string(SPTLB_DATA_DIR) + "/sample_5tier.json";
  struct Command {
    std::string name;
    std::string args;
    std::vector<std::string> outputs;
  };
  const std::vector<Command> commands{
      {"balance", "balance --snapshot " + sample + " --solver local --timeout 30 --seed 3 --out {}/sol.json",
       {"sol.json"}},
      {"eval-balance", "eval-balance --snapshot " + sample + " --timeout 30 --seed 3 --out-prefix {}/bal",
       {"bal.csv", "bal.json"}},
      {"eval-latency",
       "eval-latency --snapshot " + sample +
           " --variants no_cnst,w_cnst,manual_cnst --solvers local --timeouts 30 --seed 3 --out-prefix {}/lat",
       {"lat.csv", "lat.json"}},
  };
  const int reps = 10;
  int differing = 0, errors = 0;
  for (const auto& cmd : commands) {
    std::vector<std::string> first;
    for (int rep = 0; rep < reps; ++rep) {
      const fs::path out = dir / (cmd.name + "_" + std::to_string(rep));
      fs::create_directories(out);
      std::string args = cmd.args;
      for (auto pos = args.find("{}"); pos != std::string::npos; pos = args.find("{}")) {
        args.replace(pos, 2, out.string());
      }
      const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
      if (status == -1 || WEXITSTATUS(status) != 0) ++errors;
      std::vector<std::string> files;
      for (const auto& f : cmd.outputs) files.push_back(slurp(out / f));
      if (rep == 0) {
        first = files;
        for (const auto& f : files) errors += f.empty();
      } else if (files != first) {
        ++differing;
      }
    }
  }
  fs::remove_all(dir);
  Outcome o;
  o.pass = differing == 0 && errors == 0;
  o.detail = fmt("%d repetitions x %zu commands, %d differing, %d failed runs", reps, commands.size(),
                 differing, errors);
  report(7, "determinism", o);
}

// ---------------------------------------------------------------------------
// 8: scale
// ---------------------------------------------------------------------------

void scale() {
  GeneratorSpec spec;
  spec.tier_count = 5;
  spec.app_count = 1000;
  spec.hot_tier_index = 2;
  spec.heterogeneous = true;
  spec.seed = 8;
  const auto s = share(generate(spec));
  RunConfig config;
  config.timeout_s = 30.0;
  const Problem problem = compile(s, config);
  const auto start = Clock::now();
  const Solution sol = solve_local(problem, config);
  const double wall = seconds_since(start);

  OracleRules rules;
  rules.budget = 100;
  const bool feasible = sol.ok() && oracle_feasible(*s, sol.mapping, rules);
  std::vector<double> crit;
  for (const auto& app : s->apps()) crit.push_back(app.criticality_score);
  rules.critical_threshold = oracle_median(crit);
  std::vector<std::size_t> identity;
  for (std::size_t a = 0; a < s->app_count(); ++a) identity.push_back(home_of(*s, a));
  const bool improving = oracle_compare(oracle_score(*s, sol.mapping, rules), oracle_score(*s, identity, rules)) < 0;

  Outcome o;
  o.pass = wall <= 30.0 && feasible && improving;
  o.detail = fmt("5 tiers x 1000 apps: %.2fs wall (limit 30s), %s, %zu moves, feasible %s, improving %s",
                 wall, to_string(sol.terminated_by), sol.moves.size(), feasible ? "yes" : "no",
                 improving ? "yes" : "no");
  report(8, "scale", o);
}

}  // namespace

int main() {
  const Outcome budget = soundness_and_budget();
  oracle_optimality();
  report(3, "movement budget", budget);
  balance_trend();
  latency_trend();
  hierarchy_protocol();
  determinism();
  scale();
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
