#pragma once

#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sptlb/evaluation.hpp"
#include "sptlb/generator.hpp"
#include "sptlb/hierarchy.hpp"
#include "sptlb/io.hpp"

namespace sptlb::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kInfeasible = 2,
  kInternal = 3,
};

namespace detail {

struct CommonFlags {
  std::string snapshot;
  std::string solver = "local";
  double timeout_s = 30.0;
  double move_budget = 0.10;
  std::string variant = "no_cnst";
  std::uint64_t seed = 0;
  double region_overlap = 0.5;
  std::optional<double> criticality_threshold;
  bool strict = false;
  bool record_timing = false;
  std::vector<std::string> avoid;

  void attach(CLI::App* cmd) {
    cmd->add_option("--snapshot", snapshot, "Snapshot file")->required();
    cmd->add_option("--solver", solver, "local|optimal|greedy_cpu|greedy_mem|greedy_tasks")
        ->capture_default_str();
    cmd->add_option("--timeout", timeout_s, "Solver timeout in seconds")->capture_default_str();
    cmd->add_option("--move-budget", move_budget, "Fraction of apps that may move")
        ->capture_default_str();
    cmd->add_option("--variant", variant, "no_cnst|w_cnst|manual_cnst")->capture_default_str();
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->add_option("--region-overlap", region_overlap, "w_cnst overlap threshold")
        ->capture_default_str();
    cmd->add_option("--criticality-threshold", criticality_threshold,
                    "High-criticality cutoff (default: median)");
    cmd->add_option("--avoid", avoid, "Forbidden placement app:tier (repeatable)");
    cmd->add_flag("--strict", strict, "Reject apps on tiers that do not support their SLO");
    cmd->add_flag("--record-timing", record_timing, "Include wall-clock fields in outputs");
  }

  RunConfig config() const {
    RunConfig c;
    c.solver = parse_solver(solver);
    c.timeout_s = timeout_s;
    c.move_budget_fraction = move_budget;
    c.variant = parse_variant(variant);
    c.seed = seed;
    c.region_overlap_threshold = region_overlap;
    c.criticality_threshold = criticality_threshold;
    c.validate();
    return c;
  }

  std::shared_ptr<const Snapshot> load() const {
    return std::make_shared<const Snapshot>(io::read_snapshot(snapshot, {strict}));
  }

  Problem problem(std::shared_ptr<const Snapshot> s, const RunConfig& c) const {
    Problem p = compile(std::move(s), c);
    for (const auto& pair : avoid) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) {
        throw ValidationError("--avoid", "expected app:tier, got '" + pair + "'");
      }
      p = add_avoid(p, pair.substr(0, colon), pair.substr(colon + 1));
    }
    return p;
  }
};

inline void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    io::write_file(path, content);
  }
}

}  // namespace detail

/// Runs one CLI command. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Multi-objective tier load balancer for stream-processing workloads", "sptlb"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic snapshot");
  GeneratorSpec spec;
  int hot_tier = 0;
  std::string layout = "grouped";
  std::string gen_out;
  gen->add_option("--tiers", spec.tier_count)->capture_default_str();
  gen->add_option("--apps", spec.app_count)->capture_default_str();
  gen->add_option("--regions", spec.region_count)->capture_default_str();
  gen->add_option("--hot-tier", hot_tier, "1-based tier number to overload (0: none)")
      ->capture_default_str();
  gen->add_option("--skew", spec.hot_skew, "Placement weight of the hot tier")->capture_default_str();
  gen->add_option("--base-util", spec.base_util)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();
  gen->add_option("--layout", layout, "grouped|ring")->capture_default_str();
  gen->add_flag("--heterogeneous", spec.heterogeneous, "Apps dominated by a single resource");
  bool no_latency = false;
  gen->add_flag("--no-latency", no_latency, "Omit the latency model");
  gen->add_option("--out", gen_out, "Output path (default: stdout)");

  // balance
  auto* bal = app.add_subcommand("balance", "Solve one balancing problem");
  detail::CommonFlags bal_flags;
  bal_flags.attach(bal);
  std::string bal_out;
  bal->add_option("--out", bal_out, "Solution file (default: stdout)");

  // cooperate
  auto* coop = app.add_subcommand("cooperate", "Run the region/host scheduler feedback loop");
  detail::CommonFlags coop_flags;
  coop_flags.attach(coop);
  int max_iterations = 20;
  double radius_ms = 30.0;
  std::string coop_out;
  coop->add_option("--max-iterations", max_iterations)->capture_default_str();
  coop->add_option("--radius-ms", radius_ms, "Acceptable-region latency radius")
      ->capture_default_str();
  coop->add_option("--out", coop_out, "Trace file (default: stdout)");

  // eval-balance
  auto* eb = app.add_subcommand("eval-balance", "Compare the balancer against greedy baselines");
  detail::CommonFlags eb_flags;
  eb_flags.attach(eb);
  std::string eb_prefix;
  eb->add_option("--out-prefix", eb_prefix, "Writes <prefix>.csv and <prefix>.json")->required();

  // eval-latency
  auto* el = app.add_subcommand("eval-latency", "Network latency p99 across integration variants");
  detail::CommonFlags el_flags;
  el_flags.attach(el);
  std::vector<std::string> variants{"no_cnst", "w_cnst", "manual_cnst"};
  std::vector<std::string> solvers{"local", "optimal"};
  std::vector<double> timeouts{30.0};
  std::int64_t manual_threshold = 20;
  int samples = kSamplesPerPair;
  int el_iterations = 20;
  std::string el_prefix;
  el->add_option("--variants", variants)->delimiter(',')->capture_default_str();
  el->add_option("--solvers", solvers)->delimiter(',')->capture_default_str();
  el->add_option("--timeouts", timeouts, "Solver timeouts in seconds")
      ->delimiter(',')
      ->capture_default_str();
  el->add_option("--manual-threshold-ms", manual_threshold)->capture_default_str();
  el->add_option("--samples", samples, "Samples per tier pair")->capture_default_str();
  el->add_option("--max-iterations", el_iterations, "manual_cnst re-solve rounds")
      ->capture_default_str();
  el->add_option("--out-prefix", el_prefix, "Writes <prefix>.csv and <prefix>.json")->required();

  // verify
  auto* ver = app.add_subcommand("verify", "Re-check a solution file against its snapshot");
  std::string ver_snapshot, ver_solution;
  bool ver_strict = false;
  ver->add_option("--snapshot", ver_snapshot)->required();
  ver->add_option("--solution", ver_solution)->required();
  ver->add_flag("--strict", ver_strict);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kValidation;
  }

  try {
    if (gen->parsed()) {
      if (hot_tier > 0) spec.hot_tier_index = hot_tier - 1;
      if (layout == "grouped") {
        spec.region_layout = RegionLayout::kGrouped;
      } else if (layout == "ring") {
        spec.region_layout = RegionLayout::kRing;
      } else {
        throw ValidationError("--layout", "expected grouped or ring");
      }
      spec.with_latency_model = !no_latency;
      detail::emit(gen_out, io::dump(io::to_json(generate(spec))), out);
      return kOk;
    }

    if (bal->parsed()) {
      const RunConfig config = bal_flags.config();
      const Problem problem = bal_flags.problem(bal_flags.load(), config);
      const Solution sol = solve(problem, config);
      detail::emit(bal_out, io::dump(io::to_json(problem, config, sol, bal_flags.record_timing)),
                   out);
      for (const auto& v : sol.violations) err << v.describe() << "\n";
      return sol.ok() ? kOk : kInfeasible;
    }

    if (coop->parsed()) {
      RunConfig config = coop_flags.config();
      config.max_hierarchy_iterations = max_iterations;
      config.latency_radius_ms = radius_ms;
      config.validate();
      const auto snapshot = coop_flags.load();
      const Problem problem = coop_flags.problem(snapshot, config);
      const RegionPolicy policy = RegionPolicy::derive(*snapshot, radius_ms);
      const CoopTrace trace =
          cooperate(problem, config, policy, HostPool::from_snapshot(*snapshot));
      detail::emit(coop_out,
                   io::dump(io::to_json(problem, config, trace, coop_flags.record_timing)), out);
      return trace.acknowledged() ? kOk : kInfeasible;
    }

    if (eb->parsed()) {
      const RunConfig config = eb_flags.config();
      const BalanceReport report = eval_balance(eb_flags.load(), config);
      io::write_file(eb_prefix + ".csv", io::balance_csv(report, eb_flags.record_timing));
      io::write_file(eb_prefix + ".json", io::dump(io::to_json(report, eb_flags.record_timing)));
      return kOk;
    }

    if (el->parsed()) {
      RunConfig config = el_flags.config();
      config.manual_latency_threshold_ms = manual_threshold;
      config.max_hierarchy_iterations = el_iterations;
      config.validate();
      LatencyMatrix matrix;
      matrix.variants.clear();
      matrix.solvers.clear();
      for (const auto& v : variants) matrix.variants.push_back(parse_variant(v));
      for (const auto& s : solvers) matrix.solvers.push_back(parse_solver(s));
      matrix.timeouts_s = timeouts;
      for (double t : timeouts) {
        if (!(t > 0.0)) throw ValidationError("--timeouts", "must be > 0");
      }
      if (samples < 1) throw ValidationError("--samples", "must be >= 1");
      matrix.samples_per_pair = samples;
      const auto snapshot = el_flags.load();
      const LatencyReport report = eval_latency(snapshot, config, matrix);
      io::write_file(el_prefix + ".csv", io::latency_csv(report, el_flags.record_timing));
      io::write_file(el_prefix + ".json",
                     io::dump(io::to_json(*snapshot, report, el_flags.record_timing)));
      return kOk;
    }

    if (ver->parsed()) {
      const auto snapshot =
          std::make_shared<const Snapshot>(io::read_snapshot(ver_snapshot, {ver_strict}));
      const io::SolutionFile file =
          io::solution_from_json(io::parse_json(io::read_file(ver_solution), ver_solution));
      const io::VerifyResult result = io::verify(snapshot, file);
      for (const auto& v : result.feasibility.violations) out << v.describe() << "\n";
      for (const auto& m : result.metric_mismatches) out << "metrics: " << m << "\n";
      if (result.ok()) out << "ok\n";
      return result.ok() ? kOk : kInfeasible;
    }
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kValidation;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const ModelIncompleteError& e) {
    err << "model error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace sptlb::cli
