// Command-line front end: simulate, compare, gen-cycle, export-corridor.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

#include "freewheel/accounting.hpp"
#include "freewheel/config.hpp"

namespace fs = std::filesystem;
using namespace freewheel;

namespace {

enum Exit { ok = 0, internal = 1, config_error = 2, infeasible = 3, solver_limit = 4 };

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string cycle_path;
  std::string out;
  bool verbose = false;
};

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const auto& s : o.overrides) apply_override(cfg, s, "--set");
  if (!o.cycle_path.empty()) cfg.cycle_path = o.cycle_path;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

DrivingCycle load_run_cycle(const RunConfig& cfg) {
  if (cfg.cycle_path.empty()) throw ConfigError("no cycle given (use --cycle or the 'cycle' key)");
  if (!fs::exists(cfg.cycle_path)) throw ConfigError("cycle file not found: '" + cfg.cycle_path + "'");
  return load_cycle(cfg.cycle_path, cfg.mpc.delta_s);
}

void make_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir + "'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

std::function<void(const std::string&)> stderr_log(bool verbose, const std::string& prefix) {
  if (!verbose) return {};
  static std::mutex mu;
  return [prefix](const std::string& line) {
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << prefix << line << '\n';
  };
}

template <class F>
int guarded(F&& body) {
  try {
    body();
    return Exit::ok;
  } catch (const UnachievableTargetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::infeasible;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::infeasible;
  } catch (const CorridorCollapseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::infeasible;
  } catch (const VehicleStoppedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::infeasible;
  } catch (const SolverLimitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::solver_limit;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::config_error;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return Exit::internal;
  }
}

void cmd_simulate(const CommonOptions& o, const std::string& policy_text, const std::optional<double>& beta_t) {
  const Policy policy = parse_policy(policy_text);
  RunConfig cfg = resolve_config(o);
  if (beta_t) cfg.mpc.beta_t = *beta_t;
  cfg.validate();
  const DrivingCycle c = load_run_cycle(cfg);
  make_out_dir(cfg.out_dir);
  const fs::path dir(cfg.out_dir);

  const VelocityCorridor vc = corridor_for(cfg, policy, c);
  MpcConfig mc = cfg.mpc_for(policy);
  mc.log = stderr_log(o.verbose, std::string(policy_name(policy)) + ": ");
  const SimulationRecord rec = run_mpc(c, vc, cfg.vehicle, cfg.engine, mc);
  const LossBreakdown losses = decompose(rec, cfg.engine);

  auto traj = open_out(dir / "trajectory.csv");
  write_trajectory(traj, rec, cfg.vehicle.m);
  auto corr = open_out(dir / "corridor.csv");
  write_corridor(corr, vc);
  auto txt = open_out(dir / "losses.txt");
  txt << "policy " << policy_name(policy) << ", beta_t " << detail::format_double(rec.beta_t) << " W\n";
  write_losses_text(txt, losses);
  auto kv = open_out(dir / "losses.kv");
  write_losses_kv(kv, losses);
  auto man = open_out(dir / "manifest.txt");
  write_manifest(man, cfg, "simulate",
                 {{"policy", std::string(policy_name(policy))},
                  {"cycle_hash", file_hash(cfg.cycle_path)},
                  {"limited_steps", std::to_string(rec.limited_steps)},
                  {"total_nodes", std::to_string(rec.total_nodes)}});

  std::cout << policy_name(policy) << ": trip time " << detail::fixed(losses.trip_time, 1) << " s, losses "
            << detail::fixed(losses.total / 1e6, 3) << " MJ, " << rec.gear_changes() << " gear changes\n";
}

void cmd_compare(const CommonOptions& o) {
  RunConfig cfg = resolve_config(o);
  const DrivingCycle c = load_run_cycle(cfg);
  make_out_dir(cfg.out_dir);
  const fs::path dir(cfg.out_dir);

  std::vector<VelocityCorridor> corridors;
  for (Policy p : kAllPolicies) corridors.push_back(corridor_for(cfg, p, c));

  auto mpc_for = [&](Policy p) {
    MpcConfig mc = cfg.mpc_for(p);
    mc.log = stderr_log(o.verbose, std::string(policy_name(p)) + ": ");
    return mc;
  };

  std::vector<SimulationRecord> records(4);
  records[0] = run_mpc(c, corridors[0], cfg.vehicle, cfg.engine, mpc_for(Policy::benchmark));
  const double target = records[0].trip_time();
  std::cout << "benchmark: trip time " << detail::fixed(target, 1) << " s\n";

  // The three tuned policies are independent; run up to `workers` at a time.
  auto tune = [&](std::size_t i) {
    const Policy p = kAllPolicies[i];
    TuneResult r = tune_beta_t(target, c, corridors[i], cfg.vehicle, cfg.engine, mpc_for(p), cfg.tune);
    return r;
  };
  std::vector<TuneResult> tuned(4);
  for (std::size_t first = 1; first < 4; first += static_cast<std::size_t>(cfg.workers)) {
    const std::size_t last = std::min<std::size_t>(4, first + static_cast<std::size_t>(cfg.workers));
    std::vector<std::future<TuneResult>> jobs;
    for (std::size_t i = first; i < last; ++i)
      jobs.push_back(std::async(cfg.workers > 1 ? std::launch::async : std::launch::deferred, tune, i));
    for (std::size_t i = first; i < last; ++i) tuned[i] = jobs[i - first].get();
  }
  for (std::size_t i = 1; i < 4; ++i) {
    records[i] = std::move(tuned[i].record);
    std::cout << policy_name(kAllPolicies[i]) << ": beta_t " << detail::fixed(tuned[i].beta_t, 0) << " W, trip time "
              << detail::fixed(tuned[i].trip_time, 1) << " s after " << tuned[i].evaluations << " runs\n";
    if (std::abs(tuned[i].trip_time - target) > cfg.tune.rel_tol * target)
      std::cerr << "warning: " << policy_name(kAllPolicies[i]) << " trip time misses the target by more than "
                << cfg.tune.rel_tol * 100.0 << " % after " << tuned[i].evaluations << " runs\n";
  }

  const PolicyComparison cmp = compare_policies(records, cfg.engine);
  auto txt = open_out(dir / "comparison.txt");
  write_comparison_text(txt, cmp);
  auto kv = open_out(dir / "comparison.kv");
  write_comparison_kv(kv, cmp);
  std::vector<std::pair<std::string, std::string>> extra{{"cycle_hash", file_hash(cfg.cycle_path)}};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string name(policy_name(kAllPolicies[i]));
    auto traj = open_out(dir / ("trajectory_" + name + ".csv"));
    write_trajectory(traj, records[i], cfg.vehicle.m);
    auto corr = open_out(dir / ("corridor_" + name + ".csv"));
    write_corridor(corr, corridors[i]);
    extra.emplace_back(name + ".beta_t", detail::format_double(records[i].beta_t));
  }
  auto man = open_out(dir / "manifest.txt");
  write_manifest(man, cfg, "compare", extra);
  write_comparison_text(std::cout, cmp);
}

void cmd_gen_cycle(const CommonOptions& o, std::uint64_t seed, double length_km, const std::string& path) {
  RunConfig cfg = resolve_config(o);
  cfg.seed = seed;
  cfg.generator.length_m = length_km * 1000.0;
  cfg.generator.delta_s = cfg.mpc.delta_s;
  const DrivingCycle c = generate_synthetic_cycle(seed, cfg.generator);
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) make_out_dir(parent.string());
  save_cycle(path, c);
  std::cout << "wrote " << c.size() << " samples to " << path << '\n';
}

void cmd_export_corridor(const CommonOptions& o, const std::string& policy_text, const std::string& path) {
  const Policy policy = parse_policy(policy_text);
  const RunConfig cfg = resolve_config(o);
  const DrivingCycle c = load_run_cycle(cfg);
  const VelocityCorridor vc = corridor_for(cfg, policy, c);
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) make_out_dir(parent.string());
  save_corridor(path, vc);
  std::cout << "wrote " << vc.size() << " corridor samples to " << path << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Look-ahead freewheeling MPC for heavy-duty vehicles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kLibraryVersion));

  CommonOptions common;
  auto add_common = [&](CLI::App* sub, bool with_cycle, bool with_out) {
    sub->add_option("--config", common.config_path, "Flat key = value configuration file");
    sub->add_option("--set", common.overrides, "Override one key, e.g. --set mpc.beta_t=5000")->take_all();
    if (with_cycle) sub->add_option("--cycle", common.cycle_path, "Cycle CSV (s_m,grade,v_ref_mps)");
    if (with_out) sub->add_option("--out", common.out, "Output directory");
    sub->add_flag("-v,--verbose", common.verbose, "Log every horizon solve to stderr");
  };

  std::string policy;
  std::optional<double> beta_t;
  auto* sim = app.add_subcommand("simulate", "Closed-loop run of one policy");
  add_common(sim, true, true);
  sim->add_option("--policy", policy, "benchmark, no-freewheel, freewheel-idle or freewheel-off")->required();
  sim->add_option("--beta-t", beta_t, "Time penalty [W], overrides mpc.beta_t");

  auto* cmp = app.add_subcommand("compare", "Four-policy comparison at equal trip time");
  add_common(cmp, true, true);

  std::uint64_t seed = 1;
  double length_km = 8.0;
  std::string cycle_out;
  auto* gen = app.add_subcommand("gen-cycle", "Write a synthetic driving cycle");
  add_common(gen, false, false);
  gen->add_option("--seed", seed, "Generator seed")->required();
  gen->add_option("--length", length_km, "Cycle length [km]")->required()->check(CLI::PositiveNumber);
  gen->add_option("--out", cycle_out, "Output CSV path")->required();

  std::string corridor_out;
  auto* exp = app.add_subcommand("export-corridor", "Write the velocity corridor of a policy");
  add_common(exp, true, false);
  exp->add_option("--policy", policy, "Policy whose corridor settings apply")->required();
  exp->add_option("--out", corridor_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? Exit::ok : Exit::config_error;
  }

  if (sim->parsed()) return guarded([&] { cmd_simulate(common, policy, beta_t); });
  if (cmp->parsed()) return guarded([&] { cmd_compare(common); });
  if (gen->parsed()) return guarded([&] { cmd_gen_cycle(common, seed, length_km, cycle_out); });
  if (exp->parsed()) return guarded([&] { cmd_export_corridor(common, policy, corridor_out); });
  return Exit::config_error;
}
