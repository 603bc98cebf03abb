#pragma once

#include <Eigen/Core>

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "freewheel/corridor.hpp"
#include "freewheel/cycle.hpp"
#include "freewheel/error.hpp"
#include "freewheel/mpc.hpp"
#include "freewheel/ocp.hpp"
#include "freewheel/params.hpp"

namespace freewheel {

inline constexpr std::string_view kLibraryVersion = "0.1.0";

/// Everything a CLI run depends on. Defaults reproduce the documented setup.
struct RunConfig {
  std::string cycle_path;
  std::string out_dir = ".";
  VehicleParams vehicle;
  EngineParams engine;
  CorridorSettings benchmark_corridor = CorridorSettings::benchmark();
  CorridorSettings wide_corridor = CorridorSettings::wide();
  bool repair_corridor = true;
  MpcConfig mpc = default_mpc();
  TuneSettings tune;
  SyntheticCycleSpec generator;
  std::uint64_t seed = 1;
  int workers = 1;

  static MpcConfig default_mpc() {
    MpcConfig m;
    m.beta_t = 2.0e4;
    return m;
  }

  void validate() const {
    vehicle.validate();
    engine.validate();
    benchmark_corridor.validate();
    wide_corridor.validate();
    mpc.validate();
    if (!(tune.rel_tol > 0.0)) throw ConfigError("tune.rel_tol must be > 0");
    if (tune.max_evaluations < 1) throw ConfigError("tune.max_evaluations must be >= 1");
    if (!(tune.initial_beta_t > 0.0)) throw ConfigError("tune.initial_beta_t must be > 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (mpc.limits.max_nodes < 1) throw ConfigError("solver.max_nodes must be >= 1");
  }

  /// Controller settings for one policy; beta_t is taken from mpc.beta_t.
  MpcConfig mpc_for(Policy id) const {
    MpcConfig m = mpc;
    m.policy = PolicyConfig::make(id, engine, benchmark_corridor, wide_corridor);
    return m;
  }
};

/// Corridor of a policy on a cycle, with the reachability repair if enabled.
inline VelocityCorridor corridor_for(const RunConfig& cfg, Policy id, const DrivingCycle& c) {
  const CorridorSettings& set = id == Policy::benchmark ? cfg.benchmark_corridor : cfg.wide_corridor;
  VelocityCorridor vc = build_corridor(c, set, cfg.vehicle);
  if (cfg.repair_corridor) vc = repair_feasibility(vc, c, cfg.vehicle, cfg.engine, set);
  return vc;
}

namespace config_detail {

enum class Unit { none, speed, angular_speed };

struct RealField {
  const char* key;
  Unit unit;
  double& (*ref)(RunConfig&);
};

#define FW_REAL(key, unit, member) \
  RealField { key, Unit::unit, [](RunConfig& c) -> double& { return c.member; } }

inline const std::vector<RealField>& real_fields() {
  static const std::vector<RealField> fields = {
      FW_REAL("vehicle.m", none, vehicle.m),
      FW_REAL("vehicle.r_w", none, vehicle.r_w),
      FW_REAL("vehicle.c_d", none, vehicle.c_d),
      FW_REAL("vehicle.rho", none, vehicle.rho),
      FW_REAL("vehicle.A_f", none, vehicle.A_f),
      FW_REAL("vehicle.c_r", none, vehicle.c_r),
      FW_REAL("vehicle.g", none, vehicle.g),
      FW_REAL("vehicle.F_t_max", none, vehicle.F_t_max),
      FW_REAL("vehicle.F_b_max", none, vehicle.F_b_max),
      FW_REAL("vehicle.P_max", none, vehicle.P_max),
      FW_REAL("engine.omega_c", angular_speed, engine.omega_c),
      FW_REAL("engine.omega_o", angular_speed, engine.omega_o),
      FW_REAL("engine.T_d0", none, engine.T_d0),
      FW_REAL("engine.T_d1", none, engine.T_d1),
      FW_REAL("engine.J_e", none, engine.J_e),
      FW_REAL("corridor.benchmark.delta_v", speed, benchmark_corridor.delta_v),
      FW_REAL("corridor.benchmark.n_sigma", none, benchmark_corridor.n_sigma),
      FW_REAL("corridor.benchmark.a_l", none, benchmark_corridor.a_l),
      FW_REAL("corridor.benchmark.a_u", none, benchmark_corridor.a_u),
      FW_REAL("corridor.benchmark.min_sigma", none, benchmark_corridor.min_sigma),
      FW_REAL("corridor.benchmark.min_decel", none, benchmark_corridor.min_decel),
      FW_REAL("corridor.benchmark.min_speed", speed, benchmark_corridor.min_speed),
      FW_REAL("corridor.benchmark.repair_power_fraction", none, benchmark_corridor.repair_power_fraction),
      FW_REAL("corridor.wide.delta_v", speed, wide_corridor.delta_v),
      FW_REAL("corridor.wide.n_sigma", none, wide_corridor.n_sigma),
      FW_REAL("corridor.wide.a_l", none, wide_corridor.a_l),
      FW_REAL("corridor.wide.a_u", none, wide_corridor.a_u),
      FW_REAL("corridor.wide.min_sigma", none, wide_corridor.min_sigma),
      FW_REAL("corridor.wide.min_decel", none, wide_corridor.min_decel),
      FW_REAL("corridor.wide.min_speed", speed, wide_corridor.min_speed),
      FW_REAL("corridor.wide.repair_power_fraction", none, wide_corridor.repair_power_fraction),
      FW_REAL("mpc.delta_s", none, mpc.delta_s),
      FW_REAL("mpc.beta_t", none, mpc.beta_t),
      FW_REAL("solver.abs_gap", none, mpc.limits.abs_gap),
      FW_REAL("solver.time_limit_s", none, mpc.limits.time_limit_s),
      FW_REAL("solver.integrality_tol", none, mpc.limits.integrality_tol),
      FW_REAL("solver.qp_tolerance", none, mpc.qp.tolerance),
      FW_REAL("tune.rel_tol", none, tune.rel_tol),
      FW_REAL("tune.initial_beta_t", none, tune.initial_beta_t),
      FW_REAL("generator.length", none, generator.length_m),
      FW_REAL("generator.grade_bound", none, generator.grade_bound),
      FW_REAL("generator.min_segment", none, generator.min_segment_m),
      FW_REAL("generator.max_segment", none, generator.max_segment_m),
      FW_REAL("generator.min_knot_spacing", none, generator.min_knot_spacing_m),
      FW_REAL("generator.max_knot_spacing", none, generator.max_knot_spacing_m),
  };
  return fields;
}

#undef FW_REAL

/// Splits "12.5 km/h" into number and suffix and converts to SI.
inline double parse_quantity(std::string_view text, Unit unit, std::string& err) {
  text = detail::trim(text);
  std::size_t cut = 0;
  while (cut < text.size() && (std::isdigit(static_cast<unsigned char>(text[cut])) || text[cut] == '.' ||
                               text[cut] == '-' || text[cut] == '+' || text[cut] == 'e' || text[cut] == 'E'))
    ++cut;
  // "inf" is the only word accepted as a number.
  if (text.substr(0, 3) == "inf") cut = 3;
  const std::string_view num = text.substr(0, cut);
  const std::string_view suffix = detail::trim(text.substr(cut));
  double v = 0.0;
  if (num == "inf") {
    v = std::numeric_limits<double>::infinity();
  } else if (!detail::parse_double(num, v)) {
    err = "expected a number, got '" + std::string(text) + "'";
    return 0.0;
  }
  if (suffix.empty()) return v;
  switch (unit) {
    case Unit::speed:
      if (suffix == "m/s") return v;
      if (suffix == "km/h") return kmh_to_mps(v);
      err = "unknown speed unit '" + std::string(suffix) + "' (use m/s or km/h)";
      return 0.0;
    case Unit::angular_speed:
      if (suffix == "rad/s") return v;
      if (suffix == "rpm") return rpm_to_rad_per_s(v);
      err = "unknown angular speed unit '" + std::string(suffix) + "' (use rad/s or rpm)";
      return 0.0;
    case Unit::none: break;
  }
  err = "unexpected unit suffix '" + std::string(suffix) + "'";
  return 0.0;
}

template <class Int>
inline bool parse_int(std::string_view s, Int& out) {
  s = detail::trim(s);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace config_detail

/// Sets one configuration key from its textual value.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value,
                             const std::string& source = "<override>", std::size_t line = 0) {
  using namespace config_detail;
  auto fail = [&](const std::string& what) -> void { throw ParseError(source, line, std::string(key) + ": " + what); };
  value = detail::trim(value);

  for (const RealField& f : real_fields()) {
    if (key != f.key) continue;
    std::string err;
    const double v = parse_quantity(value, f.unit, err);
    if (!err.empty()) fail(err);
    f.ref(cfg) = v;
    return;
  }
  auto int_value = [&](auto& out) {
    if (!parse_int(value, out)) fail("expected an integer, got '" + std::string(value) + "'");
  };
  if (key == "cycle") {
    cfg.cycle_path = std::string(value);
  } else if (key == "out") {
    cfg.out_dir = std::string(value);
  } else if (key == "seed") {
    int_value(cfg.seed);
  } else if (key == "workers") {
    int_value(cfg.workers);
  } else if (key == "mpc.N_H") {
    int_value(cfg.mpc.N_H);
  } else if (key == "mpc.sqp_passes") {
    int_value(cfg.mpc.sqp_passes);
  } else if (key == "mpc.drag") {
    if (value == "mccormick") cfg.mpc.drag = DragLinearization::mccormick;
    else if (value == "reference-frozen") cfg.mpc.drag = DragLinearization::reference_frozen;
    else fail("expected mccormick or reference-frozen");
  } else if (key == "solver.max_nodes") {
    int_value(cfg.mpc.limits.max_nodes);
  } else if (key == "tune.max_evaluations") {
    int_value(cfg.tune.max_evaluations);
  } else if (key == "corridor.repair") {
    if (value == "true" || value == "1") cfg.repair_corridor = true;
    else if (value == "false" || value == "0") cfg.repair_corridor = false;
    else fail("expected true or false");
  } else if (key == "generator.speeds") {
    // Comma-separated list with one optional unit suffix on the last entry.
    std::vector<double> speeds;
    const auto parts = detail::split(value, ',');
    std::string_view unit;
    const std::string_view last = detail::trim(parts.back());
    const std::size_t space = last.find_first_of(" \t");
    if (space != std::string_view::npos) unit = detail::trim(last.substr(space));
    for (std::size_t i = 0; i < parts.size(); ++i) {
      std::string_view item = detail::trim(parts[i]);
      if (i + 1 == parts.size() && space != std::string_view::npos) item = detail::trim(last.substr(0, space));
      double v = 0.0;
      if (!detail::parse_double(item, v)) fail("expected a list of speeds, got '" + std::string(value) + "'");
      speeds.push_back(v);
    }
    for (double& v : speeds) {
      if (unit.empty() || unit == "m/s") v = mps_to_kmh(v);
      else if (unit != "km/h") fail("unknown speed unit '" + std::string(unit) + "' (use m/s or km/h)");
    }
    cfg.generator.speeds_kmh = std::move(speeds);
  } else {
    fail("unknown configuration key");
  }
}

/// Applies "key=value" on top of cfg.
inline void apply_override(RunConfig& cfg, std::string_view assignment, const std::string& source = "<override>",
                           std::size_t line = 0) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ParseError(source, line, "expected key = value, got '" + std::string(assignment) + "'");
  set_config_value(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1), source, line);
}

/// Reads a flat key = value file on top of cfg. '#' starts a comment.
inline void read_config(std::istream& in, RunConfig& cfg, const std::string& source = "<config>") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const std::size_t hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    apply_override(cfg, view, source, line_no);
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  RunConfig cfg;
  read_config(in, cfg, path);
  return cfg;
}

/// Canonical SI dump of every key; reading it back reproduces cfg exactly.
inline void write_config(std::ostream& out, const RunConfig& cfg) {
  using namespace config_detail;
  using detail::format_double;
  RunConfig c = cfg;
  out << "cycle = " << c.cycle_path << '\n' << "out = " << c.out_dir << '\n';
  out << "seed = " << c.seed << '\n' << "workers = " << c.workers << '\n';
  for (const RealField& f : real_fields()) {
    const double v = f.ref(c);
    out << f.key << " = " << (std::isinf(v) ? std::string("inf") : format_double(v)) << '\n';
  }
  out << "mpc.N_H = " << c.mpc.N_H << '\n'
      << "mpc.sqp_passes = " << c.mpc.sqp_passes << '\n'
      << "mpc.drag = " << (c.mpc.drag == DragLinearization::mccormick ? "mccormick" : "reference-frozen") << '\n'
      << "solver.max_nodes = " << c.mpc.limits.max_nodes << '\n'
      << "tune.max_evaluations = " << c.tune.max_evaluations << '\n'
      << "corridor.repair = " << (c.repair_corridor ? "true" : "false") << '\n';
  out << "generator.speeds = ";
  for (std::size_t i = 0; i < c.generator.speeds_kmh.size(); ++i)
    out << (i ? "," : "") << format_double(c.generator.speeds_kmh[i]);
  out << " km/h\n";
}

/// Hash of the canonical dump, ignoring the input and output paths.
inline std::string config_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.cycle_path.clear();
  c.out_dir.clear();
  std::ostringstream os;
  write_config(os, c);
  return config_detail::fnv1a_hex(os.str());
}

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return config_detail::fnv1a_hex(os.str());
}

/// Reproducibility record: command, hashes, seed and versions as comment
/// lines, followed by the full config. The file loads back as a config.
/// Contains nothing time- or host-dependent.
inline void write_manifest(std::ostream& out, const RunConfig& cfg, std::string_view command,
                           const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  out << "# command = " << command << '\n'
      << "# config_hash = " << config_hash(cfg) << '\n'
      << "# seed = " << cfg.seed << '\n'
      << "# freewheel_version = " << kLibraryVersion << '\n'
      << "# eigen_version = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION
      << '\n'
#if defined(__clang__)
      << "# compiler = clang " << __clang_version__ << '\n'
#elif defined(__GNUC__)
      << "# compiler = gcc " << __VERSION__ << '\n'
#endif
      << "# cplusplus = " << __cplusplus << '\n';
  for (const auto& [k, v] : extra) out << "# " << k << " = " << v << '\n';
  write_config(out, cfg);
}

}  // namespace freewheel
