#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "freewheel/error.hpp"
#include "freewheel/mpc.hpp"
#include "freewheel/params.hpp"

namespace freewheel {

/// Energy losses of a closed-loop run, all non-negative [J].
struct LossBreakdown {
  double roll = 0.0;
  double air = 0.0;
  double brake = 0.0;
  double engine_drag = 0.0;
  double idling = 0.0;
  double gear_change = 0.0;
  double total = 0.0;
  double trip_time = 0.0;  ///< [s]

  // Reported separately so the balance can be checked.
  double traction = 0.0;      ///< wheel work of the tractive force
  double gravity_work = 0.0;  ///< work of gravity, positive downhill
  double delta_K = 0.0;       ///< final minus initial kinetic energy
  double energy_input = 0.0;  ///< traction + idling + gear_change

  /// energy_input - (delta_K + total - gravity_work); zero up to roundoff.
  double closure_error() const { return energy_input - (delta_K + total - gravity_work); }
};

inline LossBreakdown decompose(const SimulationRecord& rec, const EngineParams& e) {
  LossBreakdown b;
  const double idle_power = drag_power(rec.omega_o, e);
  std::size_t changes = 0;
  for (const StepRecord& st : rec.steps) {
    b.roll += std::abs(st.work.roll);
    b.air += std::abs(st.work.air);
    b.brake += std::abs(st.work.brake);
    b.engine_drag += std::abs(st.work.engine_drag);
    if (!st.z) b.idling += idle_power * st.dt;
    if (st.gear_change) ++changes;
    b.trip_time += st.dt;
    b.traction += st.work.traction;
    b.gravity_work += st.work.gravity;
  }
  b.gear_change = rec.beta_g * static_cast<double>(changes);
  b.total = b.roll + b.air + b.brake + b.engine_drag + b.idling + b.gear_change;
  if (!rec.steps.empty()) b.delta_K = rec.final_state.K - rec.steps.front().K;
  b.energy_input = b.traction + b.idling + b.gear_change;
  return b;
}

struct PolicyResult {
  Policy policy = Policy::benchmark;
  double beta_t = 0.0;
  LossBreakdown losses;
  double energy_pct = 100.0;  ///< total losses relative to the benchmark
  double time_pct = 100.0;    ///< trip time relative to the benchmark
};

struct PolicyComparison {
  std::vector<PolicyResult> rows;

  const PolicyResult& at(Policy p) const {
    for (const auto& r : rows)
      if (r.policy == p) return r;
    throw ConfigError("policy " + std::string(policy_name(p)) + " missing from comparison");
  }
};

/// Normalizes total losses and trip times to the benchmark run (first record
/// with the benchmark policy, otherwise the first record).
inline PolicyComparison compare_policies(std::span<const SimulationRecord> records, const EngineParams& e) {
  if (records.empty()) throw ConfigError("no records to compare");
  PolicyComparison cmp;
  std::size_t ref = 0;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].policy == Policy::benchmark) {
      ref = i;
      break;
    }
  const LossBreakdown base = decompose(records[ref], e);
  if (!(base.total > 0.0) || !(base.trip_time > 0.0)) throw ConfigError("benchmark run has no losses or no duration");
  for (const auto& rec : records) {
    PolicyResult r;
    r.policy = rec.policy;
    r.beta_t = rec.beta_t;
    r.losses = decompose(rec, e);
    r.energy_pct = 100.0 * r.losses.total / base.total;
    r.time_pct = 100.0 * r.losses.trip_time / base.trip_time;
    cmp.rows.push_back(r);
  }
  return cmp;
}

namespace detail {
inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}
inline std::string pad(std::string s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}
}  // namespace detail

/// Aligned text table: energy and time rows, then losses per category in MJ and %.
inline void write_comparison_text(std::ostream& out, const PolicyComparison& cmp) {
  using detail::fixed;
  using detail::pad;
  const std::size_t w = 16;
  out << pad("", 14, true);
  for (const auto& r : cmp.rows) out << pad(std::string(policy_name(r.policy)), w);
  out << '\n';
  auto row = [&](const char* name, auto value, int dec) {
    out << pad(name, 14, true);
    for (const auto& r : cmp.rows) out << pad(fixed(value(r), dec), w);
    out << '\n';
  };
  row("Energy [%]", [](const PolicyResult& r) { return r.energy_pct; }, 1);
  row("Time [%]", [](const PolicyResult& r) { return r.time_pct; }, 1);
  row("Trip time [s]", [](const PolicyResult& r) { return r.losses.trip_time; }, 1);
  row("beta_t [W]", [](const PolicyResult& r) { return r.beta_t; }, 0);
  out << '\n';
  struct Cat {
    const char* name;
    double LossBreakdown::*field;
  };
  const Cat cats[] = {{"Roll", &LossBreakdown::roll},           {"Air", &LossBreakdown::air},
                      {"Brake", &LossBreakdown::brake},         {"Engine drag", &LossBreakdown::engine_drag},
                      {"Idling", &LossBreakdown::idling},       {"Gear change", &LossBreakdown::gear_change},
                      {"Total", &LossBreakdown::total}};
  out << "Losses [MJ]\n";
  for (const Cat& c : cats) row(c.name, [&](const PolicyResult& r) { return r.losses.*c.field / 1e6; }, 3);
  out << "Losses [%]\n";
  for (const Cat& c : cats)
    row(c.name, [&](const PolicyResult& r) { return 100.0 * r.losses.*c.field / r.losses.total; }, 1);
}

/// One key=value pair per line, keys prefixed by the policy name.
inline void write_losses_kv(std::ostream& out, const LossBreakdown& b, const std::string& prefix = "") {
  using detail::format_double;
  out << prefix << "roll_J=" << format_double(b.roll) << '\n'
      << prefix << "air_J=" << format_double(b.air) << '\n'
      << prefix << "brake_J=" << format_double(b.brake) << '\n'
      << prefix << "engine_drag_J=" << format_double(b.engine_drag) << '\n'
      << prefix << "idling_J=" << format_double(b.idling) << '\n'
      << prefix << "gear_change_J=" << format_double(b.gear_change) << '\n'
      << prefix << "total_J=" << format_double(b.total) << '\n'
      << prefix << "trip_time_s=" << format_double(b.trip_time) << '\n'
      << prefix << "traction_J=" << format_double(b.traction) << '\n'
      << prefix << "gravity_work_J=" << format_double(b.gravity_work) << '\n'
      << prefix << "delta_K_J=" << format_double(b.delta_K) << '\n'
      << prefix << "energy_input_J=" << format_double(b.energy_input) << '\n';
}

inline void write_comparison_kv(std::ostream& out, const PolicyComparison& cmp) {
  using detail::format_double;
  for (const auto& r : cmp.rows) {
    const std::string prefix = std::string(policy_name(r.policy)) + ".";
    out << prefix << "energy_pct=" << format_double(r.energy_pct) << '\n'
        << prefix << "time_pct=" << format_double(r.time_pct) << '\n'
        << prefix << "beta_t_W=" << format_double(r.beta_t) << '\n';
    write_losses_kv(out, r.losses, prefix);
  }
}

/// Single-run loss report as aligned text.
inline void write_losses_text(std::ostream& out, const LossBreakdown& b) {
  using detail::fixed;
  using detail::pad;
  auto line = [&](const char* name, double J) {
    out << pad(name, 14, true) << pad(fixed(J / 1e6, 4), 12) << " MJ"
        << pad(b.total > 0.0 ? fixed(100.0 * J / b.total, 1) : "-", 8) << " %\n";
  };
  line("Roll", b.roll);
  line("Air", b.air);
  line("Brake", b.brake);
  line("Engine drag", b.engine_drag);
  line("Idling", b.idling);
  line("Gear change", b.gear_change);
  line("Total", b.total);
  out << pad("Trip time", 14, true) << pad(fixed(b.trip_time, 2), 12) << " s\n";
  out << pad("Traction", 14, true) << pad(fixed(b.traction / 1e6, 4), 12) << " MJ\n";
  out << pad("Gravity work", 14, true) << pad(fixed(b.gravity_work / 1e6, 4), 12) << " MJ\n";
  out << pad("Delta K", 14, true) << pad(fixed(b.delta_K / 1e6, 4), 12) << " MJ\n";
}

}  // namespace freewheel
