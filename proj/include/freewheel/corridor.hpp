#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "freewheel/cycle.hpp"
#include "freewheel/error.hpp"
#include "freewheel/params.hpp"
#include "freewheel/vehicle_model.hpp"

namespace freewheel {

/// Width settings of the velocity corridor.
struct CorridorSettings {
  double delta_v = kmh_to_mps(4.0);  ///< half-width at constant reference speed [m/s]
  double n_sigma = 1.0;              ///< standard-deviation multiplier during decelerations
  double a_l = 0.25;                 ///< lower-bound acceleration [m/s^2]
  double a_u = 0.6;                  ///< upper-bound acceleration [m/s^2]

  double min_sigma = 0.01;               ///< floor on the deceleration standard deviation [m/s^2]
  double min_decel = 0.05;               ///< floor on any ramp deceleration [m/s^2]
  double min_speed = 0.5;                ///< floor on the lower bound [m/s]
  double repair_power_fraction = 0.97;   ///< share of P_max assumed by the feasibility repair

  static CorridorSettings benchmark() {
    CorridorSettings s;
    s.delta_v = kmh_to_mps(1.0);
    s.n_sigma = 0.5;
    s.a_l = 0.3;
    s.a_u = 0.4;
    return s;
  }

  static CorridorSettings wide() { return CorridorSettings{}; }

  void validate() const {
    if (!(delta_v >= 0.0)) throw ConfigError("corridor delta_v must be >= 0");
    if (!(n_sigma >= 0.0)) throw ConfigError("corridor n_sigma must be >= 0");
    if (!(a_l > 0.0) || !(a_u > a_l)) throw ConfigError("corridor accelerations must satisfy 0 < a_l < a_u");
    if (!(min_sigma > 0.0) || !(min_decel > 0.0) || !(min_speed > 0.0))
      throw ConfigError("corridor floors must be positive");
    if (!(repair_power_fraction > 0.0) || repair_power_fraction > 1.0)
      throw ConfigError("corridor repair_power_fraction must lie in (0, 1]");
  }
};

/// Lower and upper speed bounds per cycle sample, with matching kinetic energies.
struct VelocityCorridor {
  std::vector<double> s;
  std::vector<double> v_l;
  std::vector<double> v_u;
  std::vector<double> K_l;
  std::vector<double> K_u;

  std::size_t size() const { return s.size(); }

  void update_energies(double m) {
    K_l.resize(v_l.size());
    K_u.resize(v_u.size());
    for (std::size_t k = 0; k < v_l.size(); ++k) {
      K_l[k] = energy_from_speed(v_l[k], m);
      K_u[k] = energy_from_speed(v_u[k], m);
    }
  }
};

/// Mean deceleration [m/s^2] of heavy vehicles slowing from v1 to v2 [m/s].
inline double mean_decel(double v1, double v2) {
  return 0.366 + 0.0771 * v1 - 0.0849 * v2 - 0.00185 * v1 * v1 + 0.00348 * v1 * v2 - 0.00214 * v2 * v2;
}

/// Standard deviation [m/s^2] of the same deceleration population.
inline double std_decel(double v1, double v2) {
  return 0.187 + 0.0250 * v1 - 0.0327 * v2 - 0.000734 * v1 * v1 + 0.00187 * v1 * v2 - 0.00101 * v2 * v2;
}

/// Builds v_l / v_u around the reference.
///
/// Constant stretches get v_ref -/+ delta_v. A reference drop at s0 is preceded
/// by ramps that reach the new level exactly at s0: the upper bound uses the
/// harder deceleration d_mu + n_sigma * Sigma and the lower bound the gentler
/// d_mu - n_sigma * Sigma, so the lower bound leaves earlier and the corridor
/// opens during the manoeuvre. A reference rise at s0 is followed by ramps at
/// a_u (upper) and a_l (lower). Overlapping ramps combine by pointwise minimum.
inline VelocityCorridor build_corridor(const DrivingCycle& c, const CorridorSettings& set, const VehicleParams& p) {
  c.validate();
  set.validate();
  const std::size_t n = c.size();
  VelocityCorridor vc;
  vc.s.resize(n);
  vc.v_l.resize(n);
  vc.v_u.resize(n);
  double v_top = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    vc.s[k] = c[k].s;
    vc.v_l[k] = c[k].v_ref - set.delta_v;
    vc.v_u[k] = c[k].v_ref + set.delta_v;
    v_top = std::max(v_top, vc.v_u[k]);
  }

  auto ramp = [](double v_anchor, double accel, double distance) {
    const double v0 = std::max(0.0, v_anchor);
    return std::sqrt(v0 * v0 + 2.0 * accel * distance);
  };

  for (std::size_t i = 1; i < n; ++i) {
    const double v1 = c[i - 1].v_ref;
    const double v2 = c[i].v_ref;
    if (v1 == v2) continue;
    const double s0 = c[i].s;
    if (v2 < v1) {
      const double mu = mean_decel(v1, v2);
      const double sigma = std::max(std_decel(v1, v2), set.min_sigma);
      const double d_l = std::max(mu - set.n_sigma * sigma, set.min_decel);
      const double d_u = std::max(mu + set.n_sigma * sigma, d_l);
      for (std::size_t k = i; k-- > 0;) {
        const double dist = s0 - c[k].s;
        const double up = ramp(v2 + set.delta_v, d_u, dist);
        const double lo = ramp(v2 - set.delta_v, d_l, dist);
        vc.v_u[k] = std::min(vc.v_u[k], up);
        vc.v_l[k] = std::min(vc.v_l[k], lo);
        if (up >= v_top && lo >= v_top) break;
      }
    } else {
      for (std::size_t k = i; k < n; ++k) {
        const double dist = c[k].s - s0;
        const double up = ramp(v1 + set.delta_v, set.a_u, dist);
        const double lo = ramp(v1 - set.delta_v, set.a_l, dist);
        vc.v_u[k] = std::min(vc.v_u[k], up);
        vc.v_l[k] = std::min(vc.v_l[k], lo);
        if (up >= v_top && lo >= v_top) break;
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    vc.v_l[k] = std::max(vc.v_l[k], set.min_speed);
    if (vc.v_l[k] > vc.v_u[k])
      throw CorridorCollapseError(k, "velocity corridor collapsed at s = " + std::to_string(vc.s[k]) + " m");
  }
  vc.update_energies(p.m);
  return vc;
}

/// Lowers v_l wherever a vehicle at full tractive power, starting on the lower
/// bound of the previous sample, could not reach it on the local grade.
inline VelocityCorridor repair_feasibility(const VelocityCorridor& vc, const DrivingCycle& c, const VehicleParams& p,
                                           const EngineParams& e, const CorridorSettings& set = {}) {
  if (vc.size() != c.size()) throw ConfigError("corridor and cycle lengths differ");
  VelocityCorridor out = vc;
  for (std::size_t k = 1; k < out.size(); ++k) {
    const double v_prev = out.v_l[k - 1];
    const KineticState x{c[k - 1].s, energy_from_speed(v_prev, p.m)};
    ControlInput u;
    u.z = true;
    u.F_t = std::min(p.F_t_max, set.repair_power_fraction * p.P_max / v_prev);
    double v_reach = set.min_speed;
    try {
      const auto next = plant_step(x, u, slope_from_grade(c[k - 1].grade), c.delta_s, p, e);
      v_reach = std::max(set.min_speed, speed_from_energy(next.K, p.m));
    } catch (const VehicleStoppedError&) {
    }
    out.v_l[k] = std::min(out.v_l[k], v_reach);
  }
  out.update_energies(p.m);
  return out;
}

inline void write_corridor(std::ostream& out, const VelocityCorridor& vc) {
  out << "s_m,v_l_mps,v_u_mps\n";
  for (std::size_t k = 0; k < vc.size(); ++k)
    out << detail::format_double(vc.s[k]) << ',' << detail::format_double(vc.v_l[k]) << ','
        << detail::format_double(vc.v_u[k]) << '\n';
}

inline void save_corridor(const std::string& path, const VelocityCorridor& vc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write corridor file '" + path + "'");
  write_corridor(out, vc);
}

}  // namespace freewheel
