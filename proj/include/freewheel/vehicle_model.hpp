#pragma once

#include <cmath>
#include <numbers>

#include "freewheel/error.hpp"
#include "freewheel/params.hpp"

namespace freewheel {

/// Longitudinal state in the space domain.
struct KineticState {
  double s = 0.0;  ///< position [m]
  double K = 0.0;  ///< kinetic energy [J]
};

/// Applied controls over one spatial step.
struct ControlInput {
  double F_t = 0.0;  ///< tractive force [N], 0 <= F_t <= F_t_max * z
  double F_b = 0.0;  ///< brake force [N], -F_b_max <= F_b <= 0
  bool z = true;     ///< powertrain closed
};

inline double speed_from_energy(double K, double m) { return std::sqrt(2.0 * K / m); }
inline double energy_from_speed(double v, double m) { return 0.5 * m * v * v; }

/// Road slope angle from a rise-over-run grade.
inline double slope_from_grade(double grade) { return std::atan(grade); }

/// Air resistance, linear in kinetic energy.
inline double air_force(double K, const VehicleParams& p) { return -p.rho * p.A_f * p.c_d * K / p.m; }

inline double roll_force(double alpha, const VehicleParams& p) { return -p.m * p.g * p.c_r * std::cos(alpha); }

/// Negative uphill, positive downhill.
inline double gravity_force(double alpha, const VehicleParams& p) { return -p.m * p.g * std::sin(alpha); }

inline double drag_torque(double omega, const EngineParams& e) { return e.T_d0 + e.T_d1 * omega; }

/// Engine drag power w * T_d(w) [W]. Zero for a stopped engine.
inline double drag_power(double omega, const EngineParams& e) { return omega * drag_torque(omega, e); }

/// Engine drag referred to the wheels: w T_d(w) sqrt(m/2) K^(-1/2).
inline double drag_force_exact(double K, double omega, const VehicleParams& p, const EngineParams& e) {
  if (!(K > 0.0)) throw ConfigError("drag_force_exact requires K > 0");
  return drag_power(omega, e) * std::sqrt(p.m / 2.0) / std::sqrt(K);
}

/// Coefficient of K in dK/ds, i.e. -rho A_f c_d / m.
inline double air_coefficient(const VehicleParams& p) { return -p.rho * p.A_f * p.c_d / p.m; }

/// Exact one-step solution of dK/ds = a K + F for piecewise-constant F:
/// K_next = A K + B F + w, with the road load folded into w.
struct StepDiscretization {
  double A = 1.0;
  double B = 0.0;
  double w = 0.0;
};

inline StepDiscretization discretize(double alpha, double delta_s, const VehicleParams& p) {
  if (!(delta_s > 0.0)) throw ConfigError("discretize requires delta_s > 0");
  const double a = air_coefficient(p);
  StepDiscretization d;
  d.A = std::exp(a * delta_s);
  // expm1 keeps B accurate as a -> 0, where B -> delta_s.
  d.B = (a == 0.0) ? delta_s : std::expm1(a * delta_s) / a;
  d.w = -d.B * p.m * p.g * (std::sin(alpha) + p.c_r * std::cos(alpha));
  return d;
}

/// Integral of K(s) over one step of the exact solution, given the
/// constant total force F acting besides air drag.
inline double step_energy_integral(double K0, double F, double delta_s, double a) {
  const double x = a * delta_s;
  const double B = (a == 0.0) ? delta_s : std::expm1(x) / a;
  double tail;  // (B - delta_s) / a
  if (std::abs(x) < 1e-3) {
    const double ds2 = delta_s * delta_s;
    tail = ds2 / 2.0 * (1.0 + x / 3.0 + x * x / 12.0 + x * x * x / 60.0);
  } else {
    tail = (B - delta_s) / a;
  }
  return B * K0 + F * tail;
}

/// Work done by each force over one plant step [J], signed as in the dynamics
/// (resistances negative). Sum of all terms equals K_next - K.
struct StepWork {
  double traction = 0.0;
  double engine_drag = 0.0;
  double brake = 0.0;
  double air = 0.0;
  double roll = 0.0;
  double gravity = 0.0;

  double total() const { return traction + engine_drag + brake + air + roll + gravity; }
};

struct PlantStepResult {
  KineticState next;
  StepWork work;
  double drag_force = 0.0;  ///< closed-powertrain drag applied over the step [N]
};

/// Advances the nonlinear plant one spatial step.
///
/// Engine drag uses the exact K^(-1/2) law frozen at the step's initial K; air
/// drag is integrated exactly.
inline PlantStepResult plant_advance(const KineticState& x, const ControlInput& u, double alpha, double delta_s,
                                     const VehicleParams& p, const EngineParams& e) {
  if (!(x.K > 0.0)) throw VehicleStoppedError("plant_step requires K > 0");
  const double ft_tol = 1e-6 * p.F_t_max;
  const double fb_tol = 1e-6 * p.F_b_max;
  if (u.F_t < -ft_tol || u.F_t > (u.z ? p.F_t_max : 0.0) + ft_tol)
    throw ConfigError("tractive force outside [0, F_t_max * z]");
  if (u.F_b > fb_tol || u.F_b < -p.F_b_max - fb_tol) throw ConfigError("brake force outside [-F_b_max, 0]");

  const StepDiscretization d = discretize(alpha, delta_s, p);
  const double f_drag = u.z ? drag_force_exact(x.K, e.omega_c, p, e) : 0.0;
  const double f_applied = u.F_t - f_drag + u.F_b;
  const double f_road = roll_force(alpha, p) + gravity_force(alpha, p);

  PlantStepResult r;
  r.drag_force = f_drag;
  r.next.s = x.s + delta_s;
  r.next.K = d.A * x.K + d.B * f_applied + d.w;
  if (!(r.next.K > 0.0))
    throw VehicleStoppedError("vehicle stopped at s = " + std::to_string(r.next.s) + " m");

  const double a = air_coefficient(p);
  r.work.traction = u.F_t * delta_s;
  r.work.engine_drag = -f_drag * delta_s;
  r.work.brake = u.F_b * delta_s;
  r.work.roll = roll_force(alpha, p) * delta_s;
  r.work.gravity = gravity_force(alpha, p) * delta_s;
  r.work.air = a * step_energy_integral(x.K, f_applied + f_road, delta_s, a);
  return r;
}

inline KineticState plant_step(const KineticState& x, const ControlInput& u, double alpha, double delta_s,
                               const VehicleParams& p, const EngineParams& e) {
  return plant_advance(x, u, alpha, delta_s, p, e).next;
}

/// Travel time over a step of length delta_s at kinetic energy K.
inline double step_time(double K, double delta_s, double m) { return delta_s * std::sqrt(m / 2.0) / std::sqrt(K); }

}  // namespace freewheel
