#pragma once

#include <numbers>
#include <string>

#include "freewheel/error.hpp"

namespace freewheel {

inline constexpr double rpm_to_rad_per_s(double rpm) { return rpm * 2.0 * std::numbers::pi / 60.0; }
inline constexpr double kmh_to_mps(double kmh) { return kmh / 3.6; }
inline constexpr double mps_to_kmh(double mps) { return mps * 3.6; }

/// Physical constants of the vehicle and its environment (SI units).
///
/// Table values for a 26 t distribution truck. The force and power limits are
/// not published with the model and default to plausible heavy-duty values.
struct VehicleParams {
  double m = 26000.0;        ///< mass [kg]
  double r_w = 0.5;          ///< wheel radius [m], carried for completeness
  double c_d = 0.5;          ///< air drag coefficient [-]
  double rho = 1.292;        ///< air density [kg/m^3]
  double A_f = 10.0;         ///< frontal area [m^2]
  double c_r = 0.006;        ///< rolling resistance coefficient [-]
  double g = 9.81;           ///< gravitational acceleration [m/s^2]
  double F_t_max = 50.0e3;   ///< maximum tractive force [N]
  double F_b_max = 150.0e3;  ///< maximum brake force [N]
  double P_max = 300.0e3;    ///< maximum tractive power [W]

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("vehicle parameter ") + name + " must be > 0");
    };
    positive(m, "m");
    positive(r_w, "r_w");
    positive(c_d, "c_d");
    positive(rho, "rho");
    positive(A_f, "A_f");
    positive(c_r, "c_r");
    positive(g, "g");
    positive(F_t_max, "F_t_max");
    positive(F_b_max, "F_b_max");
    positive(P_max, "P_max");
    if (!(c_r < 0.1)) throw ConfigError("vehicle parameter c_r must be < 0.1");
    if (!(c_d < 2.0)) throw ConfigError("vehicle parameter c_d must be < 2");
  }
};

/// Engine speeds and the linear drag-torque model T_d(w) = T_d0 + T_d1 * w.
///
/// T_d0 and T_d1 default to typical heavy-duty diesel magnitudes; they are
/// inputs, not fitted here.
struct EngineParams {
  double omega_c = rpm_to_rad_per_s(1100.0);  ///< engine speed, powertrain closed [rad/s]
  double omega_o = rpm_to_rad_per_s(500.0);   ///< engine speed, powertrain open [rad/s]
  double T_d0 = 20.0;                         ///< constant drag torque [N m]
  double T_d1 = 0.12;                         ///< linear drag coefficient [N m s/rad]
  double J_e = 4.0;                           ///< engine inertia [kg m^2]

  void validate() const {
    if (!(omega_o >= 0.0)) throw ConfigError("engine parameter omega_o must be >= 0");
    if (!(omega_c > omega_o)) throw ConfigError("engine parameter omega_c must exceed omega_o");
    if (!(T_d0 >= 0.0)) throw ConfigError("engine parameter T_d0 must be >= 0");
    if (!(T_d1 >= 0.0)) throw ConfigError("engine parameter T_d1 must be >= 0");
    if (!(J_e > 0.0)) throw ConfigError("engine parameter J_e must be > 0");
  }
};

}  // namespace freewheel
