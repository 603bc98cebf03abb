#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "freewheel/corridor.hpp"

using namespace freewheel;

namespace {

const VehicleParams kP{};
const EngineParams kE{};

// Piecewise-constant reference from (length [m], speed [km/h]) pieces.
DrivingCycle piecewise(std::initializer_list<std::pair<double, double>> pieces, double grade = 0.0) {
  DrivingCycle c;
  c.delta_s = 15.0;
  double s = 0.0, end = 0.0;
  std::vector<std::pair<double, double>> bounds;
  for (auto [len, kmh] : pieces) {
    end += len;
    bounds.emplace_back(end, kmh_to_mps(kmh));
  }
  std::size_t piece = 0;
  while (s <= end + 1e-9) {
    while (piece + 1 < bounds.size() && s >= bounds[piece].first) ++piece;
    c.samples.push_back({s, grade, bounds[piece].second});
    s += c.delta_s;
  }
  return c;
}

// Independent evaluation of the printed deceleration fits, Horner form in v2.
double mean_decel_ref(double v1, double v2) {
  return (0.366 + v1 * (0.0771 - 0.00185 * v1)) + v2 * ((-0.0849 + 0.00348 * v1) + v2 * -0.00214);
}
double std_decel_ref(double v1, double v2) {
  return (0.187 + v1 * (0.0250 - 0.000734 * v1)) + v2 * ((-0.0327 + 0.00187 * v1) + v2 * -0.00101);
}

}  // namespace

TEST(DecelerationFits, PrintedValues) {
  EXPECT_NEAR(mean_decel(20, 0), 1.168, 1e-12);
  EXPECT_NEAR(std_decel(20, 0), 0.3934, 1e-12);
  EXPECT_NEAR(mean_decel(20, 20), 0.006, 1e-12);
  EXPECT_NEAR(std_decel(0, 0), 0.187, 1e-15);
  for (double v1 : {5.0, 12.5, 22.2})
    for (double v2 : {0.0, 3.0, 4.9}) {
      EXPECT_NEAR(mean_decel(v1, v2), mean_decel_ref(v1, v2), 1e-12);
      EXPECT_NEAR(std_decel(v1, v2), std_decel_ref(v1, v2), 1e-12);
    }
}

TEST(Corridor, ConstantSpeedIsReferencePlusMinusDeltaV) {
  const auto c = piecewise({{3000.0, 60.0}});
  const auto set = CorridorSettings::benchmark();
  const auto vc = build_corridor(c, set, kP);
  ASSERT_EQ(vc.size(), c.size());
  for (std::size_t k = 0; k < vc.size(); ++k) {
    EXPECT_NEAR(vc.v_l[k], kmh_to_mps(59.0), 1e-12);
    EXPECT_NEAR(vc.v_u[k], kmh_to_mps(61.0), 1e-12);
    EXPECT_NEAR(vc.K_l[k], 0.5 * kP.m * vc.v_l[k] * vc.v_l[k], 1e-6);
  }
}

TEST(Corridor, RampLengthsOfSingleDrop) {
  auto set = CorridorSettings::wide();
  const auto c = piecewise({{2000.0, 70.0}, {2000.0, 50.0}});
  const auto vc = build_corridor(c, set, kP);
  const double v1 = kmh_to_mps(70.0), v2 = kmh_to_mps(50.0), dv = set.delta_v;
  const double mu = mean_decel(v1, v2), sigma = std_decel(v1, v2);
  const double d_hard = mu + set.n_sigma * sigma, d_soft = mu - set.n_sigma * sigma;
  // Closed-form ramp lengths: (v_start^2 - v_end^2) / (2 d).
  const double L_u = ((v1 + dv) * (v1 + dv) - (v2 + dv) * (v2 + dv)) / (2.0 * d_hard);
  const double L_l = ((v1 - dv) * (v1 - dv) - (v2 - dv) * (v2 - dv)) / (2.0 * d_soft);
  EXPECT_GT(L_l, L_u);

  std::size_t drop = 0;
  while (c[drop].v_ref == c[0].v_ref) ++drop;
  const double s0 = c[drop].s;
  auto ramp_start = [&](const std::vector<double>& v, double level) {
    std::size_t k = 0;
    while (v[k] >= level - 1e-12) ++k;
    return s0 - c[k].s;
  };
  EXPECT_NEAR(ramp_start(vc.v_u, v1 + dv), L_u, c.delta_s);
  EXPECT_NEAR(ramp_start(vc.v_l, v1 - dv), L_l, c.delta_s);
  EXPECT_NEAR(vc.v_u[drop], v2 + dv, 1e-12);
  EXPECT_NEAR(vc.v_l[drop], v2 - dv, 1e-12);
  // Inside the ramps the bound follows v^2 = v_end^2 + 2 d (s0 - s).
  for (std::size_t k = 0; k < drop; ++k) {
    const double dist = s0 - c[k].s;
    if (dist < L_u) EXPECT_NEAR(vc.v_u[k], std::sqrt((v2 + dv) * (v2 + dv) + 2.0 * d_hard * dist), 1e-9);
    if (dist < L_l) EXPECT_NEAR(vc.v_l[k], std::sqrt((v2 - dv) * (v2 - dv) + 2.0 * d_soft * dist), 1e-9);
  }
}

TEST(Corridor, ZeroSigmaGivesEqualRampSlopes) {
  auto set = CorridorSettings::wide();
  set.n_sigma = 0.0;
  const auto c = piecewise({{2000.0, 80.0}, {2000.0, 30.0}});
  const auto vc = build_corridor(c, set, kP);
  for (std::size_t k = 0; k < vc.size(); ++k) {
    // Same deceleration on both bounds keeps v_u^2 - v_l^2 at its end value, so
    // the width in speed shrinks like v_end / v.
    const double w = vc.v_u[k] - vc.v_l[k];
    EXPECT_LE(w, 2.0 * set.delta_v + 1e-9);
    EXPECT_GT(w, 0.25 * 2.0 * set.delta_v);
  }
}

TEST(Corridor, AccelerationRamps) {
  const auto set = CorridorSettings::wide();
  const auto c = piecewise({{1000.0, 30.0}, {3000.0, 70.0}});
  const auto vc = build_corridor(c, set, kP);
  std::size_t rise = 0;
  while (c[rise].v_ref == c[0].v_ref) ++rise;
  const double v1 = kmh_to_mps(30.0), dv = set.delta_v;
  for (std::size_t k = rise; k < rise + 20; ++k) {
    const double dist = c[k].s - c[rise].s;
    EXPECT_NEAR(vc.v_u[k], std::min(c[k].v_ref + dv, std::sqrt((v1 + dv) * (v1 + dv) + 2.0 * set.a_u * dist)), 1e-9);
    EXPECT_NEAR(vc.v_l[k], std::min(c[k].v_ref - dv, std::sqrt((v1 - dv) * (v1 - dv) + 2.0 * set.a_l * dist)), 1e-9);
  }
}

TEST(Corridor, ReferenceInsideAwayFromTransitions) {
  const auto c = piecewise({{2500.0, 50.0}, {2500.0, 70.0}, {2500.0, 40.0}});
  for (const auto& set : {CorridorSettings::benchmark(), CorridorSettings::wide()}) {
    const auto vc = build_corridor(c, set, kP);
    for (std::size_t k = 0; k < vc.size(); ++k) {
      EXPECT_LE(vc.v_l[k], vc.v_u[k]);
      const double s = c[k].s;
      const bool far = std::abs(s - 2500.0) > 1200.0 && std::abs(s - 5000.0) > 1200.0;
      if (!far) continue;
      EXPECT_LE(vc.v_l[k], c[k].v_ref);
      EXPECT_GE(vc.v_u[k], c[k].v_ref);
    }
  }
}

TEST(Corridor, TranslationInvariant) {
  SyntheticCycleSpec spec;
  spec.length_m = 4000.0;
  const auto c = generate_synthetic_cycle(8, spec);
  auto shifted = c;
  for (auto& x : shifted.samples) x.s += 1234.5;
  const auto set = CorridorSettings::wide();
  const auto a = build_corridor(c, set, kP), b = build_corridor(shifted, set, kP);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_NEAR(a.v_l[k], b.v_l[k], 1e-9);
    EXPECT_NEAR(a.v_u[k], b.v_u[k], 1e-9);
  }
}

TEST(Corridor, CollapseIsReported) {
  auto set = CorridorSettings::benchmark();
  set.min_speed = 30.0;
  EXPECT_THROW(build_corridor(piecewise({{500.0, 50.0}}), set, kP), CorridorCollapseError);
}

TEST(Corridor, SettingsValidation) {
  auto set = CorridorSettings::wide();
  set.a_u = set.a_l;
  EXPECT_THROW(set.validate(), ConfigError);
  set = CorridorSettings::wide();
  set.delta_v = -1.0;
  EXPECT_THROW(set.validate(), ConfigError);
}

TEST(Repair, FlatGenerousPowerUnchanged) {
  const auto c = piecewise({{1500.0, 50.0}, {1500.0, 70.0}});
  const auto set = CorridorSettings::wide();
  const auto vc = build_corridor(c, set, kP);
  const auto fixed = repair_feasibility(vc, c, kP, kE, set);
  for (std::size_t k = 0; k < vc.size(); ++k) EXPECT_EQ(fixed.v_l[k], vc.v_l[k]);
}

TEST(Repair, SteepClimbDipsToSteadyStateSpeed) {
  const auto c = piecewise({{3000.0, 80.0}}, 0.043);
  const auto set = CorridorSettings::benchmark();
  const auto vc = build_corridor(c, set, kP);
  const auto fixed = repair_feasibility(vc, c, kP, kE, set);
  EXPECT_LT(fixed.v_l.back(), c[0].v_ref - set.delta_v - 0.05);

  // Steady state: available power equals road load plus engine drag.
  const double alpha = slope_from_grade(0.043);
  const double P = set.repair_power_fraction * kP.P_max - drag_power(kE.omega_c, kE);
  const double road = kP.m * kP.g * (std::sin(alpha) + kP.c_r * std::cos(alpha));
  const double air = 0.5 * kP.rho * kP.A_f * kP.c_d;
  double lo = 1.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double v = 0.5 * (lo + hi);
    (v * (road + air * v * v) > P ? hi : lo) = v;
  }
  EXPECT_NEAR(fixed.v_l.back(), lo, 0.02);
}

TEST(Repair, IdempotentAndReachable) {
  const auto set = CorridorSettings::wide();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SyntheticCycleSpec spec;
    spec.length_m = 5000.0;
    const auto c = generate_synthetic_cycle(seed, spec);
    const auto vc = repair_feasibility(build_corridor(c, set, kP), c, kP, kE, set);
    const auto again = repair_feasibility(vc, c, kP, kE, set);
    for (std::size_t k = 0; k < vc.size(); ++k) EXPECT_EQ(again.v_l[k], vc.v_l[k]);
    // Full power from the lower bound reaches the next lower bound.
    for (std::size_t k = 1; k < vc.size(); ++k) {
      const double v0 = vc.v_l[k - 1];
      ControlInput u{std::min(kP.F_t_max, set.repair_power_fraction * kP.P_max / v0), 0.0, true};
      const auto next = plant_step({0.0, energy_from_speed(v0, kP.m)}, u, slope_from_grade(c[k - 1].grade),
                                   c.delta_s, kP, kE);
      EXPECT_GE(speed_from_energy(next.K, kP.m), vc.v_l[k] - 1e-9);
    }
  }
}

TEST(Corridor, CsvHeader) {
  const auto c = piecewise({{300.0, 50.0}});
  std::ostringstream os;
  write_corridor(os, build_corridor(c, CorridorSettings::wide(), kP));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "s_m,v_l_mps,v_u_mps");
}
