#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>

#include "freewheel/ocp.hpp"
#include "oracles/pattern_enumeration.hpp"
#include "support/instances.hpp"

using namespace freewheel;

namespace {

const VehicleParams kP{};
const EngineParams kE{};

// Scalar-loop evaluation of the horizon cost from first principles.
double reference_cost(const OcpInstance& inst, const VectorXd& x, const std::vector<double>& K_r, const PolicyConfig& pc,
                      double beta_t) {
  const double root = std::sqrt(kP.m / 2.0);
  const double ds = inst.delta_s;
  const double w_o = pc.omega_o;
  const double idle_power = w_o * (kE.T_d0 + kE.T_d1 * w_o);
  const double bg = pc.freewheeling ? 0.25 * kE.J_e * (kE.omega_c * kE.omega_c - w_o * w_o) : 0.0;
  double J = 0.0;
  for (int j = 0; j < inst.horizon; ++j) {
    const double Kr = K_r[j];
    const double K = x[inst.K(j)];
    const double inv_v_ref = root / std::sqrt(Kr);
    J += ds * x[inst.F_t(j)];
    J += ds * idle_power * inv_v_ref * (1.0 - x[inst.z(j)]);
    J += bg * x[inst.delta(j)];
    const double t0 = 15.0 / 8.0 * root * std::pow(Kr, -0.5);
    const double t1 = -10.0 / 8.0 * root * std::pow(Kr, -1.5);
    const double t2 = 3.0 / 8.0 * root * std::pow(Kr, -2.5);
    J += beta_t * ds * (t0 + t1 * K + t2 * K * K);
  }
  return J - x[inst.K(inst.horizon)];
}

double drag_taylor(const OcpInstance& inst, int j, double K) {
  const double root = std::sqrt(kP.m / 2.0);
  const double Kr = inst.K_r[j];
  const double w = kE.omega_c;
  return w * (kE.T_d0 + kE.T_d1 * w) * root * (1.5 / std::sqrt(Kr) - 0.5 * K * std::pow(Kr, -1.5));
}

OcpInstance build(const fixture::HorizonCase& h, Policy id, DragLinearization drag = DragLinearization::mccormick) {
  OcpOptions opt;
  opt.beta_t = h.beta_t;
  opt.drag = drag;
  return build_instance(h.K_init, h.z_prev, h.hz, h.K_r, kP, kE, PolicyConfig::make(id, kE), opt);
}

}  // namespace

TEST(BetaG, RotationalEnergyGap) {
  EXPECT_NEAR(beta_g(kE), 0.25 * 4.0 * (std::pow(1100 * M_PI / 30, 2) - std::pow(500 * M_PI / 30, 2)), 1e-9);
  EXPECT_NEAR(beta_g(kE), 1.053e4, 5.0);
  EXPECT_NEAR(beta_g(kE, 0.0), 1.327e4, 5.0);
  EXPECT_EQ(beta_g(kE, kE.omega_c), 0.0);
}

TEST(Policies, ConfigurationPerPolicy) {
  const auto bench = PolicyConfig::make(Policy::benchmark, kE);
  EXPECT_FALSE(bench.freewheeling);
  EXPECT_EQ(bench.corridor.delta_v, CorridorSettings::benchmark().delta_v);
  const auto off = PolicyConfig::make(Policy::freewheel_off, kE);
  EXPECT_TRUE(off.freewheeling);
  EXPECT_EQ(off.omega_o, 0.0);
  EXPECT_EQ(PolicyConfig::make(Policy::freewheel_idle, kE).omega_o, kE.omega_o);
  EXPECT_EQ(PolicyConfig::make(Policy::no_freewheel, kE).corridor.delta_v, CorridorSettings::wide().delta_v);
  EXPECT_EQ(parse_policy("freewheel_idle"), Policy::freewheel_idle);
  try {
    parse_policy("freewheel-of");
    FAIL();
  } catch (const ConfigError& e) {
    for (Policy p : kAllPolicies) EXPECT_NE(std::string(e.what()).find(policy_name(p)), std::string::npos);
  }
}

TEST(Horizon, SixtyStepsSpanNineHundredMetres) {
  SyntheticCycleSpec spec;
  spec.length_m = 3000.0;
  const auto c = generate_synthetic_cycle(1, spec);
  const auto vc = build_corridor(c, CorridorSettings::wide(), kP);
  const auto h = make_horizon(c, vc, 0, 60);
  EXPECT_EQ(h.steps(), 60);
  EXPECT_DOUBLE_EQ(h.steps() * h.delta_s, 900.0);
  EXPECT_EQ(h.K_l.size(), 61u);
  // Truncation at the cycle end.
  const auto tail = make_horizon(c, vc, c.size() - 5, 60);
  EXPECT_EQ(tail.steps(), 4);
  EXPECT_THROW(make_horizon(c, vc, c.size() - 1, 60), ConfigError);
}

TEST(BuildInstance, NoFreewheelIsPureQp) {
  std::mt19937_64 rng(3);
  const auto h = fixture::random_horizon(rng, 12);
  const auto inst = build(h, Policy::no_freewheel);
  EXPECT_TRUE(inst.bool_idx.empty());
  for (int j = 0; j < inst.horizon; ++j) {
    EXPECT_EQ(inst.qp.lb[inst.z(j)], 1.0);
    EXPECT_EQ(inst.qp.ub[inst.z(j)], 1.0);
  }
  const auto sol = solve_qp(inst.qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  for (int j = 0; j < inst.horizon; ++j)
    EXPECT_NEAR(sol.x[inst.u(j)], drag_taylor(inst, j, sol.x[inst.K(j)]), 1e-6);
}

TEST(BuildInstance, CostMatchesScalarEvaluator) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto h = fixture::random_horizon(rng, 3 + trial % 12);
    const Policy id = kAllPolicies[trial % 4];
    for (auto drag : {DragLinearization::mccormick, DragLinearization::reference_frozen}) {
      const auto inst = build(h, id, drag);
      const auto pc = PolicyConfig::make(id, kE);
      // At the relaxed optimum, which is feasible.
      const auto sol = solve_qp(inst.qp);
      ASSERT_EQ(sol.status, QpStatus::optimal);
      const double ref = reference_cost(inst, sol.x, h.K_r, pc, h.beta_t);
      EXPECT_NEAR(inst.qp.objective(sol.x), ref, 1e-10 * std::abs(ref));
      // At an arbitrary point inside the bounds.
      VectorXd x(inst.qp.num_variables());
      for (int i = 0; i < x.size(); ++i) {
        const double lo = inst.qp.lb[i], hi = inst.qp.ub[i];
        x[i] = std::isfinite(lo) && std::isfinite(hi) ? lo + u01(rng) * (hi - lo) : 0.0;
      }
      const double ref2 = reference_cost(inst, x, h.K_r, pc, h.beta_t);
      EXPECT_NEAR(inst.qp.objective(x), ref2, 1e-10 * std::abs(ref2));
    }
  }
}

TEST(BuildInstance, CostMatrixIsPositiveSemidefinite) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = fixture::random_horizon(rng, 10);
    const auto inst = build(h, Policy::freewheel_idle);
    const Eigen::MatrixXd Q(inst.qp.Q);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Q);
    EXPECT_GE(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(BuildInstance, McCormickExactAtEveryPattern) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 4; ++trial) {
    auto h = fixture::random_horizon(rng, 6);
    h.beta_t = 1e4;
    const auto inst = build(h, trial % 2 ? Policy::freewheel_off : Policy::freewheel_idle);
    ASSERT_EQ(inst.bool_idx.size(), 6u);
    for (unsigned mask = 0; mask < 64; ++mask) {
      const auto sol = solve_qp(oracle::fix_pattern(inst.qp, inst.bool_idx, mask));
      if (sol.status != QpStatus::optimal) continue;
      int prev = h.z_prev ? 1 : 0;
      for (int j = 0; j < inst.horizon; ++j) {
        const int z = (mask >> j) & 1u;
        const double F_dc = drag_taylor(inst, j, sol.x[inst.K(j)]);
        EXPECT_NEAR(sol.x[inst.u(j)], z * F_dc, 1e-6);
        // delta_j equals the switch indicator.
        EXPECT_NEAR(sol.x[inst.delta(j)], std::abs(z - prev), 1e-7);
        prev = z;
      }
    }
  }
}

TEST(BuildInstance, PinnedCorridorRecoversInverseDynamics) {
  // Corridor collapsed onto a slowly accelerating trajectory.
  const int N = 8;
  HorizonSlice hz;
  hz.delta_s = 15.0;
  std::vector<double> K(N + 1);
  for (int j = 0; j <= N; ++j) K[j] = energy_from_speed(15.0 + 0.05 * j, kP.m);
  hz.alpha.assign(N, slope_from_grade(0.01));
  hz.K_l = K;
  hz.K_u = K;
  std::vector<double> K_r(K.begin(), K.begin() + N);
  const auto inst = build_instance(K[0], true, hz, K_r, kP, kE, PolicyConfig::make(Policy::no_freewheel, kE), {});
  const auto sol = solve_qp(inst.qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  const double a = -kP.rho * kP.A_f * kP.c_d / kP.m;
  const double A = std::exp(a * 15.0), B = (A - 1.0) / a;
  for (int j = 0; j < N; ++j) {
    // K_{j+1} = A K_j + B (F_t - F_dc + F_road), solved for F_t.
    const double road = -kP.m * kP.g * (std::sin(hz.alpha[j]) + kP.c_r * std::cos(hz.alpha[j]));
    const double F_t = (K[j + 1] - A * K[j]) / B - road + drag_taylor(inst, j, K[j]);
    EXPECT_NEAR(sol.x[inst.F_t(j)], F_t, 1e-6 * F_t);
    EXPECT_NEAR(sol.x[inst.F_b(j)], 0.0, 1e-6);
  }
}

TEST(BuildInstance, EmptyCorridorIsInfeasibleByConstruction) {
  std::mt19937_64 rng(7);
  auto h = fixture::random_horizon(rng, 5);
  std::swap(h.hz.K_l[3], h.hz.K_u[3]);
  EXPECT_THROW(build(h, Policy::freewheel_idle), InfeasibleError);
}

TEST(BuildInstance, InitialEnergyProjectedIntoCorridor) {
  std::mt19937_64 rng(8);
  auto h = fixture::random_horizon(rng, 5);
  h.K_init = 2.0 * h.hz.K_u[0];
  const auto inst = build(h, Policy::freewheel_idle);
  EXPECT_EQ(inst.K_init, h.hz.K_u[0]);
  EXPECT_EQ(inst.qp.lb[inst.K(0)], inst.qp.ub[inst.K(0)]);
}

TEST(BuildInstance, LinearizationModesAgreeNearReference) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto h = fixture::random_horizon(rng, 8);
    const auto mc = build(h, Policy::no_freewheel, DragLinearization::mccormick);
    const auto rf = build(h, Policy::no_freewheel, DragLinearization::reference_frozen);
    EXPECT_EQ(rf.qp.num_variables(), 8 * 5 + 1);
    const auto a = solve_qp(mc.qp), b = solve_qp(rf.qp);
    ASSERT_EQ(a.status, QpStatus::optimal);
    ASSERT_EQ(b.status, QpStatus::optimal);
    EXPECT_LT(std::abs(a.objective - b.objective), 0.01 * std::abs(a.objective));
  }
}

TEST(BuildInstance, TripletDump) {
  std::mt19937_64 rng(10);
  const auto h = fixture::random_horizon(rng, 3);
  const auto inst = build(h, Policy::freewheel_off);
  std::ostringstream os;
  write_instance(os, inst);
  std::istringstream in(os.str());
  std::string tag;
  int n = 0, me = 0, mi = 0;
  in >> tag >> n >> me >> mi;
  EXPECT_EQ(tag, "n");
  EXPECT_EQ(n, inst.qp.num_variables());
  EXPECT_EQ(me, inst.qp.E.rows());
  EXPECT_EQ(mi, inst.qp.G.rows());
  EXPECT_NE(os.str().find("bool "), std::string::npos);
}
