#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "freewheel/bnb.hpp"
#include "oracles/pattern_enumeration.hpp"
#include "support/instances.hpp"

using namespace freewheel;

namespace {

const VehicleParams kP{};
const EngineParams kE{};

OcpInstance build(const fixture::HorizonCase& h, Policy id) {
  OcpOptions opt;
  opt.beta_t = h.beta_t;
  return build_instance(h.K_init, h.z_prev, h.hz, h.K_r, kP, kE, PolicyConfig::make(id, kE), opt);
}

// min (x0 - 0.6)^2 + (x1 - 0.3)^2 + x2^2 - x2, x0, x1 Boolean, x0 + x1 + x2 <= 1.5.
QpProblem toy() {
  QpProblem qp = make_qp(3);
  std::vector<Triplet> Q{{0, 0, 2.0}, {1, 1, 2.0}, {2, 2, 2.0}};
  qp.Q.setFromTriplets(Q.begin(), Q.end());
  qp.c << -1.2, -0.6, -1.0;
  qp.constant = 0.36 + 0.09;
  qp.G.resize(1, 3);
  std::vector<Triplet> G{{0, 0, 1.0}, {0, 1, 1.0}, {0, 2, 1.0}};
  qp.G.setFromTriplets(G.begin(), G.end());
  qp.h.resize(1);
  qp.h << 1.5;
  qp.lb << 0.0, 0.0, -10.0;
  qp.ub << 1.0, 1.0, 10.0;
  return qp;
}

}  // namespace

TEST(Bnb, ToyProblemByHand) {
  // x0 = 1, x1 = 0 leaves x2 <= 0.5 and x2 = 0.5 is the free optimum:
  // 0.16 + 0.09 - 0.25 = 0. Other patterns give 0.36 + 0.09 - 0.25 = 0.2,
  // 0.16 + 0.49 + 0 = 0.65 (x2 <= -0.5 => 0.25 + 0.5) and 0.36 + 0.49 - 0.25.
  const QpProblem qp = toy();
  const std::vector<int> b{0, 1};
  const auto rep = solve_miqp(qp, b);
  ASSERT_TRUE(rep.has_incumbent);
  EXPECT_EQ(rep.status, BnbStatus::optimal);
  EXPECT_NEAR(rep.incumbent.objective, 0.0, 1e-7);
  EXPECT_NEAR(rep.incumbent.x[0], 1.0, 1e-9);
  EXPECT_NEAR(rep.incumbent.x[1], 0.0, 1e-9);
  // Degenerate: the bound on x2 is active with a zero multiplier, so x2 is
  // only accurate to the square root of the objective tolerance.
  EXPECT_NEAR(rep.incumbent.x[2], 0.5, 1e-5);
  EXPECT_LE(rep.best_bound, rep.incumbent.objective + 1e-9);
}

TEST(Bnb, MatchesEnumerationOnTenStepHorizons) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    const auto h = fixture::random_horizon(rng, 10);
    const auto inst = build(h, trial % 2 ? Policy::freewheel_off : Policy::freewheel_idle);
    const auto ref = oracle::enumerate_patterns(inst.qp, inst.bool_idx);
    const auto rep = solve_miqp(inst);
    ASSERT_EQ(rep.has_incumbent, ref.feasible);
    if (!ref.feasible) continue;
    EXPECT_EQ(rep.status, BnbStatus::optimal);
    EXPECT_NEAR(rep.incumbent.objective, ref.objective, 1e-6 * std::max(1.0, std::abs(ref.objective)));
    EXPECT_LE(rep.best_bound, rep.incumbent.objective + 1e-9 * std::abs(ref.objective));
  }
}

TEST(Bnb, IncumbentIsIntegralAndFeasible) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 6; ++trial) {
    const auto h = fixture::random_horizon(rng, 20);
    const auto inst = build(h, Policy::freewheel_idle);
    const auto rep = solve_miqp(inst);
    ASSERT_TRUE(rep.has_incumbent);
    for (int i : inst.bool_idx) {
      const double v = rep.incumbent.x[i];
      EXPECT_LT(std::min(std::abs(v), std::abs(v - 1.0)), 1e-9);
    }
    EXPECT_LT(inst.qp.max_violation(rep.incumbent.x), 1e-6);
    // The incumbent's pattern reproduces its objective as a fixed QP.
    unsigned mask = 0;
    const auto p = pattern_of(inst, rep.incumbent.x);
    for (std::size_t i = 0; i < p.size(); ++i) mask |= static_cast<unsigned>(p[i]) << i;
    const auto fixed = solve_qp(oracle::fix_pattern(inst.qp, inst.bool_idx, mask));
    ASSERT_EQ(fixed.status, QpStatus::optimal);
    EXPECT_NEAR(fixed.objective, rep.incumbent.objective, 1e-7 * std::abs(fixed.objective));
  }
}

TEST(Bnb, NoBooleansReducesToQp) {
  std::mt19937_64 rng(13);
  const auto h = fixture::random_horizon(rng, 15);
  const auto inst = build(h, Policy::no_freewheel);
  const auto rep = solve_miqp(inst);
  const auto qp = solve_qp(inst.qp);
  ASSERT_TRUE(rep.has_incumbent);
  EXPECT_EQ(rep.status, BnbStatus::optimal);
  EXPECT_EQ(rep.nodes_explored, 1u);
  EXPECT_EQ(rep.incumbent.objective, qp.objective);
  EXPECT_EQ(rep.incumbent.x, qp.x);
}

TEST(Bnb, UnreachableTerminalEnergyIsInfeasible) {
  std::mt19937_64 rng(14);
  auto h = fixture::random_horizon(rng, 6);
  // 40 m/s after 90 m is out of reach from any corridor speed.
  h.hz.K_l.back() = energy_from_speed(40.0, kP.m);
  h.hz.K_u.back() = energy_from_speed(41.0, kP.m);
  const auto rep = solve_miqp(build(h, Policy::freewheel_idle));
  EXPECT_EQ(rep.status, BnbStatus::infeasible);
  EXPECT_FALSE(rep.has_incumbent);
}

TEST(Bnb, Deterministic) {
  std::mt19937_64 rng(15);
  const auto h = fixture::random_horizon(rng, 16);
  const auto inst = build(h, Policy::freewheel_off);
  const auto a = solve_miqp(inst), b = solve_miqp(inst);
  EXPECT_EQ(a.nodes_explored, b.nodes_explored);
  EXPECT_EQ(a.incumbent.x, b.incumbent.x);
  EXPECT_EQ(a.best_bound, b.best_bound);
}

TEST(Bnb, NodeLimitKeepsValidBound) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 4; ++trial) {
    const auto h = fixture::random_horizon(rng, 12);
    const auto inst = build(h, Policy::freewheel_idle);
    BnbLimits lim;
    lim.max_nodes = 3;
    const auto limited = solve_miqp(inst, lim);
    const auto full = solve_miqp(inst);
    ASSERT_TRUE(full.has_incumbent);
    EXPECT_LE(limited.best_bound, full.incumbent.objective + 1e-6 * std::abs(full.incumbent.objective));
    if (limited.has_incumbent) EXPECT_GE(limited.incumbent.objective, full.incumbent.objective - 1e-6);
    if (limited.status == BnbStatus::node_limit) EXPECT_GE(limited.gap, 0.0);
  }
}

TEST(Bnb, HintIsUsedAsIncumbent) {
  std::mt19937_64 rng(17);
  const auto h = fixture::random_horizon(rng, 10);
  const auto inst = build(h, Policy::freewheel_idle);
  const auto ref = oracle::enumerate_patterns(inst.qp, inst.bool_idx);
  ASSERT_TRUE(ref.feasible);
  BnbLimits lim;
  lim.max_nodes = 1;
  const std::vector<Pattern> hints{Pattern(ref.pattern.begin(), ref.pattern.end())};
  const auto rep = solve_miqp(inst, lim, hints);
  ASSERT_TRUE(rep.has_incumbent);
  EXPECT_NEAR(rep.incumbent.objective, ref.objective, 1e-6 * std::abs(ref.objective));
}

TEST(Bnb, StatusNames) {
  EXPECT_STREQ(to_string(BnbStatus::gap_limit), "gap_limit");
  EXPECT_STREQ(to_string(BnbStatus::infeasible), "infeasible");
}
