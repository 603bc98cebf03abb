#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "freewheel/accounting.hpp"

using namespace freewheel;

namespace {

const VehicleParams kP{};
const EngineParams kE{};

SimulationRecord simulate(Policy id, double beta_t, std::uint64_t seed = 2) {
  SyntheticCycleSpec spec;
  spec.length_m = 1500.0;
  const auto c = generate_synthetic_cycle(seed, spec);
  MpcConfig cfg;
  cfg.policy = PolicyConfig::make(id, kE);
  cfg.beta_t = beta_t;
  const auto vc = repair_feasibility(build_corridor(c, cfg.policy.corridor, kP), c, kP, kE, cfg.policy.corridor);
  return run_mpc(c, vc, kP, kE, cfg);
}

// Hand-made record: two steps, one open, one engagement.
SimulationRecord handmade() {
  SimulationRecord rec;
  rec.policy = Policy::freewheel_idle;
  rec.beta_g = 1000.0;
  rec.omega_o = 50.0;
  rec.delta_s = 15.0;
  StepRecord a;
  a.K = 3e6;
  a.z = false;
  a.gear_change = true;
  a.dt = 1.0;
  a.work = {.traction = 0.0, .engine_drag = 0.0, .brake = 0.0, .air = -100.0, .roll = -200.0, .gravity = 5000.0};
  StepRecord b;
  b.K = a.K + a.work.total();
  b.z = true;
  b.gear_change = true;
  b.dt = 2.0;
  b.work = {.traction = 2000.0, .engine_drag = -60.0, .brake = -50.0, .air = -300.0, .roll = -400.0, .gravity = -1000.0};
  rec.steps = {a, b};
  rec.final_state = {30.0, b.K + b.work.total()};
  return rec;
}

}  // namespace

TEST(Losses, HandmadeRecord) {
  const auto rec = handmade();
  const auto b = decompose(rec, kE);
  EXPECT_DOUBLE_EQ(b.air, 400.0);
  EXPECT_DOUBLE_EQ(b.roll, 600.0);
  EXPECT_DOUBLE_EQ(b.brake, 50.0);
  EXPECT_DOUBLE_EQ(b.engine_drag, 60.0);
  EXPECT_DOUBLE_EQ(b.idling, 50.0 * (20.0 + 0.12 * 50.0) * 1.0);
  EXPECT_DOUBLE_EQ(b.gear_change, 2000.0);
  EXPECT_DOUBLE_EQ(b.trip_time, 3.0);
  EXPECT_DOUBLE_EQ(b.traction, 2000.0);
  EXPECT_DOUBLE_EQ(b.gravity_work, 4000.0);
  EXPECT_DOUBLE_EQ(b.total, 400.0 + 600.0 + 50.0 + 60.0 + b.idling + 2000.0);
  EXPECT_NEAR(b.closure_error(), 0.0, 1e-6);
}

TEST(Losses, ClosedLoopBalanceCloses) {
  for (Policy id : kAllPolicies) {
    const auto rec = simulate(id, 1.5e4);
    const auto b = decompose(rec, kE);
    EXPECT_LT(std::abs(b.closure_error()), 1e-9 * b.total) << policy_name(id);
    EXPECT_GT(b.air, 0.0);
    EXPECT_GT(b.roll, 0.0);
    if (id == Policy::benchmark || id == Policy::no_freewheel) {
      EXPECT_EQ(b.idling, 0.0);
      EXPECT_EQ(b.gear_change, 0.0);
    }
    if (id == Policy::freewheel_off) EXPECT_EQ(b.idling, 0.0);
  }
}

TEST(Comparison, IdenticalRunsAreOneHundredPercent) {
  const auto rec = simulate(Policy::benchmark, 2e4);
  const std::vector<SimulationRecord> recs{rec, rec};
  const auto cmp = compare_policies(recs, kE);
  for (const auto& r : cmp.rows) {
    EXPECT_DOUBLE_EQ(r.energy_pct, 100.0);
    EXPECT_DOUBLE_EQ(r.time_pct, 100.0);
  }
}

TEST(Comparison, NormalizesToBenchmark) {
  auto bench = handmade();
  bench.policy = Policy::benchmark;
  auto other = handmade();
  other.policy = Policy::freewheel_off;
  for (auto& st : other.steps) {
    st.work.air *= 0.5;
    st.dt *= 1.1;
  }
  const std::vector<SimulationRecord> recs{other, bench};
  const auto cmp = compare_policies(recs, kE);
  const auto base = decompose(bench, kE), mine = decompose(other, kE);
  EXPECT_DOUBLE_EQ(cmp.at(Policy::benchmark).energy_pct, 100.0);
  EXPECT_NEAR(cmp.at(Policy::freewheel_off).energy_pct, 100.0 * mine.total / base.total, 1e-12);
  EXPECT_NEAR(cmp.at(Policy::freewheel_off).time_pct, 110.0, 1e-12);
  EXPECT_THROW(cmp.at(Policy::no_freewheel), ConfigError);
  EXPECT_THROW(compare_policies(std::span<const SimulationRecord>{}, kE), ConfigError);
}

TEST(Comparison, ReportsListEveryPolicy) {
  auto bench = handmade();
  bench.policy = Policy::benchmark;
  auto idle = handmade();
  const std::vector<SimulationRecord> recs{bench, idle};
  const auto cmp = compare_policies(recs, kE);
  std::ostringstream text, kv;
  write_comparison_text(text, cmp);
  write_comparison_kv(kv, cmp);
  EXPECT_NE(text.str().find("benchmark"), std::string::npos);
  EXPECT_NE(text.str().find("freewheel-idle"), std::string::npos);
  EXPECT_NE(kv.str().find("="), std::string::npos);
  std::ostringstream lt, lkv;
  write_losses_text(lt, cmp.rows[0].losses);
  write_losses_kv(lkv, cmp.rows[0].losses);
  EXPECT_FALSE(lt.str().empty());
  EXPECT_NE(lkv.str().find("total"), std::string::npos);
}
