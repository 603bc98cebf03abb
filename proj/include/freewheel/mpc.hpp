#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "freewheel/bnb.hpp"
#include "freewheel/corridor.hpp"
#include "freewheel/cycle.hpp"
#include "freewheel/error.hpp"
#include "freewheel/ocp.hpp"
#include "freewheel/params.hpp"
#include "freewheel/vehicle_model.hpp"

namespace freewheel {

/// Per-step B&B limits for closed-loop use: the horizon relaxation is weak,
/// so incumbents come mostly from the pattern heuristics.
inline BnbLimits closed_loop_limits() {
  BnbLimits l;
  l.max_nodes = 12;
  l.abs_gap = 2000.0;
  return l;
}

struct MpcConfig {
  int N_H = 60;
  double delta_s = 15.0;  ///< cycle spacing expected by the controller [m]
  double beta_t = 0.0;    ///< time penalty [W]
  PolicyConfig policy;
  int sqp_passes = 1;
  DragLinearization drag = DragLinearization::mccormick;
  BnbLimits limits = closed_loop_limits();
  QpSettings qp;
  /// Optional per-solve log line sink.
  std::function<void(const std::string&)> log;

  void validate() const {
    if (N_H < 2) throw ConfigError("N_H must be >= 2");
    if (!(delta_s > 0.0)) throw ConfigError("delta_s must be > 0");
    if (!(beta_t >= 0.0)) throw ConfigError("beta_t must be >= 0");
    if (sqp_passes < 1) throw ConfigError("sqp_passes must be >= 1");
  }
};

/// Closed-loop quantities of one spatial step, from sample k to k + 1.
struct StepRecord {
  double s = 0.0;  ///< position at the start of the step [m]
  double K = 0.0;  ///< kinetic energy at the start of the step [J]
  double v = 0.0;
  double F_t = 0.0;
  double F_b = 0.0;
  bool z = true;
  bool gear_change = false;  ///< z differs from the previous step
  double alpha = 0.0;
  double drag_force = 0.0;  ///< engine drag at the wheels while closed [N]
  StepWork work;
  double dt = 0.0;
  BnbStatus solver_status = BnbStatus::optimal;
  std::size_t nodes = 0;
  /// Largest excursion of the planned energies outside the horizon corridor,
  /// relative to the local width.
  double plan_violation = 0.0;
};

struct SimulationRecord {
  Policy policy = Policy::benchmark;
  double beta_t = 0.0;
  double beta_g = 0.0;
  double omega_o = 0.0;  ///< engine speed while open [rad/s]
  double delta_s = 0.0;
  std::vector<StepRecord> steps;
  KineticState final_state;
  std::size_t limited_steps = 0;  ///< steps whose B&B stopped at a limit
  std::size_t total_nodes = 0;

  double trip_time() const {
    double t = 0.0;
    for (const auto& st : steps) t += st.dt;
    return t;
  }
  std::size_t gear_changes() const {
    return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return s.gear_change; }));
  }
};

/// Initial energy for a cycle: reference speed projected into the corridor.
inline double default_initial_energy(const DrivingCycle& c, const VelocityCorridor& vc, double m) {
  return std::clamp(energy_from_speed(c[0].v_ref, m), vc.K_l[0], vc.K_u[0]);
}

inline std::string pattern_string(const Pattern& p) {
  std::string out;
  for (auto b : p) out += b ? '1' : '0';
  return out;
}

/// Periodic pattern: `lead_len` steps in the lead state, then alternating
/// phases of `pulse` closed and `glide` open steps.
inline Pattern periodic_pattern(int N, int pulse, int glide, bool lead_closed, int lead_len) {
  Pattern p(static_cast<std::size_t>(N));
  const int period = pulse + glide;
  for (int j = 0; j < N; ++j) {
    bool closed = lead_closed;
    if (j >= lead_len) {
      const int r = (j - lead_len) % period;
      closed = lead_closed ? r >= glide : r < pulse;
    }
    p[static_cast<std::size_t>(j)] = closed ? 1 : 0;
  }
  return p;
}

/// Pulse-and-glide candidates for the B&B. The horizon relaxation is too weak
/// to suggest glides on its own. Besides the fresh patterns, each family
/// member is also aligned with the first phase of the previous plan so the
/// controller can keep its rhythm.
inline std::vector<Pattern> pulse_glide_patterns(int N, const Pattern& previous = {}) {
  std::vector<Pattern> out;
  int lead = 0;
  while (lead < static_cast<int>(previous.size()) && previous[lead] == previous[0]) ++lead;
  for (int pulse : {3, 5})
    for (int glide : {12, 20}) {
      out.push_back(periodic_pattern(N, pulse, glide, true, pulse));
      out.push_back(periodic_pattern(N, pulse, glide, false, glide));
      if (lead > 0 && lead < N) out.push_back(periodic_pattern(N, pulse, glide, previous[0] != 0, lead));
    }
  return out;
}

/// Receding-horizon simulation. Each step solves the horizon MIQP, applies the
/// first control to the nonlinear plant and shifts the solution as the next
/// linearization reference.
inline SimulationRecord run_mpc(const DrivingCycle& c, const VelocityCorridor& vc, const VehicleParams& p,
                                const EngineParams& e, const MpcConfig& cfg,
                                std::optional<double> K_start = std::nullopt) {
  cfg.validate();
  p.validate();
  e.validate();
  c.validate();
  if (vc.size() != c.size()) throw ConfigError("corridor and cycle lengths differ");
  if (std::abs(c.delta_s - cfg.delta_s) > 1e-9 * cfg.delta_s)
    throw ConfigError("cycle spacing " + detail::format_double(c.delta_s) + " m differs from delta_s " +
                      detail::format_double(cfg.delta_s) + " m");

  const std::size_t n = c.size();
  SimulationRecord rec;
  rec.policy = cfg.policy.id;
  rec.beta_t = cfg.beta_t;
  rec.beta_g = cfg.policy.freewheeling ? beta_g(e, cfg.policy.omega_o) : 0.0;
  rec.omega_o = cfg.policy.omega_o;
  rec.delta_s = c.delta_s;
  rec.steps.reserve(n - 1);

  KineticState x{c[0].s, K_start ? *K_start : default_initial_energy(c, vc, p.m)};
  if (x.K < vc.K_l[0] || x.K > vc.K_u[0]) throw ConfigError("initial kinetic energy outside the corridor");

  OcpOptions opt;
  opt.beta_t = cfg.beta_t;
  opt.drag = cfg.drag;

  std::vector<double> K_ref;  // previous optimal K_0..K_N
  Pattern z_ref;              // previous optimal z_0..z_{N-1}
  bool z_prev = true;

  for (std::size_t k = 0; k + 1 < n; ++k) {
    const HorizonSlice hz = make_horizon(c, vc, k, cfg.N_H);
    const int N = hz.steps();

    std::vector<double> K_r(static_cast<std::size_t>(N));
    if (K_ref.empty()) {
      for (int j = 0; j < N; ++j) K_r[j] = 0.5 * (vc.K_l[k + j] + vc.K_u[k + j]);
    } else {
      for (int j = 0; j < N; ++j) K_r[j] = K_ref[std::min<std::size_t>(j + 1, K_ref.size() - 1)];
    }
    std::vector<Pattern> hints;
    if (cfg.policy.freewheeling && !z_ref.empty()) {
      Pattern h(static_cast<std::size_t>(N));
      for (int j = 0; j < N; ++j) h[j] = z_ref[std::min<std::size_t>(j + 1, z_ref.size() - 1)];
      hints.push_back(std::move(h));
    }
    if (cfg.policy.freewheeling) {
      const auto family = pulse_glide_patterns(N, hints.empty() ? Pattern{} : hints.front());
      hints.insert(hints.end(), family.begin(), family.end());
    }

    BnbReport rep;
    OcpInstance inst;
    for (int pass = 0; pass < cfg.sqp_passes; ++pass) {
      inst = build_instance(x.K, z_prev, hz, K_r, p, e, cfg.policy, opt);
      rep = solve_miqp(inst, cfg.limits, hints, cfg.qp);
      rec.total_nodes += rep.nodes_explored;
      if (rep.status == BnbStatus::infeasible)
        throw InfeasibleError(k, "horizon problem infeasible at step " + std::to_string(k) + " (s = " +
                                     detail::format_double(c[k].s) + " m)");
      if (!rep.has_incumbent)
        throw SolverLimitError(k, "solver limit reached without incumbent at step " + std::to_string(k));
      if (pass + 1 < cfg.sqp_passes) {
        for (int j = 0; j < N; ++j) K_r[j] = std::max(rep.incumbent.x[inst.K(j)], 1.0);
        hints.assign(1, pattern_of(inst, rep.incumbent.x));
      }
    }
    if (cfg.log) {
      cfg.log("step " + std::to_string(k) + " nodes " + std::to_string(rep.nodes_explored) + " bound " +
              detail::format_double(rep.best_bound) + " incumbent " + detail::format_double(rep.incumbent.objective) +
              " gap " + detail::format_double(rep.gap) + " " + to_string(rep.status) + " z " +
              pattern_string(pattern_of(inst, rep.incumbent.x)));
    }
    if (rep.status == BnbStatus::node_limit) ++rec.limited_steps;

    const VectorXd& sol = rep.incumbent.x;
    K_ref.resize(static_cast<std::size_t>(N) + 1);
    for (int j = 0; j <= N; ++j) K_ref[j] = sol[inst.K(j)];
    z_ref = pattern_of(inst, sol);

    ControlInput u;
    u.z = sol[inst.z(0)] >= 0.5;
    u.F_t = u.z ? std::clamp(sol[inst.F_t(0)], 0.0, p.F_t_max) : 0.0;
    u.F_b = std::clamp(sol[inst.F_b(0)], -p.F_b_max, 0.0);

    const double alpha = hz.alpha[0];
    const PlantStepResult r = plant_advance(x, u, alpha, c.delta_s, p, e);

    StepRecord st;
    st.s = x.s;
    st.K = x.K;
    st.v = speed_from_energy(x.K, p.m);
    st.F_t = u.F_t;
    st.F_b = u.F_b;
    st.z = u.z;
    st.gear_change = u.z != z_prev;
    st.alpha = alpha;
    st.drag_force = r.drag_force;
    st.work = r.work;
    st.dt = step_time(x.K, c.delta_s, p.m);
    st.solver_status = rep.status;
    st.nodes = rep.nodes_explored;
    for (int j = 0; j <= N; ++j) {
      const double width = std::max(hz.K_u[j] - hz.K_l[j], 1e-9);
      const double Kj = sol[inst.K(j)];
      st.plan_violation = std::max({st.plan_violation, (hz.K_l[j] - Kj) / width, (Kj - hz.K_u[j]) / width});
    }
    rec.steps.push_back(st);

    z_prev = u.z;
    x = r.next;
    x.s = c[k + 1].s;
  }
  rec.final_state = x;
  return rec;
}

/// Largest corridor violation along a record, as a fraction of the local width.
inline double max_corridor_violation(const SimulationRecord& rec, const VelocityCorridor& vc) {
  double worst = 0.0;
  auto check = [&](std::size_t k, double K) {
    const double width = std::max(vc.K_u[k] - vc.K_l[k], 1e-9);
    worst = std::max({worst, (vc.K_l[k] - K) / width, (K - vc.K_u[k]) / width});
  };
  for (std::size_t k = 0; k < rec.steps.size(); ++k) check(k, rec.steps[k].K);
  check(rec.steps.size(), rec.final_state.K);
  return worst;
}

/// Trip time of a trajectory that follows a speed profile exactly.
inline double profile_trip_time(const std::vector<double>& v, double delta_s) {
  double t = 0.0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) t += delta_s / v[k];
  return t;
}

struct TuneResult {
  double beta_t = 0.0;
  double trip_time = 0.0;
  int evaluations = 0;
  SimulationRecord record;
};

struct TuneSettings {
  double rel_tol = 0.005;
  int max_evaluations = 20;
  double initial_beta_t = 2.0e4;
};

/// Finds beta_t whose closed-loop trip time matches target_time.
///
/// Trip time is nonincreasing in beta_t. The root is bracketed by scaling
/// beta_t by 3, then refined with the Illinois variant of regula falsi in
/// log(beta_t).
inline TuneResult tune_beta_t(double target_time, const DrivingCycle& c, const VelocityCorridor& vc,
                              const VehicleParams& p, const EngineParams& e, const MpcConfig& cfg,
                              const TuneSettings& ts = {}) {
  const double fastest = profile_trip_time(vc.v_u, c.delta_s);
  const double slowest = profile_trip_time(vc.v_l, c.delta_s);
  if (!(target_time >= fastest && target_time <= slowest))
    throw UnachievableTargetError(fastest, slowest,
                                  "target trip time " + detail::format_double(target_time) + " s outside [" +
                                      detail::format_double(fastest) + ", " + detail::format_double(slowest) + "] s");

  TuneResult best;
  double best_err = kInf;
  int evals = 0;
  auto evaluate = [&](double beta) {
    MpcConfig run = cfg;
    run.beta_t = beta;
    SimulationRecord rec = run_mpc(c, vc, p, e, run);
    const double t = rec.trip_time();
    ++evals;
    const double err = std::abs(t - target_time);
    if (err < best_err) {
      best_err = err;
      best.beta_t = beta;
      best.trip_time = t;
      best.record = std::move(rec);
    }
    return t - target_time;  // decreasing in beta
  };
  auto done = [&] { return best_err <= ts.rel_tol * target_time || evals >= ts.max_evaluations; };
  auto finish = [&] {
    best.evaluations = evals;
    return best;
  };

  double lo = std::max(ts.initial_beta_t, 1.0), hi = lo;
  double f_lo = evaluate(lo), f_hi = f_lo;
  if (done()) return finish();
  // Bracket: f(lo) > 0 (too slow) and f(hi) < 0 (too fast).
  if (f_lo > 0.0) {
    while (f_hi > 0.0) {
      lo = hi, f_lo = f_hi;
      hi *= 3.0;
      f_hi = evaluate(hi);
      if (done()) return finish();
      if (hi > 1e12) {
        const double t_fast = f_hi + target_time;
        throw UnachievableTargetError(t_fast, slowest, "closed loop cannot reach target trip time " +
                                                           detail::format_double(target_time) + " s; fastest " +
                                                           detail::format_double(t_fast) + " s");
      }
    }
  } else {
    while (f_lo < 0.0) {
      hi = lo, f_hi = f_lo;
      lo /= 3.0;
      if (lo < 1.0) {
        const double f0 = evaluate(0.0);
        if (done() || f0 < 0.0) {
          if (done()) return finish();
          throw UnachievableTargetError(fastest, f0 + target_time, "closed loop at beta_t = 0 is faster than target " +
                                                                        detail::format_double(target_time) + " s");
        }
        lo = 0.0, f_lo = f0;
        break;
      }
      f_lo = evaluate(lo);
      if (done()) return finish();
    }
  }

  // Illinois regula falsi on g(y) = f(exp(y)); a zero lower end uses plain bisection in beta.
  int side = 0;
  while (!done()) {
    double beta;
    if (lo <= 0.0) {
      beta = 0.5 * (lo + hi);
    } else {
      const double ylo = std::log(lo), yhi = std::log(hi);
      double y = (ylo * f_hi - yhi * f_lo) / (f_hi - f_lo);
      if (!std::isfinite(y) || y <= std::min(ylo, yhi) || y >= std::max(ylo, yhi)) y = 0.5 * (ylo + yhi);
      beta = std::exp(y);
    }
    const double f = evaluate(beta);
    if (f > 0.0) {
      lo = beta, f_lo = f;
      if (side == -1) f_hi *= 0.5;
      side = -1;
    } else {
      hi = beta, f_hi = f;
      if (side == 1) f_lo *= 0.5;
      side = 1;
    }
  }
  return finish();
}

/// Trajectory CSV: one row per cycle sample; the last row carries the final
/// state with zero controls and zero dt.
inline void write_trajectory(std::ostream& out, const SimulationRecord& rec, double m) {
  out << "s_m,v_mps,K_J,F_t_N,F_b_N,z,dt_s\n";
  using detail::format_double;
  for (const auto& st : rec.steps)
    out << format_double(st.s) << ',' << format_double(st.v) << ',' << format_double(st.K) << ','
        << format_double(st.F_t) << ',' << format_double(st.F_b) << ',' << (st.z ? 1 : 0) << ','
        << format_double(st.dt) << '\n';
  const bool z_last = rec.steps.empty() ? true : rec.steps.back().z;
  out << format_double(rec.final_state.s) << ',' << format_double(speed_from_energy(rec.final_state.K, m)) << ','
      << format_double(rec.final_state.K) << ",0,0," << (z_last ? 1 : 0) << ",0\n";
}

}  // namespace freewheel
