#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "freewheel/corridor.hpp"
#include "freewheel/error.hpp"
#include "freewheel/params.hpp"
#include "freewheel/qp.hpp"
#include "freewheel/taylor.hpp"
#include "freewheel/vehicle_model.hpp"

namespace freewheel {

enum class Policy { benchmark, no_freewheel, freewheel_idle, freewheel_off };

inline constexpr Policy kAllPolicies[] = {Policy::benchmark, Policy::no_freewheel, Policy::freewheel_idle,
                                          Policy::freewheel_off};

inline std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::benchmark: return "benchmark";
    case Policy::no_freewheel: return "no-freewheel";
    case Policy::freewheel_idle: return "freewheel-idle";
    case Policy::freewheel_off: return "freewheel-off";
  }
  return "?";
}

inline Policy parse_policy(std::string_view name) {
  std::string key(name);
  std::replace(key.begin(), key.end(), '_', '-');
  for (Policy p : kAllPolicies)
    if (key == policy_name(p)) return p;
  throw ConfigError("unknown policy '" + std::string(name) +
                    "'; valid names: benchmark, no-freewheel, freewheel-idle, freewheel-off");
}

/// What distinguishes the four compared controllers.
struct PolicyConfig {
  Policy id = Policy::benchmark;
  double omega_o = 0.0;  ///< engine speed while freewheeling [rad/s]
  CorridorSettings corridor = CorridorSettings::benchmark();
  bool freewheeling = false;

  /// Benchmark uses the narrow corridor; the others the wide one. Engine-off
  /// freewheeling stops the engine, idle freewheeling keeps e.omega_o.
  static PolicyConfig make(Policy id, const EngineParams& e, const CorridorSettings& benchmark_corridor = CorridorSettings::benchmark(),
                           const CorridorSettings& wide_corridor = CorridorSettings::wide()) {
    PolicyConfig pc;
    pc.id = id;
    pc.corridor = id == Policy::benchmark ? benchmark_corridor : wide_corridor;
    pc.freewheeling = id == Policy::freewheel_idle || id == Policy::freewheel_off;
    pc.omega_o = id == Policy::freewheel_off ? 0.0 : e.omega_o;
    return pc;
  }
};

/// Gear engage/disengage penalty: half the rotational-energy gap between
/// closed and open engine speeds.
inline double beta_g(const EngineParams& e, double omega_o) {
  return 0.5 * e.J_e * (e.omega_c * e.omega_c - omega_o * omega_o) / 2.0;
}
inline double beta_g(const EngineParams& e) { return beta_g(e, e.omega_o); }

/// How the product z * F_dc(K) enters the dynamics.
enum class DragLinearization {
  mccormick,         ///< exact bounded linearization with an auxiliary u = z F_dc(K)
  reference_frozen,  ///< F_dc evaluated at K_r, constant per step
};

/// Data of one horizon starting at cycle index k.
struct HorizonSlice {
  double delta_s = 15.0;
  std::vector<double> alpha;  ///< slope per step, size N
  std::vector<double> K_l;    ///< lower energy bound per node, size N + 1
  std::vector<double> K_u;    ///< upper energy bound per node, size N + 1

  int steps() const { return static_cast<int>(alpha.size()); }
};

/// Extracts at most N steps starting at index k, truncated at the cycle end.
inline HorizonSlice make_horizon(const DrivingCycle& c, const VelocityCorridor& vc, std::size_t k, int N) {
  if (k + 1 >= c.size()) throw ConfigError("horizon starts at the last cycle sample");
  const std::size_t steps = std::min<std::size_t>(static_cast<std::size_t>(N), c.size() - 1 - k);
  HorizonSlice h;
  h.delta_s = c.delta_s;
  h.alpha.resize(steps);
  h.K_l.resize(steps + 1);
  h.K_u.resize(steps + 1);
  for (std::size_t j = 0; j < steps; ++j) h.alpha[j] = slope_from_grade(c[k + j].grade);
  for (std::size_t j = 0; j <= steps; ++j) {
    h.K_l[j] = vc.K_l[k + j];
    h.K_u[j] = vc.K_u[k + j];
  }
  return h;
}

struct OcpOptions {
  double beta_t = 0.0;  ///< time penalty [W]
  DragLinearization drag = DragLinearization::mccormick;
};

/// One horizon of the freewheeling MIQP in standard QP form plus the
/// Boolean index set. Variables are interleaved per step as
/// [K_j, F_t_j, F_b_j, z_j, (u_j), delta_j] followed by K_N.
struct OcpInstance {
  QpProblem qp;
  std::vector<int> bool_idx;
  int horizon = 0;
  int stride = 0;
  bool has_u = false;
  double delta_s = 0.0;
  double K_init = 0.0;  ///< initial energy after projection into the corridor
  bool z_prev = true;

  // Per-step model data, kept for evaluation and diagnostics.
  std::vector<double> K_r;
  std::vector<double> A, B, w;
  std::vector<double> drag0, drag1;  ///< F_dc,j = drag0 + drag1 K_j
  std::vector<double> drag_lo, drag_hi;
  std::vector<double> drag_frozen;
  std::vector<double> idle_force;  ///< w_o T_d(w_o) varphi0_j
  TaylorCoeffs taylor;
  double beta_g = 0.0;
  double beta_t = 0.0;

  int n_cont() const { return qp.num_variables() - static_cast<int>(bool_idx.size()); }
  int K(int j) const { return j == horizon ? horizon * stride : j * stride; }
  int F_t(int j) const { return j * stride + 1; }
  int F_b(int j) const { return j * stride + 2; }
  int z(int j) const { return j * stride + 3; }
  int u(int j) const { return has_u ? j * stride + 4 : -1; }
  int delta(int j) const { return j * stride + (has_u ? 5 : 4); }
};

/// Assembles the horizon problem:
///   min  sum_j  ds F_t,j + ds w_o T_d(w_o) varphi0_j (1 - z_j) + beta_g delta_j
///             + beta_t ds (theta0_j + theta1_j K_j + theta2_j K_j^2)  - K_N
///   s.t. K_{j+1} = A K_j + B (F_t,j - z_j F_dc,j + F_b,j) + w_j,
///        F_dc,j = w_c T_d(w_c) (phi0_j + phi1_j K_j),
///        K_l,j <= K_j <= K_u,j,  F_t,j <= P_max (phi0_j + phi1_j K_j),
///        0 <= F_t,j <= z_j F_t_max,  -F_b_max <= F_b,j <= 0,
///        delta_j >= |z_j - z_{j-1}| with z_{-1} = z_prev.
inline OcpInstance build_instance(double K_init, bool z_prev, const HorizonSlice& hz, std::span<const double> K_r,
                                  const VehicleParams& p, const EngineParams& e, const PolicyConfig& policy,
                                  const OcpOptions& opt) {
  const int N = hz.steps();
  if (N < 1) throw ConfigError("horizon must contain at least one step");
  if (static_cast<int>(K_r.size()) < N) throw ConfigError("reference trajectory shorter than the horizon");
  if (static_cast<int>(hz.K_l.size()) != N + 1 || static_cast<int>(hz.K_u.size()) != N + 1)
    throw ConfigError("horizon bounds have inconsistent sizes");
  if (!(opt.beta_t >= 0.0)) throw ConfigError("beta_t must be >= 0");
  for (int j = 0; j <= N; ++j)
    if (!(hz.K_l[j] <= hz.K_u[j]))
      throw InfeasibleError(static_cast<std::size_t>(j), "corridor empty at horizon step " + std::to_string(j));

  OcpInstance inst;
  inst.horizon = N;
  inst.has_u = opt.drag == DragLinearization::mccormick;
  inst.stride = inst.has_u ? 6 : 5;
  inst.delta_s = hz.delta_s;
  inst.K_init = std::clamp(K_init, hz.K_l[0], hz.K_u[0]);
  inst.z_prev = z_prev;
  inst.K_r.assign(K_r.begin(), K_r.begin() + N);
  inst.taylor = taylor_coeffs(inst.K_r, p.m);
  inst.beta_g = policy.freewheeling ? beta_g(e, policy.omega_o) : 0.0;
  inst.beta_t = opt.beta_t;

  const int n = N * inst.stride + 1;
  const double ds = hz.delta_s;
  const double drag_power_c = drag_power(e.omega_c, e);
  const double idle_power = drag_power(policy.omega_o, e);

  QpProblem& qp = inst.qp;
  qp = make_qp(n);
  std::vector<Triplet> Qt, Et, Gt;
  std::vector<double> d, h;
  VectorXd& c = qp.c;

  auto add_ineq = [&](std::initializer_list<std::pair<int, double>> terms, double rhs) {
    const int row = static_cast<int>(h.size());
    for (auto [col, v] : terms)
      if (v != 0.0) Gt.emplace_back(row, col, v);
    h.push_back(rhs);
  };

  inst.A.resize(N);
  inst.B.resize(N);
  inst.w.resize(N);
  inst.drag0.resize(N);
  inst.drag1.resize(N);
  inst.drag_lo.resize(N);
  inst.drag_hi.resize(N);
  inst.drag_frozen.resize(N);
  inst.idle_force.resize(N);

  const TaylorCoeffs& t = inst.taylor;
  for (int j = 0; j < N; ++j) {
    const StepDiscretization disc = discretize(hz.alpha[j], ds, p);
    inst.A[j] = disc.A;
    inst.B[j] = disc.B;
    inst.w[j] = disc.w;
    inst.drag0[j] = drag_power_c * t.phi0[j];
    inst.drag1[j] = drag_power_c * t.phi1[j];
    inst.drag_frozen[j] = drag_power_c * t.varphi0[j];
    inst.idle_force[j] = idle_power * t.varphi0[j];

    const int iK = inst.K(j), iFt = inst.F_t(j), iFb = inst.F_b(j), iz = inst.z(j), id = inst.delta(j);
    const double K_lo = j == 0 ? inst.K_init : hz.K_l[j];
    const double K_hi = j == 0 ? inst.K_init : hz.K_u[j];
    // drag1 < 0: F_dc is largest at the lower energy bound.
    inst.drag_hi[j] = inst.drag0[j] + inst.drag1[j] * K_lo;
    inst.drag_lo[j] = inst.drag0[j] + inst.drag1[j] * K_hi;

    // Cost.
    c[iFt] += ds;
    qp.constant += ds * inst.idle_force[j];
    c[iz] -= ds * inst.idle_force[j];
    c[id] += inst.beta_g;
    qp.constant += opt.beta_t * ds * t.theta0[j];
    c[iK] += opt.beta_t * ds * t.theta1[j];
    if (opt.beta_t > 0.0) Qt.emplace_back(iK, iK, 2.0 * opt.beta_t * ds * t.theta2[j]);

    // Dynamics: K_{j+1} - A K_j - B F_t + B u - B F_b = w   (or + B F_frozen z).
    const int row = static_cast<int>(d.size());
    Et.emplace_back(row, inst.K(j + 1), 1.0);
    Et.emplace_back(row, iK, -disc.A);
    Et.emplace_back(row, iFt, -disc.B);
    Et.emplace_back(row, iFb, -disc.B);
    if (inst.has_u)
      Et.emplace_back(row, inst.u(j), disc.B);
    else
      Et.emplace_back(row, iz, disc.B * inst.drag_frozen[j]);
    d.push_back(disc.w);

    if (inst.has_u) {
      const int iu = inst.u(j);
      const double L = inst.drag_lo[j], U = inst.drag_hi[j];
      if (K_lo == K_hi) {
        // Known energy: the envelope collapses to u = F_dc z.
        const int r = static_cast<int>(d.size());
        Et.emplace_back(r, iu, 1.0);
        Et.emplace_back(r, iz, -U);
        d.push_back(0.0);
      } else {
        add_ineq({{iu, -1.0}, {iz, L}}, 0.0);                                      // u >= L z
        add_ineq({{iu, 1.0}, {iz, -U}}, 0.0);                                      // u <= U z
        add_ineq({{iK, inst.drag1[j]}, {iz, U}, {iu, -1.0}}, U - inst.drag0[j]);   // u >= F_dc - U (1 - z)
        add_ineq({{iu, 1.0}, {iK, -inst.drag1[j]}, {iz, -L}}, inst.drag0[j] - L);  // u <= F_dc - L (1 - z)
      }
      qp.lb[iu] = std::min(0.0, L);
      qp.ub[iu] = std::max(0.0, U);
    }

    add_ineq({{iFt, 1.0}, {iK, -p.P_max * t.phi1[j]}}, p.P_max * t.phi0[j]);  // power
    add_ineq({{iFt, 1.0}, {iz, -p.F_t_max}}, 0.0);                           // F_t <= z F_t_max

    // delta_j >= |z_j - z_{j-1}|
    if (j == 0) {
      const double zp = z_prev ? 1.0 : 0.0;
      add_ineq({{iz, 1.0}, {id, -1.0}}, zp);
      add_ineq({{iz, -1.0}, {id, -1.0}}, -zp);
    } else {
      const int izp = inst.z(j - 1);
      add_ineq({{iz, 1.0}, {izp, -1.0}, {id, -1.0}}, 0.0);
      add_ineq({{iz, -1.0}, {izp, 1.0}, {id, -1.0}}, 0.0);
    }

    qp.lb[iK] = K_lo;
    qp.ub[iK] = K_hi;
    qp.lb[iFt] = 0.0;
    qp.ub[iFt] = p.F_t_max;
    qp.lb[iFb] = -p.F_b_max;
    qp.ub[iFb] = 0.0;
    qp.lb[id] = 0.0;
    qp.ub[id] = 1.0;
    if (policy.freewheeling) {
      qp.lb[iz] = 0.0;
      qp.ub[iz] = 1.0;
      inst.bool_idx.push_back(iz);
    } else {
      qp.lb[iz] = 1.0;
      qp.ub[iz] = 1.0;
    }
  }
  c[inst.K(N)] -= 1.0;
  qp.lb[inst.K(N)] = hz.K_l[N];
  qp.ub[inst.K(N)] = hz.K_u[N];

  qp.Q.resize(n, n);
  qp.Q.setFromTriplets(Qt.begin(), Qt.end());
  qp.E.resize(static_cast<int>(d.size()), n);
  qp.E.setFromTriplets(Et.begin(), Et.end());
  qp.d = Eigen::Map<const VectorXd>(d.data(), static_cast<int>(d.size()));
  qp.G.resize(static_cast<int>(h.size()), n);
  qp.G.setFromTriplets(Gt.begin(), Gt.end());
  qp.h = Eigen::Map<const VectorXd>(h.data(), static_cast<int>(h.size()));
  return inst;
}

/// Writes the instance as sparse triplets, one entry per line:
///   n <vars> <eq rows> <ineq rows>, const <v>, Q <i> <j> <v>, c <i> <v>,
///   E <i> <j> <v>, d <i> <v>, G <i> <j> <v>, h <i> <v>, lb/ub <i> <v>, bool <i>.
inline void write_instance(std::ostream& out, const OcpInstance& inst) {
  const QpProblem& qp = inst.qp;
  out.precision(17);
  out << "n " << qp.num_variables() << ' ' << qp.E.rows() << ' ' << qp.G.rows() << '\n';
  out << "const " << qp.constant << '\n';
  auto dump = [&](const char* tag, const SparseMatrix& A) {
    for (int j = 0; j < A.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(A, j); it; ++it)
        out << tag << ' ' << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  };
  auto dumpv = [&](const char* tag, const VectorXd& v, bool skip_zero) {
    for (int i = 0; i < v.size(); ++i)
      if (!skip_zero || v[i] != 0.0) out << tag << ' ' << i << ' ' << v[i] << '\n';
  };
  dump("Q", qp.Q);
  dumpv("c", qp.c, true);
  dump("E", qp.E);
  dumpv("d", qp.d, false);
  dump("G", qp.G);
  dumpv("h", qp.h, false);
  dumpv("lb", qp.lb, false);
  dumpv("ub", qp.ub, false);
  for (int b : inst.bool_idx) out << "bool " << b << '\n';
}

}  // namespace freewheel
