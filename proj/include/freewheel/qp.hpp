#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "freewheel/error.hpp"

namespace freewheel {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex quadratic program
///
///   minimize    1/2 x'Qx + c'x + constant
///   subject to  E x = d,  G x <= h,  lb <= x <= ub.
///
/// Q is stored with both triangles and must be positive semidefinite.
/// Bounds may be infinite.
struct QpProblem {
  SparseMatrix Q;
  VectorXd c;
  double constant = 0.0;
  SparseMatrix E;
  VectorXd d;
  SparseMatrix G;
  VectorXd h;
  VectorXd lb;
  VectorXd ub;

  int num_variables() const { return static_cast<int>(c.size()); }

  double objective(const VectorXd& x) const { return 0.5 * x.dot(Q * x) + c.dot(x) + constant; }

  /// Largest violation of any constraint, absolute.
  double max_violation(const VectorXd& x) const {
    double v = 0.0;
    if (E.rows() > 0) v = std::max(v, (E * x - d).cwiseAbs().maxCoeff());
    if (G.rows() > 0) v = std::max(v, (G * x - h).cwiseMax(0.0).maxCoeff());
    for (int j = 0; j < x.size(); ++j) v = std::max({v, lb[j] - x[j], x[j] - ub[j]});
    return v;
  }

  void check_dimensions() const {
    const int n = num_variables();
    if (Q.rows() != n || Q.cols() != n) throw ConfigError("QP: Q has inconsistent dimensions");
    if (E.cols() != n || E.rows() != d.size()) throw ConfigError("QP: equality system has inconsistent dimensions");
    if (G.cols() != n || G.rows() != h.size()) throw ConfigError("QP: inequality system has inconsistent dimensions");
    if (lb.size() != n || ub.size() != n) throw ConfigError("QP: bounds have inconsistent dimensions");
  }
};

/// Convenience constructor for an n-variable problem without constraints.
inline QpProblem make_qp(int n) {
  QpProblem qp;
  qp.Q.resize(n, n);
  qp.c = VectorXd::Zero(n);
  qp.E.resize(0, n);
  qp.d.resize(0);
  qp.G.resize(0, n);
  qp.h.resize(0);
  qp.lb = VectorXd::Constant(n, -kInf);
  qp.ub = VectorXd::Constant(n, kInf);
  return qp;
}

enum class QpStatus { optimal, infeasible, max_iter };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "?";
}

/// Relative KKT residuals (infinity norms, each divided by the magnitude of
/// the terms it balances).
struct KktResiduals {
  double stationarity = kInf;
  double primal = kInf;
  double complementarity = kInf;

  double max() const { return std::max({stationarity, primal, complementarity}); }
};

struct QpSolution {
  VectorXd x;
  double objective = kInf;
  QpStatus status = QpStatus::max_iter;
  KktResiduals kkt;
  int iterations = 0;
};

struct QpSettings {
  double tolerance = 1e-8;          ///< residual bound for reporting optimal
  double target_tolerance = 1e-10;  ///< iterate until this or stagnation
  int max_iter = 80;
  bool presolve = true;
  int ruiz_iterations = 15;
  double regularization = 1e-11;
  int refinement_steps = 3;
};

namespace qp_detail {

struct SparseRow {
  std::vector<int> idx;
  std::vector<double> val;
  double rhs = 0.0;
};

inline std::vector<SparseRow> to_rows(const SparseMatrix& A, const VectorXd& rhs) {
  std::vector<SparseRow> rows(static_cast<std::size_t>(A.rows()));
  for (int j = 0; j < A.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) {
      if (it.value() == 0.0) continue;
      rows[static_cast<std::size_t>(it.row())].idx.push_back(j);
      rows[static_cast<std::size_t>(it.row())].val.push_back(it.value());
    }
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rhs = rhs[static_cast<int>(i)];
  return rows;
}

/// Result of removing fixed variables, singleton rows and opposing
/// inequality pairs. The reduced problem lives on the free variables.
struct Presolved {
  bool infeasible = false;
  std::vector<int> free_vars;  // reduced index -> original index
  VectorXd x_fixed;            // values of fixed variables (others unused)
  std::vector<char> is_fixed;
  QpProblem reduced;
};

inline Presolved presolve(const QpProblem& qp, bool enabled) {
  const int n = qp.num_variables();
  Presolved ps;
  ps.is_fixed.assign(static_cast<std::size_t>(n), 0);
  ps.x_fixed = VectorXd::Zero(n);
  VectorXd lb = qp.lb, ub = qp.ub;

  auto eq_rows = to_rows(qp.E, qp.d);
  auto in_rows = to_rows(qp.G, qp.h);
  std::vector<char> eq_alive(eq_rows.size(), 1), in_alive(in_rows.size(), 1);
  std::vector<SparseRow> merged_eq;

  auto scale_of = [](double v) { return std::max(1.0, std::abs(v)); };

  auto fix = [&](int j, double value) {
    ps.is_fixed[static_cast<std::size_t>(j)] = 1;
    ps.x_fixed[j] = value;
  };

  if (enabled) {
    bool changed = true;
    while (changed && !ps.infeasible) {
      changed = false;
      for (int j = 0; j < n; ++j) {
        if (ps.is_fixed[static_cast<std::size_t>(j)]) continue;
        const double s = scale_of(std::max(std::abs(lb[j]) < kInf ? lb[j] : 0.0, std::abs(ub[j]) < kInf ? ub[j] : 0.0));
        if (lb[j] > ub[j] + 1e-9 * s) {
          ps.infeasible = true;
          break;
        }
        if (ub[j] - lb[j] <= 1e-13 * s) {
          fix(j, 0.5 * (lb[j] + ub[j]));
          changed = true;
        }
      }
      if (ps.infeasible) break;

      auto reduce_row = [&](SparseRow& r) {
        std::size_t w = 0;
        for (std::size_t k = 0; k < r.idx.size(); ++k) {
          if (ps.is_fixed[static_cast<std::size_t>(r.idx[k])]) {
            r.rhs -= r.val[k] * ps.x_fixed[r.idx[k]];
          } else {
            r.idx[w] = r.idx[k];
            r.val[w] = r.val[k];
            ++w;
          }
        }
        r.idx.resize(w);
        r.val.resize(w);
      };

      for (std::size_t i = 0; i < eq_rows.size() && !ps.infeasible; ++i) {
        if (!eq_alive[i]) continue;
        auto& r = eq_rows[i];
        reduce_row(r);
        if (r.idx.empty()) {
          if (std::abs(r.rhs) > 1e-9 * scale_of(r.rhs)) ps.infeasible = true;
          eq_alive[i] = 0;
        } else if (r.idx.size() == 1) {
          const int j = r.idx[0];
          const double v = r.rhs / r.val[0];
          const double s = scale_of(v);
          if (v < lb[j] - 1e-9 * s || v > ub[j] + 1e-9 * s) ps.infeasible = true;
          fix(j, v);
          eq_alive[i] = 0;
          changed = true;
        }
      }
      for (std::size_t i = 0; i < in_rows.size() && !ps.infeasible; ++i) {
        if (!in_alive[i]) continue;
        auto& r = in_rows[i];
        reduce_row(r);
        if (r.idx.empty()) {
          if (r.rhs < -1e-9 * scale_of(r.rhs)) ps.infeasible = true;
          in_alive[i] = 0;
        } else if (r.idx.size() == 1) {
          const int j = r.idx[0];
          const double v = r.rhs / r.val[0];
          if (r.val[0] > 0.0)
            ub[j] = std::min(ub[j], v);
          else
            lb[j] = std::max(lb[j], v);
          in_alive[i] = 0;
          changed = true;
        }
      }
    }

    // Opposing inequality pairs a'x <= h1, -a'x <= h2 with h1 + h2 = 0 are equalities.
    if (!ps.infeasible) {
      std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
      auto key_of = [](const SparseRow& r) {
        std::uint64_t hsh = 1469598103934665603ull;
        for (std::size_t k = 0; k < r.idx.size(); ++k) {
          hsh = (hsh ^ static_cast<std::uint64_t>(r.idx[k])) * 1099511628211ull;
          const double a = std::abs(r.val[k]);
          std::uint64_t bits;
          std::memcpy(&bits, &a, sizeof bits);
          hsh = (hsh ^ bits) * 1099511628211ull;
        }
        return hsh;
      };
      for (std::size_t i = 0; i < in_rows.size(); ++i)
        if (in_alive[i]) buckets[key_of(in_rows[i])].push_back(i);
      for (auto& [key, members] : buckets) {
        for (std::size_t a = 0; a < members.size(); ++a) {
          const std::size_t i = members[a];
          if (!in_alive[i]) continue;
          for (std::size_t b = a + 1; b < members.size(); ++b) {
            const std::size_t k = members[b];
            if (!in_alive[k]) continue;
            const auto& ri = in_rows[i];
            const auto& rk = in_rows[k];
            if (ri.idx != rk.idx) continue;
            bool opposite = true;
            for (std::size_t t = 0; t < ri.val.size() && opposite; ++t) opposite = ri.val[t] == -rk.val[t];
            if (!opposite) continue;
            const double sum = ri.rhs + rk.rhs;
            const double s = scale_of(std::max(std::abs(ri.rhs), std::abs(rk.rhs)));
            if (sum < -1e-9 * s) {
              ps.infeasible = true;
            } else if (sum <= 1e-12 * s) {
              SparseRow eq = ri;
              eq.rhs = 0.5 * (ri.rhs - rk.rhs);
              merged_eq.push_back(std::move(eq));
              in_alive[i] = 0;
              in_alive[k] = 0;
              break;
            }
          }
        }
      }
    }
  }

  // Assemble the reduced problem.
  std::vector<int> new_index(static_cast<std::size_t>(n), -1);
  for (int j = 0; j < n; ++j)
    if (!ps.is_fixed[static_cast<std::size_t>(j)]) {
      new_index[static_cast<std::size_t>(j)] = static_cast<int>(ps.free_vars.size());
      ps.free_vars.push_back(j);
    }
  const int nr = static_cast<int>(ps.free_vars.size());
  QpProblem& r = ps.reduced;
  r.c.resize(nr);
  r.lb.resize(nr);
  r.ub.resize(nr);
  for (int k = 0; k < nr; ++k) {
    const int j = ps.free_vars[static_cast<std::size_t>(k)];
    r.c[k] = qp.c[j];
    r.lb[k] = lb[j];
    r.ub[k] = ub[j];
  }
  r.constant = qp.constant + qp.c.dot(ps.x_fixed);
  {
    std::vector<Triplet> trip;
    VectorXd Qx_fixed = qp.Q * ps.x_fixed;
    r.constant += 0.5 * ps.x_fixed.dot(Qx_fixed);
    for (int k = 0; k < nr; ++k) r.c[k] += Qx_fixed[ps.free_vars[static_cast<std::size_t>(k)]];
    for (int j = 0; j < qp.Q.outerSize(); ++j) {
      const int cj = new_index[static_cast<std::size_t>(j)];
      if (cj < 0) continue;
      for (SparseMatrix::InnerIterator it(qp.Q, j); it; ++it) {
        const int ri = new_index[static_cast<std::size_t>(it.row())];
        if (ri >= 0) trip.emplace_back(ri, cj, it.value());
      }
    }
    r.Q.resize(nr, nr);
    r.Q.setFromTriplets(trip.begin(), trip.end());
  }
  auto assemble = [&](const std::vector<const SparseRow*>& rows, SparseMatrix& A, VectorXd& rhs) {
    std::vector<Triplet> trip;
    rhs.resize(static_cast<int>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double b = rows[i]->rhs;
      for (std::size_t k = 0; k < rows[i]->idx.size(); ++k) {
        const int j = rows[i]->idx[k];
        const int nj = new_index[static_cast<std::size_t>(j)];
        if (nj < 0)
          b -= rows[i]->val[k] * ps.x_fixed[j];
        else
          trip.emplace_back(static_cast<int>(i), nj, rows[i]->val[k]);
      }
      rhs[static_cast<int>(i)] = b;
    }
    A.resize(static_cast<int>(rows.size()), nr);
    A.setFromTriplets(trip.begin(), trip.end());
  };
  std::vector<const SparseRow*> eqs, ins;
  for (std::size_t i = 0; i < eq_rows.size(); ++i)
    if (eq_alive[i]) eqs.push_back(&eq_rows[i]);
  for (const auto& m : merged_eq) eqs.push_back(&m);
  for (std::size_t i = 0; i < in_rows.size(); ++i)
    if (in_alive[i]) ins.push_back(&in_rows[i]);
  assemble(eqs, r.E, r.d);
  assemble(ins, r.G, r.h);
  return ps;
}

inline double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Primal-dual interior point method (Mehrotra predictor-corrector) on a
/// problem without fixed variables.
class InteriorPoint {
 public:
  InteriorPoint(const QpProblem& qp, const QpSettings& set) : qp_(qp), set_(set) {}

  QpSolution solve() {
    setup();
    QpSolution sol;
    if (n_ == 0) {
      sol.x = VectorXd::Zero(0);
      sol.iterations = 0;
      const bool ok = (qp_.d.size() == 0 || inf_norm(qp_.d) <= 1e-9) &&
                      (qp_.h.size() == 0 || qp_.h.minCoeff() >= -1e-9);
      sol.status = ok ? QpStatus::optimal : QpStatus::infeasible;
      sol.objective = qp_.constant;
      sol.kkt = {0.0, 0.0, 0.0};
      return sol;
    }
    initial_point();
    // Near the solution the condensed system loses accuracy; keep the best
    // iterate and stop once it has not improved for a while.
    KktResiduals best_res;
    VectorXd best_x, best_y, best_s, best_l;
    int since_best = 0;
    for (int it = 0; it < set_.max_iter; ++it) {
      sol.iterations = it;
      const KktResiduals res = residuals();
      if (res.max() < best_res.max()) {
        best_res = res;
        best_x = x_, best_y = y_, best_s = s_, best_l = lam_;
        since_best = 0;
      } else if (++since_best > 8) {
        break;
      }
      if (res.max() <= set_.target_tolerance) break;
      if (certificate_of_infeasibility()) {
        sol.status = QpStatus::infeasible;
        finish(sol, res);
        return sol;
      }
      if (!step()) break;
    }
    if (best_x.size() == 0 || residuals().max() < best_res.max()) {
      best_res = residuals();
    } else {
      x_ = best_x, y_ = best_y, s_ = best_s, lam_ = best_l;
    }
    const KktResiduals res = best_res;
    sol.status = res.max() <= set_.tolerance ? QpStatus::optimal : QpStatus::max_iter;
    if (sol.status == QpStatus::max_iter && certificate_of_infeasibility()) sol.status = QpStatus::infeasible;
    finish(sol, res);
    return sol;
  }

 private:
  // Scaled data. Inequalities are [G; -I_L; I_U] x <= [h; -l_L; u_U].
  void setup() {
    reg_ = set_.regularization;
    n_ = qp_.num_variables();
    me_ = static_cast<int>(qp_.E.rows());
    mg_ = static_cast<int>(qp_.G.rows());
    low_.clear();
    up_.clear();
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(qp_.lb[j])) low_.push_back(j);
      if (std::isfinite(qp_.ub[j])) up_.push_back(j);
    }
    m_ = mg_ + static_cast<int>(low_.size() + up_.size());

    // Centre boxed variables so iterates stay of the order of the box width.
    shift_ = VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      const double l = qp_.lb[j], u = qp_.ub[j];
      if (std::isfinite(l) && std::isfinite(u))
        shift_[j] = 0.5 * (l + u);
      else if (std::isfinite(l))
        shift_[j] = std::max(l, 0.0);
      else if (std::isfinite(u))
        shift_[j] = std::min(u, 0.0);
    }
    const VectorXd c_sh = qp_.c + qp_.Q * shift_;
    const VectorXd d_sh = qp_.d - qp_.E * shift_;
    const VectorXd h_sh = qp_.h - qp_.G * shift_;

    // Ruiz equilibration of [Q A'; A 0].
    D_ = VectorXd::Ones(n_);
    RE_ = VectorXd::Ones(me_);
    RG_ = VectorXd::Ones(mg_);
    SparseMatrix Q = qp_.Q, E = qp_.E, G = qp_.G;
    for (int iter = 0; iter < set_.ruiz_iterations; ++iter) {
      VectorXd col = VectorXd::Zero(n_);
      VectorXd rowE = VectorXd::Zero(me_), rowG = VectorXd::Zero(mg_);
      auto col_max = [&](const SparseMatrix& A, VectorXd* rows) {
        for (int j = 0; j < A.outerSize(); ++j)
          for (SparseMatrix::InnerIterator it(A, j); it; ++it) {
            const double a = std::abs(it.value());
            col[j] = std::max(col[j], a);
            if (rows) (*rows)[it.row()] = std::max((*rows)[it.row()], a);
          }
      };
      col_max(Q, nullptr);
      col_max(E, &rowE);
      col_max(G, &rowG);
      VectorXd dc(n_), de(me_), dg(mg_);
      for (int j = 0; j < n_; ++j) dc[j] = col[j] > 1e-12 ? 1.0 / std::sqrt(col[j]) : 1.0;
      for (int i = 0; i < me_; ++i) de[i] = rowE[i] > 1e-12 ? 1.0 / std::sqrt(rowE[i]) : 1.0;
      for (int i = 0; i < mg_; ++i) dg[i] = rowG[i] > 1e-12 ? 1.0 / std::sqrt(rowG[i]) : 1.0;
      Q = dc.asDiagonal() * Q * dc.asDiagonal();
      E = de.asDiagonal() * E * dc.asDiagonal();
      G = dg.asDiagonal() * G * dc.asDiagonal();
      D_ = D_.cwiseProduct(dc);
      RE_ = RE_.cwiseProduct(de);
      RG_ = RG_.cwiseProduct(dg);
    }
    VectorXd q = D_.cwiseProduct(c_sh);
    double qnorm = 0.0;
    for (int j = 0; j < Q.outerSize(); ++j) {
      double cm = 0.0;
      for (SparseMatrix::InnerIterator it(Q, j); it; ++it) cm = std::max(cm, std::abs(it.value()));
      qnorm += cm;
    }
    qnorm = n_ > 0 ? qnorm / n_ : 0.0;
    sigma_ = 1.0 / std::max({1e-6, qnorm, inf_norm(q)});
    sigma_ = std::min(sigma_, 1e6);
    Qs_ = sigma_ * Q;
    qs_ = sigma_ * q;
    Es_ = E;
    Gs_ = G;
    Gst_ = G.transpose();
    Est_ = E.transpose();
    bs_ = RE_.cwiseProduct(d_sh);
    ds_.resize(m_);
    ds_.head(mg_) = RG_.cwiseProduct(h_sh);
    for (std::size_t k = 0; k < low_.size(); ++k) ds_[mg_ + static_cast<int>(k)] = -(qp_.lb[low_[k]] - shift_[low_[k]]) / D_[low_[k]];
    for (std::size_t k = 0; k < up_.size(); ++k)
      ds_[mg_ + static_cast<int>(low_.size() + k)] = (qp_.ub[up_[k]] - shift_[up_[k]]) / D_[up_[k]];

    // Uniform primal scaling x = tau * x': keeps primal and dual iterates of
    // comparable size. Duals are unaffected.
    tau_ = std::clamp(std::max(inf_norm(bs_), inf_norm(ds_)), 1.0, 1e12);
    Qs_ *= tau_;
    bs_ /= tau_;
    ds_ /= tau_;

    // Quasi-definite KKT pattern (upper triangle):
    //   [Q + D_B   E'     G'      ]
    //   [E        -reg    0       ]
    //   [G         0     -1/W_G   ]
    // Bound rows are condensed into the diagonal D_B.
    nk_ = n_ + me_ + mg_;
    std::vector<Triplet> trip;
    for (int j = 0; j < Qs_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(Qs_, j); it; ++it)
        if (it.row() <= j) trip.emplace_back(it.row(), j, 0.0);
    for (int j = 0; j < nk_; ++j) trip.emplace_back(j, j, 0.0);
    for (int j = 0; j < Es_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(Es_, j); it; ++it) trip.emplace_back(j, n_ + it.row(), 0.0);
    for (int j = 0; j < Gs_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(Gs_, j); it; ++it) trip.emplace_back(j, n_ + me_ + it.row(), 0.0);
    kkt_.resize(nk_, nk_);
    kkt_.setFromTriplets(trip.begin(), trip.end());
    kkt_.makeCompressed();
    ldlt_.analyzePattern(kkt_);
  }

  VectorXd C_times(const VectorXd& x) const {
    VectorXd r(m_);
    if (mg_ > 0) r.head(mg_) = Gs_ * x;
    for (std::size_t k = 0; k < low_.size(); ++k) r[mg_ + static_cast<int>(k)] = -x[low_[k]];
    for (std::size_t k = 0; k < up_.size(); ++k) r[mg_ + static_cast<int>(low_.size() + k)] = x[up_[k]];
    return r;
  }

  VectorXd Ct_times(const VectorXd& v) const {
    VectorXd r = VectorXd::Zero(n_);
    if (mg_ > 0) r = Gst_ * v.head(mg_);
    for (std::size_t k = 0; k < low_.size(); ++k) r[low_[k]] -= v[mg_ + static_cast<int>(k)];
    for (std::size_t k = 0; k < up_.size(); ++k) r[up_[k]] += v[mg_ + static_cast<int>(low_.size() + k)];
    return r;
  }

  // Q plus the condensed bound weights.
  VectorXd H_times(const VectorXd& x) const {
    VectorXd r = Qs_ * x;
    for (std::size_t k = 0; k < low_.size(); ++k) r[low_[k]] += W_[mg_ + static_cast<int>(k)] * x[low_[k]];
    for (std::size_t k = 0; k < up_.size(); ++k)
      r[up_[k]] += W_[mg_ + static_cast<int>(low_.size() + k)] * x[up_[k]];
    return r;
  }

  void factorize() {
    VectorXd diag = VectorXd::Constant(n_, reg_);
    for (std::size_t k = 0; k < low_.size(); ++k) diag[low_[k]] += W_[mg_ + static_cast<int>(k)];
    for (std::size_t k = 0; k < up_.size(); ++k) diag[up_[k]] += W_[mg_ + static_cast<int>(low_.size() + k)];
    for (int k = 0; k < kkt_.nonZeros(); ++k) kkt_.valuePtr()[k] = 0.0;
    for (int j = 0; j < Qs_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(Qs_, j); it; ++it)
        if (it.row() <= j) kkt_.coeffRef(it.row(), j) += it.value();
    for (int j = 0; j < n_; ++j) kkt_.coeffRef(j, j) += diag[j];
    for (int j = 0; j < Es_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(Es_, j); it; ++it) kkt_.coeffRef(j, n_ + it.row()) = it.value();
    for (int j = 0; j < Gs_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(Gs_, j); it; ++it) kkt_.coeffRef(j, n_ + me_ + it.row()) = it.value();
    for (int i = 0; i < me_; ++i) kkt_.coeffRef(n_ + i, n_ + i) = -reg_;
    for (int i = 0; i < mg_; ++i) kkt_.coeffRef(n_ + me_ + i, n_ + me_ + i) = -1.0 / W_[i] - reg_;
    ldlt_.factorize(kkt_);
  }

  // Solves the augmented system for (dx, dy, dl_G) with iterative refinement
  // on the unregularised operator.
  void kkt_solve(const VectorXd& r1, const VectorXd& r2, const VectorXd& r3, VectorXd& dx, VectorXd& dy,
                 VectorXd& dg) const {
    VectorXd rhs(nk_);
    rhs << r1, r2, r3;
    VectorXd sol = ldlt_.solve(rhs);
    const VectorXd winv = W_.head(mg_).cwiseInverse();
    for (int k = 0; k < set_.refinement_steps; ++k) {
      const VectorXd x = sol.head(n_);
      const VectorXd y = sol.segment(n_, me_);
      const VectorXd g = sol.tail(mg_);
      VectorXd res(nk_);
      res.head(n_) = r1 - H_times(x) - Est_ * y - Gst_ * g;
      res.segment(n_, me_) = r2 - Es_ * x;
      res.tail(mg_) = r3 - Gs_ * x + winv.cwiseProduct(g);
      if (inf_norm(res) <= 1e-15 * inf_norm(rhs)) break;
      sol += ldlt_.solve(res);
    }
    dx = sol.head(n_);
    dy = sol.segment(n_, me_);
    dg = sol.tail(mg_);
  }

  void initial_point() {
    W_ = VectorXd::Ones(m_);
    factorize();
    VectorXd dx, dy, dg;
    VectorXd r1 = -qs_;
    for (std::size_t k = 0; k < low_.size(); ++k) r1[low_[k]] -= ds_[mg_ + static_cast<int>(k)];
    for (std::size_t k = 0; k < up_.size(); ++k) r1[up_[k]] += ds_[mg_ + static_cast<int>(low_.size() + k)];
    kkt_solve(r1, bs_, ds_.head(mg_), dx, dy, dg);
    x_ = dx;
    y_ = dy;
    VectorXd r = ds_ - C_times(x_);  // slack of the least-squares point
    s_ = r;
    lam_ = -r;
    const double shift_s = s_.size() ? -s_.minCoeff() : 0.0;
    const double shift_l = lam_.size() ? -lam_.minCoeff() : 0.0;
    if (shift_s >= 0.0) s_.array() += 1.0 + shift_s;
    if (shift_l >= 0.0) lam_.array() += 1.0 + shift_l;
    s_ = s_.cwiseMax(1e-4);
    lam_ = lam_.cwiseMax(1e-4);
  }

  static double max_step(const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
      if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
  }

  bool step() {
    const VectorXd rd = Qs_ * x_ + qs_ + Est_ * y_ + Ct_times(lam_);
    const VectorXd re = Es_ * x_ - bs_;
    const VectorXd rc = C_times(x_) + s_ - ds_;
    const double mu = m_ > 0 ? s_.dot(lam_) / m_ : 0.0;

    W_ = lam_.cwiseQuotient(s_);
    factorize();
    // Dependent equality rows make the quasi-definite system singular; retry
    // with stronger regularization, refinement recovers the accuracy.
    while (ldlt_.info() != Eigen::Success && reg_ < 1e-4) {
      reg_ *= 100.0;
      factorize();
    }
    if (ldlt_.info() != Eigen::Success) return false;

    auto direction = [&](const VectorXd& t, VectorXd& dx, VectorXd& dy, VectorXd& ds, VectorXd& dl) {
      const VectorXd tmp = (t + lam_.cwiseProduct(rc)).cwiseQuotient(s_);
      VectorXd r1 = -rd;
      for (std::size_t k = 0; k < low_.size(); ++k) r1[low_[k]] += tmp[mg_ + static_cast<int>(k)];
      for (std::size_t k = 0; k < up_.size(); ++k) r1[up_[k]] -= tmp[mg_ + static_cast<int>(low_.size() + k)];
      const VectorXd r3 = -rc.head(mg_) - (t.head(mg_)).cwiseQuotient(lam_.head(mg_));
      VectorXd dg;
      kkt_solve(r1, -re, r3, dx, dy, dg);
      const VectorXd Cdx = C_times(dx);
      ds = -rc - Cdx;
      dl = tmp + W_.cwiseProduct(Cdx);
      dl.head(mg_) = dg;
    };

    VectorXd dx, dy, ds, dl;
    VectorXd t = -s_.cwiseProduct(lam_);
    direction(t, dx, dy, ds, dl);
    if (m_ > 0) {
      const double a_aff = std::min(max_step(s_, ds), max_step(lam_, dl));
      const double mu_aff = (s_ + a_aff * ds).dot(lam_ + a_aff * dl) / m_;
      const double sig = std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);
      t += -ds.cwiseProduct(dl) + VectorXd::Constant(m_, sig * mu);
      direction(t, dx, dy, ds, dl);
    }
    double alpha = 1.0;
    if (m_ > 0) alpha = std::min(1.0, 0.995 * std::min(max_step(s_, ds), max_step(lam_, dl)));
    if (!std::isfinite(alpha) || !dx.allFinite()) return false;
    x_ += alpha * dx;
    y_ += alpha * dy;
    s_ += alpha * ds;
    lam_ += alpha * dl;
    s_ = s_.cwiseMax(1e-300);
    lam_ = lam_.cwiseMax(1e-300);
    return true;
  }

  // Unscaled iterates on the (reduced) problem.
  VectorXd x_orig() const { return shift_ + tau_ * D_.cwiseProduct(x_); }

  KktResiduals residuals() const {
    KktResiduals r;
    const VectorXd x = x_orig();
    const VectorXd y = RE_.cwiseProduct(y_) / sigma_;
    const VectorXd lg = RG_.cwiseProduct(lam_.head(mg_)) / sigma_;
    VectorXd zb = VectorXd::Zero(n_);
    for (std::size_t k = 0; k < low_.size(); ++k)
      zb[low_[k]] -= lam_[mg_ + static_cast<int>(k)] / (D_[low_[k]] * sigma_);
    for (std::size_t k = 0; k < up_.size(); ++k)
      zb[up_[k]] += lam_[mg_ + static_cast<int>(low_.size() + k)] / (D_[up_[k]] * sigma_);

    const VectorXd Qx = qp_.Q * x;
    const VectorXd Ety = qp_.E.transpose() * y;
    const VectorXd Gtl = qp_.G.transpose() * lg;
    const VectorXd stat = Qx + qp_.c + Ety + Gtl + zb;
    r.stationarity = inf_norm(stat) /
                     (1.0 + std::max({inf_norm(Qx), inf_norm(qp_.c), inf_norm(Ety), inf_norm(Gtl), inf_norm(zb)}));

    double primal = 0.0;
    if (me_ > 0) {
      const VectorXd Ex = qp_.E * x;
      primal = std::max(primal, inf_norm(Ex - qp_.d) / (1.0 + std::max(inf_norm(Ex), inf_norm(qp_.d))));
    }
    if (mg_ > 0) {
      const VectorXd Gx = qp_.G * x;
      primal = std::max(primal, inf_norm((Gx - qp_.h).cwiseMax(0.0)) / (1.0 + std::max(inf_norm(Gx), inf_norm(qp_.h))));
    }
    double bv = 0.0;
    for (int j : low_) bv = std::max(bv, qp_.lb[j] - x[j]);
    for (int j : up_) bv = std::max(bv, x[j] - qp_.ub[j]);
    primal = std::max(primal, bv / (1.0 + inf_norm(x)));
    r.primal = primal;

    const double gap = m_ > 0 ? tau_ * s_.dot(lam_) / sigma_ : 0.0;
    const double obj = qp_.objective(x);
    r.complementarity = std::abs(gap) / (1.0 + std::abs(obj));
    return r;
  }

  // Farkas ray: E'y + C'lam ~ 0 with b'y + d'lam < 0 along exploding duals.
  bool certificate_of_infeasibility() const {
    const double scale = std::max(inf_norm(y_), inf_norm(lam_));
    if (!(scale > 1e6)) return false;
    const VectorXd yh = y_ / scale, lh = lam_ / scale;
    const double ray = inf_norm(Est_ * yh + Ct_times(lh));
    const double value = bs_.dot(yh) + ds_.dot(lh);
    return ray < 1e-6 && value < -1e-6;
  }

  void finish(QpSolution& sol, const KktResiduals& res) const {
    sol.x = x_orig();
    sol.kkt = res;
    sol.objective = sol.status == QpStatus::infeasible ? kInf : qp_.objective(sol.x);
  }

  const QpProblem& qp_;
  QpSettings set_;
  int n_ = 0, me_ = 0, mg_ = 0, m_ = 0, nk_ = 0;
  std::vector<int> low_, up_;
  VectorXd D_, RE_, RG_, shift_;
  double sigma_ = 1.0;
  double tau_ = 1.0;
  double reg_ = 1e-11;
  SparseMatrix Qs_, Es_, Gs_, Gst_, Est_;
  VectorXd qs_, bs_, ds_;
  SparseMatrix kkt_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper> ldlt_;
  VectorXd x_, y_, s_, lam_, W_;
};

}  // namespace qp_detail

/// Solves a convex QP with a presolve (fixed variables, singleton rows,
/// opposing row pairs) followed by a primal-dual interior point method.
///
/// KKT residuals refer to the presolved problem; the returned x is complete.
inline QpSolution solve_qp(const QpProblem& qp, const QpSettings& set = {}) {
  qp.check_dimensions();
  qp_detail::Presolved ps = qp_detail::presolve(qp, set.presolve);
  QpSolution sol;
  if (ps.infeasible) {
    sol.status = QpStatus::infeasible;
    sol.x = qp.lb.cwiseMax(-1e300).cwiseMin(qp.ub);
    return sol;
  }
  qp_detail::InteriorPoint ipm(ps.reduced, set);
  QpSolution red = ipm.solve();
  sol.status = red.status;
  sol.kkt = red.kkt;
  sol.iterations = red.iterations;
  sol.x = ps.x_fixed;
  for (std::size_t k = 0; k < ps.free_vars.size(); ++k) sol.x[ps.free_vars[k]] = red.x[static_cast<int>(k)];
  sol.objective = sol.status == QpStatus::infeasible ? kInf : qp.objective(sol.x);
  return sol;
}

}  // namespace freewheel
