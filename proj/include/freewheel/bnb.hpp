#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "freewheel/ocp.hpp"
#include "freewheel/qp.hpp"

namespace freewheel {

enum class BnbStatus { optimal, gap_limit, node_limit, infeasible };

inline const char* to_string(BnbStatus s) {
  switch (s) {
    case BnbStatus::optimal: return "optimal";
    case BnbStatus::gap_limit: return "gap_limit";
    case BnbStatus::node_limit: return "node_limit";
    case BnbStatus::infeasible: return "infeasible";
  }
  return "?";
}

struct BnbLimits {
  std::size_t max_nodes = 100000;
  /// Absolute fathoming gap [J]. Negative selects 1e-6 |incumbent| + 1e-3.
  double abs_gap = -1.0;
  double time_limit_s = std::numeric_limits<double>::infinity();
  double integrality_tol = 1e-6;
};

/// Default absolute optimality tolerance for a given incumbent objective.
inline double default_abs_gap(double incumbent) { return 1e-6 * std::abs(incumbent) + 1e-3; }

struct BnbReport {
  QpSolution incumbent;
  bool has_incumbent = false;
  std::size_t nodes_explored = 0;  ///< QP relaxations solved, heuristics included
  double best_bound = -kInf;
  double gap = kInf;
  BnbStatus status = BnbStatus::infeasible;
  bool time_limited = false;
  double elapsed_s = 0.0;
};

/// Integer pattern over the Boolean variables, 0/1 per entry.
using Pattern = std::vector<std::uint8_t>;

namespace bnb_detail {

struct Node {
  double bound;
  std::uint64_t order;
  std::vector<std::int8_t> fix;  ///< -1 free, 0 or 1 fixed
  QpSolution relax;
};

struct NodeCompare {
  bool operator()(const Node* a, const Node* b) const {
    if (a->bound != b->bound) return a->bound > b->bound;
    return a->order > b->order;
  }
};

}  // namespace bnb_detail

/// Branch-and-bound over the Boolean subset of a convex QP.
///
/// Best-bound-first search, most-fractional branching with lowest-index
/// ties, integrality tolerance from the limits. Candidate patterns (for
/// instance the shifted previous optimum) are evaluated before branching.
inline BnbReport solve_miqp(const QpProblem& qp, std::span<const int> bool_idx, const BnbLimits& lim = {},
                            std::span<const Pattern> hints = {}, const QpSettings& qset = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const std::size_t nb = bool_idx.size();
  BnbReport rep;

  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
  auto tol_for = [&](double inc) { return lim.abs_gap >= 0.0 ? lim.abs_gap : default_abs_gap(inc); };
  auto finish = [&](BnbStatus s) {
    rep.status = s;
    rep.elapsed_s = elapsed();
    if (rep.has_incumbent) rep.gap = rep.incumbent.objective - rep.best_bound;
    return rep;
  };

  QpProblem work = qp;
  auto solve_with = [&](const std::vector<std::int8_t>& fix) {
    for (std::size_t i = 0; i < nb; ++i) {
      const int j = bool_idx[i];
      work.lb[j] = fix[i] < 0 ? qp.lb[j] : static_cast<double>(fix[i]);
      work.ub[j] = fix[i] < 0 ? qp.ub[j] : static_cast<double>(fix[i]);
    }
    ++rep.nodes_explored;
    return solve_qp(work, qset);
  };

  auto offer = [&](const QpSolution& s) {
    if (s.status != QpStatus::optimal) return;
    if (!rep.has_incumbent || s.objective < rep.incumbent.objective) {
      rep.incumbent = s;
      rep.has_incumbent = true;
    }
  };

  std::set<Pattern> tried;
  auto try_pattern = [&](const Pattern& p) {
    if (p.size() != nb || !tried.insert(p).second) return;
    std::vector<std::int8_t> fix(p.begin(), p.end());
    offer(solve_with(fix));
  };

  if (nb == 0) {
    QpSolution s = solve_with({});
    if (s.status == QpStatus::infeasible) return finish(BnbStatus::infeasible);
    rep.best_bound = s.objective;
    offer(s);
    if (!rep.has_incumbent) return finish(BnbStatus::node_limit);
    return finish(BnbStatus::optimal);
  }

  const std::vector<std::int8_t> all_free(nb, -1);
  QpSolution root = solve_with(all_free);
  if (root.status == QpStatus::infeasible) return finish(BnbStatus::infeasible);
  rep.best_bound = root.objective;

  for (const Pattern& h : hints) try_pattern(h);
  try_pattern(Pattern(nb, 1));
  for (double thr : {0.5, 0.25, 0.75, 0.05, 0.95, 0.01, 1e-3}) {
    Pattern p(nb);
    for (std::size_t i = 0; i < nb; ++i) p[i] = root.x[bool_idx[i]] >= thr ? 1 : 0;
    try_pattern(p);
  }

  std::vector<std::unique_ptr<bnb_detail::Node>> storage;
  std::priority_queue<bnb_detail::Node*, std::vector<bnb_detail::Node*>, bnb_detail::NodeCompare> open;
  std::uint64_t order = 0;
  double pruned_bound = kInf;  // smallest bound discarded by the gap rule

  auto push = [&](std::vector<std::int8_t> fix, QpSolution relax, double parent_bound) {
    if (relax.status == QpStatus::infeasible) return;
    auto node = std::make_unique<bnb_detail::Node>();
    node->bound = std::max(relax.objective, parent_bound);
    node->order = order++;
    node->fix = std::move(fix);
    node->relax = std::move(relax);
    open.push(node.get());
    storage.push_back(std::move(node));
  };
  push(all_free, std::move(root), -kInf);

  bool limited = false;
  while (!open.empty()) {
    bnb_detail::Node* node = open.top();
    if (rep.has_incumbent && node->bound >= rep.incumbent.objective - tol_for(rep.incumbent.objective)) {
      // Best-first: every remaining node is at least as bad.
      while (!open.empty()) {
        pruned_bound = std::min(pruned_bound, open.top()->bound);
        open.pop();
      }
      break;
    }
    if (rep.nodes_explored >= lim.max_nodes || elapsed() > lim.time_limit_s) {
      limited = true;
      rep.time_limited = elapsed() > lim.time_limit_s;
      break;
    }
    open.pop();

    const VectorXd& x = node->relax.x;
    int branch = -1;
    double best_frac = -1.0;
    for (std::size_t i = 0; i < nb; ++i) {
      const double v = x[bool_idx[i]];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > lim.integrality_tol && frac > best_frac + 1e-12) {
        best_frac = frac;
        branch = static_cast<int>(i);
      }
    }
    if (branch < 0) {
      Pattern p(nb);
      for (std::size_t i = 0; i < nb; ++i) p[i] = x[bool_idx[i]] >= 0.5 ? 1 : 0;
      try_pattern(p);
      continue;
    }
    for (std::int8_t side : {std::int8_t{0}, std::int8_t{1}}) {
      std::vector<std::int8_t> fix = node->fix;
      fix[static_cast<std::size_t>(branch)] = side;
      QpSolution child = solve_with(fix);
      push(std::move(fix), std::move(child), node->bound);
    }
  }

  if (!rep.has_incumbent) {
    if (!limited) return finish(BnbStatus::infeasible);
    double b = kInf;
    auto copy = open;
    while (!copy.empty()) {
      b = std::min(b, copy.top()->bound);
      copy.pop();
    }
    rep.best_bound = std::max(rep.best_bound, b);
    return finish(BnbStatus::node_limit);
  }

  double bound = std::min(rep.incumbent.objective, pruned_bound);
  auto copy = open;
  while (!copy.empty()) {
    bound = std::min(bound, copy.top()->bound);
    copy.pop();
  }
  rep.best_bound = std::max(rep.best_bound, std::min(bound, rep.incumbent.objective));
  if (limited) return finish(BnbStatus::node_limit);
  const double gap = rep.incumbent.objective - rep.best_bound;
  if (gap <= default_abs_gap(rep.incumbent.objective)) return finish(BnbStatus::optimal);
  return finish(BnbStatus::gap_limit);
}

inline BnbReport solve_miqp(const OcpInstance& inst, const BnbLimits& lim = {}, std::span<const Pattern> hints = {},
                            const QpSettings& qset = {}) {
  return solve_miqp(inst.qp, inst.bool_idx, lim, hints, qset);
}

/// Boolean pattern of a solution, rounded.
inline Pattern pattern_of(const OcpInstance& inst, const VectorXd& x) {
  Pattern p(inst.bool_idx.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = x[inst.bool_idx[i]] >= 0.5 ? 1 : 0;
  return p;
}

}  // namespace freewheel
