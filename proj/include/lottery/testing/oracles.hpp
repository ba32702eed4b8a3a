#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "lottery/errors.hpp"
#include "lottery/grid.hpp"
#include "lottery/simplex.hpp"

// Independent reference computations used only by tests. None of them shares
// code paths with the implementations they check.
namespace lottery::testing {

// Minimum of an LP by enumerating every basic solution: choose n active
// constraints among inequalities and lower bounds (equalities always active),
// solve, keep feasible points. Requires a bounded feasible region and n <= 8.
inline std::optional<double> vertex_enumeration_minimum(const LinearProgram& lp, double tol = 1e-9) {
  const Eigen::Index n = lp.variables();
  if (n > 8) throw ValidationError("vertex enumeration oracle is limited to 8 variables");
  const Eigen::Index m_ub = lp.a_ub.rows();
  const Eigen::Index m_eq = lp.a_eq.rows();
  // Candidate rows a x <= b: inequalities, then -x_j <= -lower_j.
  Eigen::MatrixXd a(m_ub + n, n);
  Eigen::VectorXd b(m_ub + n);
  if (m_ub > 0) {
    a.topRows(m_ub) = lp.a_ub;
    b.head(m_ub) = lp.b_ub;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    a.row(m_ub + j) = -Eigen::RowVectorXd::Unit(n, j);
    b[m_ub + j] = -lp.lower[j];
  }
  const Eigen::Index pick = n - m_eq;
  if (pick < 0) throw ValidationError("more equalities than variables");
  const Eigen::Index pool = a.rows();
  std::optional<double> best;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pick));
  std::function<void(Eigen::Index, Eigen::Index)> choose = [&](Eigen::Index start, Eigen::Index depth) {
    if (depth == pick) {
      Eigen::MatrixXd sys(n, n);
      Eigen::VectorXd rhs(n);
      for (Eigen::Index k = 0; k < pick; ++k) {
        sys.row(k) = a.row(idx[static_cast<std::size_t>(k)]);
        rhs[k] = b[idx[static_cast<std::size_t>(k)]];
      }
      for (Eigen::Index k = 0; k < m_eq; ++k) {
        sys.row(pick + k) = lp.a_eq.row(k);
        rhs[pick + k] = lp.b_eq[k];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
      if (!lu.isInvertible()) return;
      const Eigen::VectorXd x = lu.solve(rhs);
      for (Eigen::Index r = 0; r < pool; ++r) {
        if (a.row(r).dot(x) > b[r] + tol * std::max(1.0, std::abs(b[r]))) return;
      }
      for (Eigen::Index r = 0; r < m_eq; ++r) {
        if (std::abs(lp.a_eq.row(r).dot(x) - lp.b_eq[r]) > tol * std::max(1.0, std::abs(lp.b_eq[r]))) return;
      }
      const double v = lp.objective.dot(x);
      if (!best || v < *best) best = v;
      return;
    }
    for (Eigen::Index r = start; r < pool; ++r) {
      idx[static_cast<std::size_t>(depth)] = r;
      choose(r + 1, depth + 1);
    }
  };
  choose(0, 0);
  return best;
}

// Central difference (f(x + h) - f(x - h)) / 2h.
template <class F>
double central_difference(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Branch flows on a radial network by path tracing: every bus's net injection
// travels to the slack along the unique tree path, so a branch carries the
// total injection of the subtree hanging below it. Positive means from -> to.
inline Eigen::VectorXd tree_path_flows(const GridCase& g, const Eigen::VectorXd& injection) {
  const std::size_t nb = g.buses.size();
  if (g.branches.size() + 1 != nb) throw ValidationError("path tracing needs a tree");
  std::map<int, std::size_t> index;
  for (std::size_t k = 0; k < nb; ++k) index[g.buses[k].id] = k;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(nb);  // (neighbor, branch)
  for (std::size_t l = 0; l < g.branches.size(); ++l) {
    const auto f = index.at(g.branches[l].from);
    const auto t = index.at(g.branches[l].to);
    adj[f].push_back({t, l});
    adj[t].push_back({f, l});
  }
  const std::size_t root = index.at(g.slack_bus());
  std::vector<std::size_t> order{root};
  std::vector<std::ptrdiff_t> parent(nb, -1), parent_branch(nb, -1);
  std::vector<bool> seen(nb, false);
  seen[root] = true;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t u = order[k];
    for (auto [v, l] : adj[u]) {
      if (seen[v]) continue;
      seen[v] = true;
      parent[v] = static_cast<std::ptrdiff_t>(u);
      parent_branch[v] = static_cast<std::ptrdiff_t>(l);
      order.push_back(v);
    }
  }
  if (order.size() != nb) throw ValidationError("tree is disconnected");
  std::vector<double> subtree(nb);
  for (std::size_t k = 0; k < nb; ++k) subtree[k] = injection[static_cast<Eigen::Index>(k)];
  Eigen::VectorXd flow = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.branches.size()));
  for (std::size_t k = order.size(); k-- > 1;) {
    const std::size_t v = order[k];
    const auto l = static_cast<std::size_t>(parent_branch[v]);
    // Subtree injection flows child -> parent.
    const bool child_is_from = index.at(g.branches[l].from) == v;
    flow[static_cast<Eigen::Index>(l)] = child_is_from ? subtree[v] : -subtree[v];
    subtree[static_cast<std::size_t>(parent[v])] += subtree[v];
  }
  return flow;
}

}  // namespace lottery::testing
