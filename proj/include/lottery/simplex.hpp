#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lottery/errors.hpp"

namespace lottery {

// minimize objective' x  s.t.  a_ub x <= b_ub,  a_eq x = b_eq,  x >= lower.
//
// tie_breakers are secondary objectives minimized in order over the optimal
// face of the previous one; they make the reported vertex deterministic.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lower;
  std::vector<Eigen::VectorXd> tie_breakers;
  std::vector<std::string> variable_names;
  std::vector<std::string> ub_labels;
  std::vector<std::string> eq_labels;

  Eigen::Index variables() const { return objective.size(); }

  void validate() const {
    const Eigen::Index n = variables();
    if (n == 0) throw ValidationError("LP has no variables");
    if (a_ub.rows() != b_ub.size() || (a_ub.rows() > 0 && a_ub.cols() != n)) {
      throw ValidationError("LP inequality block has inconsistent dimensions");
    }
    if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n)) {
      throw ValidationError("LP equality block has inconsistent dimensions");
    }
    if (lower.size() != n) throw ValidationError("LP lower-bound vector has wrong length");
    for (const auto& t : tie_breakers) {
      if (t.size() != n) throw ValidationError("LP tie-breaker has wrong length");
    }
    if (!objective.allFinite() || !a_ub.allFinite() || !b_ub.allFinite() || !a_eq.allFinite() ||
        !b_eq.allFinite() || !lower.allFinite()) {
      throw ValidationError("LP data must be finite");
    }
  }

  std::string variable_name(Eigen::Index j) const {
    if (static_cast<std::size_t>(j) < variable_names.size()) return variable_names[j];
    return "x" + std::to_string(j);
  }

  // Plain-text rendering for debugging.
  std::string dump() const {
    std::ostringstream os;
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      return std::string(buf);
    };
    auto row = [&](const Eigen::VectorXd& r) {
      std::string out;
      for (Eigen::Index j = 0; j < r.size(); ++j) {
        if (r[j] == 0.0) continue;
        out += (r[j] < 0.0 ? " - " : (out.empty() ? " " : " + ")) + num(std::abs(r[j])) + "*" + variable_name(j);
      }
      return out.empty() ? std::string(" 0") : out;
    };
    os << "minimize" << row(objective) << "\n";
    for (Eigen::Index i = 0; i < a_ub.rows(); ++i) {
      const std::string label = static_cast<std::size_t>(i) < ub_labels.size() ? ub_labels[i] : "ub" + std::to_string(i);
      os << "  " << label << ":" << row(a_ub.row(i).transpose()) << " <= " << num(b_ub[i]) << "\n";
    }
    for (Eigen::Index i = 0; i < a_eq.rows(); ++i) {
      const std::string label = static_cast<std::size_t>(i) < eq_labels.size() ? eq_labels[i] : "eq" + std::to_string(i);
      os << "  " << label << ":" << row(a_eq.row(i).transpose()) << " = " << num(b_eq[i]) << "\n";
    }
    for (Eigen::Index j = 0; j < lower.size(); ++j) os << "  " << variable_name(j) << " >= " << num(lower[j]) << "\n";
    return os.str();
  }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal:
      return "optimal";
    case LpStatus::infeasible:
      return "infeasible";
    case LpStatus::unbounded:
      return "unbounded";
  }
  return "unknown";
}

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

struct SimplexOptions {
  double tolerance = 1e-9;
  // Pivots allowed per phase; 0 means 10 (m + n).
  int max_iterations = 0;
};

namespace detail {

// Dense tableau over y = x - lower >= 0, one slack per inequality and one
// artificial per row that lacks a feasible starting basic column. Pivoting
// follows Bland's rule, so degenerate cycling cannot occur.
class Tableau {
 public:
  Tableau(const LinearProgram& lp, const SimplexOptions& opts) : tol_(opts.tolerance) {
    n_ = lp.variables();
    const Eigen::Index m_ub = lp.a_ub.rows();
    const Eigen::Index m_eq = lp.a_eq.rows();
    m_ = m_ub + m_eq;
    slack0_ = n_;
    art0_ = n_ + m_ub;

    Eigen::MatrixXd a(m_, n_);
    Eigen::VectorXd b(m_);
    if (m_ub > 0) {
      a.topRows(m_ub) = lp.a_ub;
      b.head(m_ub) = lp.b_ub - lp.a_ub * lp.lower;
    }
    if (m_eq > 0) {
      a.bottomRows(m_eq) = lp.a_eq;
      b.tail(m_eq) = lp.b_eq - lp.a_eq * lp.lower;
    }

    // Rows needing an artificial: equalities, and inequalities with b < 0.
    std::vector<Eigen::Index> art_rows;
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (i >= m_ub || b[i] < 0.0) art_rows.push_back(i);
    }
    cols_ = art0_ + static_cast<Eigen::Index>(art_rows.size());
    t_ = Eigen::MatrixXd::Zero(m_, cols_ + 1);
    basis_.assign(m_, -1);
    for (Eigen::Index i = 0; i < m_; ++i) {
      t_.row(i).head(n_) = a.row(i);
      if (i < m_ub) t_(i, slack0_ + i) = 1.0;
      t_(i, cols_) = b[i];
    }
    for (std::size_t k = 0; k < art_rows.size(); ++k) {
      const Eigen::Index i = art_rows[k];
      if (t_(i, cols_) < 0.0) t_.row(i) *= -1.0;
      t_(i, art0_ + static_cast<Eigen::Index>(k)) = 1.0;
      basis_[i] = art0_ + static_cast<Eigen::Index>(k);
    }
    for (Eigen::Index i = 0; i < m_ub; ++i) {
      if (basis_[i] < 0) basis_[i] = slack0_ + i;
    }
    allowed_.assign(cols_, true);
    cap_ = opts.max_iterations > 0 ? opts.max_iterations : static_cast<int>(10 * (m_ + n_));
  }

  // Phase 1. Returns false if the LP is infeasible.
  bool find_feasible_basis() {
    if (cols_ == art0_) return true;
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols_);
    cost.tail(cols_ - art0_).setOnes();
    if (!optimize(cost)) throw SolverFailure("simplex phase 1 reported unbounded");
    double infeasibility = 0.0;
    double scale = 1.0;
    for (Eigen::Index i = 0; i < m_; ++i) {
      scale = std::max(scale, std::abs(t_(i, cols_)));
      if (basis_[i] >= art0_) infeasibility += t_(i, cols_);
    }
    if (infeasibility > tol_ * scale) return false;

    // Pivot remaining (zero-valued) artificials out; rows where that is
    // impossible are redundant and dropped.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (basis_[i] >= art0_) {
        Eigen::Index col = -1;
        for (Eigen::Index j = 0; j < art0_; ++j) {
          if (std::abs(t_(i, j)) > tol_) {
            col = j;
            break;
          }
        }
        if (col >= 0) pivot(i, col);
      }
      if (basis_[i] < art0_) keep.push_back(i);
    }
    if (static_cast<Eigen::Index>(keep.size()) != m_) {
      Eigen::MatrixXd t(static_cast<Eigen::Index>(keep.size()), cols_ + 1);
      std::vector<Eigen::Index> basis;
      for (std::size_t r = 0; r < keep.size(); ++r) {
        t.row(static_cast<Eigen::Index>(r)) = t_.row(keep[r]);
        basis.push_back(basis_[keep[r]]);
      }
      t_ = std::move(t);
      basis_ = std::move(basis);
      m_ = static_cast<Eigen::Index>(keep.size());
    }
    for (Eigen::Index j = art0_; j < cols_; ++j) allowed_[j] = false;
    return true;
  }

  // Minimizes cost' y over the current face. Returns false when unbounded.
  // Afterwards, columns with positive reduced cost are frozen at zero so a
  // later objective is optimized over this optimal face only.
  bool optimize(const Eigen::VectorXd& cost, bool freeze = false) {
    int it = 0;
    for (;;) {
      const Eigen::VectorXd d = reduced_costs(cost);
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < cols_; ++j) {
        if (allowed_[j] && !is_basic(j) && d[j] < -tol_) {
          enter = j;
          break;
        }
      }
      if (enter < 0) {
        if (freeze) {
          for (Eigen::Index j = 0; j < cols_; ++j) {
            if (!is_basic(j) && d[j] > tol_) allowed_[j] = false;
          }
        }
        return true;
      }
      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double p = t_(i, enter);
        if (p <= tol_) continue;
        const double ratio = t_(i, cols_) / p;
        // Smallest ratio; near-ties go to the lowest basic index (Bland).
        if (leave < 0 || ratio < best - tol_) {
          best = ratio;
          leave = i;
        } else if (ratio <= best + tol_ && basis_[i] < basis_[leave]) {
          best = std::min(best, ratio);
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      ++iterations_;
      if (++it > cap_) throw SolverFailure("simplex exceeded " + std::to_string(cap_) + " pivots");
    }
  }

  Eigen::VectorXd primal() const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (basis_[i] < n_) y[basis_[i]] = std::max(0.0, t_(i, cols_));
    }
    return y;
  }

  Eigen::VectorXd extend(const Eigen::VectorXd& structural) const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(cols_);
    c.head(n_) = structural;
    return c;
  }

  int iterations() const noexcept { return iterations_; }

 private:
  bool is_basic(Eigen::Index j) const {
    for (Eigen::Index b : basis_) {
      if (b == j) return true;
    }
    return false;
  }

  Eigen::VectorXd reduced_costs(const Eigen::VectorXd& cost) const {
    Eigen::VectorXd d = cost;
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double cb = cost[basis_[i]];
      if (cb != 0.0) d -= cb * t_.row(i).head(cols_).transpose();
    }
    return d;
  }

  void pivot(Eigen::Index r, Eigen::Index c) {
    t_.row(r) /= t_(r, c);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (i != r && t_(i, c) != 0.0) t_.row(i) -= t_(i, c) * t_.row(r);
    }
    basis_[r] = c;
  }

  double tol_;
  Eigen::Index n_ = 0, m_ = 0, cols_ = 0, slack0_ = 0, art0_ = 0;
  Eigen::MatrixXd t_;
  std::vector<Eigen::Index> basis_;
  std::vector<bool> allowed_;
  int cap_ = 0;
  int iterations_ = 0;
};

}  // namespace detail

// Dense two-phase simplex with Bland's rule.
inline LpResult solve_simplex(const LinearProgram& lp, const SimplexOptions& opts = {}) {
  lp.validate();
  detail::Tableau tab(lp, opts);
  LpResult out;
  if (!tab.find_feasible_basis()) {
    out.status = LpStatus::infeasible;
    out.iterations = tab.iterations();
    return out;
  }
  if (!tab.optimize(tab.extend(lp.objective), true)) {
    out.status = LpStatus::unbounded;
    out.iterations = tab.iterations();
    return out;
  }
  for (const auto& t : lp.tie_breakers) {
    if (!tab.optimize(tab.extend(t), true)) break;  // unbounded secondary: keep current vertex
  }
  out.status = LpStatus::optimal;
  out.x = tab.primal() + lp.lower;
  out.objective = lp.objective.dot(out.x);
  out.iterations = tab.iterations();
  return out;
}

}  // namespace lottery
