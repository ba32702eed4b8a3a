#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lottery/benefit.hpp"
#include "lottery/errors.hpp"
#include "lottery/game.hpp"
#include "lottery/numeric.hpp"
#include "lottery/simplex.hpp"

namespace lottery {

// Affine constraints A [s; R] <= b over investments s (N columns) and the
// reward R (last column).
class ConstraintSet {
 public:
  explicit ConstraintSet(std::size_t players) : players_(players), a_(0, static_cast<Eigen::Index>(players) + 1) {}

  ConstraintSet(Eigen::MatrixXd a, Eigen::VectorXd b, std::vector<std::string> labels)
      : players_(static_cast<std::size_t>(std::max<Eigen::Index>(a.cols() - 1, 0))),
        a_(std::move(a)),
        b_(std::move(b)),
        labels_(std::move(labels)) {
    if (a_.cols() < 2) throw ValidationError("constraint matrix needs N + 1 >= 2 columns");
    if (a_.rows() != b_.size()) throw ValidationError("constraint matrix and bound vector disagree in rows");
    if (!a_.allFinite() || !b_.allFinite()) throw ValidationError("constraint rows must be finite");
    const auto m = static_cast<std::size_t>(a_.rows());
    if (labels_.size() > m) throw ValidationError("more constraint labels than rows");
    for (auto i = labels_.size(); i < m; ++i) labels_.push_back("row" + std::to_string(i));
  }

  std::size_t players() const noexcept { return players_; }
  Eigen::Index rows() const noexcept { return a_.rows(); }
  bool empty() const noexcept { return a_.rows() == 0; }
  const Eigen::MatrixXd& matrix() const noexcept { return a_; }
  const Eigen::VectorXd& bounds() const noexcept { return b_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  void append(const Eigen::RowVectorXd& row, double bound, std::string label) {
    if (row.size() != a_.cols()) throw ValidationError("constraint row has wrong width for '" + label + "'");
    if (!row.allFinite() || !std::isfinite(bound)) throw ValidationError("constraint row '" + label + "' not finite");
    a_.conservativeResize(a_.rows() + 1, Eigen::NoChange);
    a_.row(a_.rows() - 1) = row;
    b_.conservativeResize(b_.size() + 1);
    b_[b_.size() - 1] = bound;
    labels_.push_back(std::move(label));
  }

  void append(const ConstraintSet& other) {
    if (other.players_ != players_) throw ValidationError("cannot merge constraint sets of different width");
    for (Eigen::Index i = 0; i < other.rows(); ++i) append(other.a_.row(i), other.b_[i], other.labels_[i]);
  }

  // A [s; R] - b; nonpositive entries are satisfied rows.
  Eigen::VectorXd evaluate(std::span<const double> s, double reward) const {
    if (s.size() != players_) throw ValidationError("constraint evaluation: investment vector has wrong length");
    Eigen::VectorXd x(a_.cols());
    for (std::size_t i = 0; i < players_; ++i) x[static_cast<Eigen::Index>(i)] = s[i];
    x[a_.cols() - 1] = reward;
    return a_ * x - b_;
  }

  // max(0, largest row excess), each row scaled by max(1, |b_row|).
  double max_violation(std::span<const double> s, double reward) const {
    const Eigen::VectorXd r = evaluate(s, reward);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) worst = std::max(worst, r[i] / std::max(1.0, std::abs(b_[i])));
    return worst;
  }

 private:
  std::size_t players_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  std::vector<std::string> labels_;
};

struct DesignProblem {
  LotteryInstance instance;
  ConstraintSet constraints;
  double alpha = 1.0;
  double reward_min = 1e-3;

  DesignProblem(LotteryInstance inst, ConstraintSet cons, double alpha_weight = 1.0, double r_min = 1e-3)
      : instance(std::move(inst)), constraints(std::move(cons)), alpha(alpha_weight), reward_min(r_min) {
    if (constraints.players() != instance.players()) {
      throw ValidationError("constraint set width does not match the number of players");
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be nonnegative");
    if (!(reward_min > 0.0) || !std::isfinite(reward_min)) throw ValidationError("reward_min must be positive");
  }

  double optimal_good() const { return instance.benefits().socially_optimal_good(); }
};

enum class IrEncoding { simplified, literal };

inline const char* to_string(IrEncoding e) { return e == IrEncoding::simplified ? "simplified" : "literal"; }

// One row per player enforcing U_i >= 0 at the reformulated equilibrium,
// expressed over (s, R) by substituting c_i = s_i - R h_i'(G*).
//   simplified:    c_i <= h_i(G*)            ->  s_i - h_i'(G*) R <= h_i(G*)
//   literal:       -(s_i - c_i + R h_i(G*) - R s_i) <= 0, divided by R > 0
//                                            ->  s_i <= h_i(G*) + h_i'(G*)
inline ConstraintSet individual_rationality_rows(const DesignProblem& p, IrEncoding enc = IrEncoding::simplified) {
  const auto& prof = p.instance.benefits();
  const double g = p.optimal_good();
  const std::size_t n = prof.size();
  ConstraintSet out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(n) + 1);
    row[static_cast<Eigen::Index>(i)] = 1.0;
    double bound = prof[i].value(g);
    if (enc == IrEncoding::simplified) {
      row[static_cast<Eigen::Index>(n)] = -prof[i].slope(g);
    } else {
      bound += prof[i].slope(g);
    }
    out.append(row, bound, "ir_" + std::to_string(i));
  }
  return out;
}

// LP over x = (R, c_1, ..., c_N): minimize R subject to sum c = G*, c >= 0,
// R >= reward_min and each row of A applied to [c + R grad_h(G*); R].
inline LinearProgram build_reformulation(const DesignProblem& p) {
  const auto& prof = p.instance.benefits();
  const Eigen::Index n = static_cast<Eigen::Index>(prof.size());
  const double g = p.optimal_good();
  Eigen::VectorXd grad(n);
  for (Eigen::Index i = 0; i < n; ++i) grad[i] = prof[static_cast<std::size_t>(i)].slope(g);

  LinearProgram lp;
  lp.objective = Eigen::VectorXd::Zero(n + 1);
  lp.objective[0] = 1.0;
  lp.lower = Eigen::VectorXd::Zero(n + 1);
  lp.lower[0] = p.reward_min;
  lp.a_eq = Eigen::MatrixXd::Zero(1, n + 1);
  lp.a_eq.row(0).tail(n).setOnes();
  lp.b_eq = Eigen::VectorXd::Constant(1, g);
  lp.eq_labels = {"perturbation_sum"};
  lp.variable_names.push_back("R");
  for (Eigen::Index i = 0; i < n; ++i) lp.variable_names.push_back("c" + std::to_string(i));

  const auto& a = p.constraints.matrix();
  lp.a_ub = Eigen::MatrixXd(a.rows(), n + 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const Eigen::RowVectorXd as = a.row(r).head(n);
    lp.a_ub(r, 0) = as.dot(grad) + a(r, n);
    lp.a_ub.row(r).tail(n) = as;
  }
  lp.b_ub = p.constraints.bounds();
  lp.ub_labels = p.constraints.labels();
  for (Eigen::Index i = 0; i < n; ++i) lp.tie_breakers.push_back(Eigen::VectorXd::Unit(n + 1, i + 1));
  return lp;
}

struct DesignSolution {
  LpStatus status = LpStatus::infeasible;
  double reward = 0.0;
  std::vector<double> perturbation;
  double objective = std::numeric_limits<double>::quiet_NaN();  // R + alpha G*
  std::vector<double> predicted_investments;                    // c_i + R h_i'(G*)
  std::vector<std::string> binding;
  int iterations = 0;

  bool optimal() const noexcept { return status == LpStatus::optimal; }
  DesignPoint point() const {
    if (!optimal()) throw SolverFailure(std::string("design is not optimal: ") + to_string(status));
    return DesignPoint(reward, perturbation);
  }
  double perturbation_sum() const {
    double s = 0.0;
    for (double c : perturbation) s += c;
    return s;
  }
  double total_investment() const {
    double s = 0.0;
    for (double x : predicted_investments) s += x;
    return s;
  }
};

// Relative slack below which a constraint row is reported as binding.
inline constexpr double kBindingTolerance = 1e-7;

inline std::vector<double> predicted_investments(const DesignProblem& p, double reward, std::span<const double> c) {
  const auto& prof = p.instance.benefits();
  const double g = p.optimal_good();
  std::vector<double> s(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) s[i] = c[i] + reward * prof[i].slope(g);
  return s;
}

inline DesignSolution solve_lp(const DesignProblem& p, const LinearProgram& lp, const SimplexOptions& opts = {}) {
  const LpResult r = solve_simplex(lp, opts);
  DesignSolution out;
  out.status = r.status;
  out.iterations = r.iterations;
  if (r.status != LpStatus::optimal) return out;
  const std::size_t n = p.instance.players();
  out.reward = r.x[0];
  out.perturbation.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.perturbation[i] = std::max(0.0, r.x[static_cast<Eigen::Index>(i) + 1]);
  out.objective = out.reward + p.alpha * p.optimal_good();
  out.predicted_investments = predicted_investments(p, out.reward, out.perturbation);
  const Eigen::VectorXd slack = p.constraints.evaluate(out.predicted_investments, out.reward);
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    if (slack[i] >= -kBindingTolerance * std::max(1.0, std::abs(p.constraints.bounds()[i]))) {
      out.binding.push_back(p.constraints.labels()[static_cast<std::size_t>(i)]);
    }
  }
  if (out.reward <= p.reward_min * (1.0 + 1e-12)) out.binding.push_back("reward_min");
  return out;
}

inline DesignSolution solve_design(const DesignProblem& p, const SimplexOptions& opts = {}) {
  return solve_lp(p, build_reformulation(p), opts);
}

struct DesignCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool holds = false;
};

struct DesignVerification {
  std::vector<DesignCheck> checks;
  EquilibriumResult equilibrium;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.holds; });
  }
  std::string failures() const {
    std::string out;
    for (const auto& c : checks) {
      if (!c.holds) out += (out.empty() ? "" : "; ") + c.name + " = " + std::to_string(c.value);
    }
    return out;
  }
};

struct VerificationTolerances {
  double good = 1e-6;
  double investment = 1e-6;
  double constraint = 1e-7;
  double payoff = 1e-6;
  double perturbation_sum = 1e-8;
};

// Solves the true equilibrium at the designed (R*, c*) and compares it with
// the reformulation's closed-form prediction. Returns the report without
// throwing on failed checks; InfeasibleDesign is thrown before solving when
// the design violates its own contract.
inline DesignVerification audit_design(const DesignProblem& p, const DesignSolution& sol,
                                       const VerificationTolerances& tol = {}) {
  if (!sol.optimal()) throw InfeasibleDesign(std::string("design status is ") + to_string(sol.status));
  const double g_star = p.optimal_good();
  if (!near(sol.perturbation_sum(), g_star, tol.perturbation_sum, g_star)) {
    throw InfeasibleDesign("perturbation sum " + std::to_string(sol.perturbation_sum()) + " differs from G* " +
                           std::to_string(g_star));
  }
  const double predicted_violation = p.constraints.max_violation(sol.predicted_investments, sol.reward);
  if (predicted_violation > tol.constraint) {
    throw InfeasibleDesign("design violates its constraints at the predicted investments by " +
                           std::to_string(predicted_violation));
  }

  DesignVerification v;
  v.equilibrium = solve_equilibrium(p.instance, sol.point());
  const auto& eq = v.equilibrium;
  const auto& prof = p.instance.benefits();
  auto add = [&](std::string name, double value, double tolerance) {
    v.checks.push_back({std::move(name), value, tolerance, value <= tolerance});
  };
  add("public_good_matches_optimum", std::abs(eq.public_good - g_star) / std::max(1.0, g_star), tol.good);
  double dev = 0.0;
  for (std::size_t i = 0; i < eq.investments.size(); ++i) {
    dev = std::max(dev, std::abs(eq.investments[i] - sol.predicted_investments[i]) /
                            std::max(1.0, std::abs(sol.predicted_investments[i])));
  }
  add("investments_match_closed_form", dev, tol.investment);
  add("inactive_players", static_cast<double>(eq.investments.size() - eq.active_set.size()), 0.0);
  add("constraint_violation", p.constraints.max_violation(eq.investments, sol.reward), tol.constraint);
  const double opt = prof.socially_optimal_payoff();
  add("payoff_gap", std::abs(prof.aggregate_payoff(eq.public_good) - opt) / std::max(1.0, std::abs(opt)), tol.payoff);
  return v;
}

// audit_design, throwing ExactnessViolation when any check fails.
inline DesignVerification verify_design(const DesignProblem& p, const DesignSolution& sol,
                                        const VerificationTolerances& tol = {}) {
  DesignVerification v = audit_design(p, sol, tol);
  if (!v.passed()) throw ExactnessViolation("design verification failed: " + v.failures());
  return v;
}

// Lattice for the brute-force bilevel oracle. Perturbations take values
// k G* / divisions; only lattice points whose sum equals one of
// sum_fractions * G* are visited. For each, R is scanned upward from
// reward_min in steps of reward_step up to reward_max, and the first feasible
// cell is refined by bisection to reward_tolerance.
struct BruteForceGrid {
  int divisions = 50;
  std::vector<double> sum_fractions{1.0};
  double reward_max = 10.0;
  double reward_step = 0.02;
  double reward_tolerance = 1e-6;
  double good_tolerance = 1e-6;
  double constraint_tolerance = 1e-9;
  unsigned workers = 1;

  double resolution(double g_star) const { return g_star / divisions; }
};

struct BruteForceResult {
  DesignSolution best;
  std::size_t lattice_points = 0;
  std::size_t equilibrium_solves = 0;
  std::size_t good_matches = 0;  // (R, c) cells whose equilibrium hit G*
  double closest_good_gap = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void enumerate_compositions(int parts, int total, std::vector<int>& cur,
                                   const std::function<void(const std::vector<int>&)>& visit) {
  if (parts == 1) {
    cur.push_back(total);
    visit(cur);
    cur.pop_back();
    return;
  }
  for (int k = 0; k <= total; ++k) {
    cur.push_back(k);
    enumerate_compositions(parts - 1, total - k, cur, visit);
    cur.pop_back();
  }
}

}  // namespace detail

// Test oracle for the reformulation: searches (R, c) directly, solving the
// true equilibrium at every cell.
inline BruteForceResult brute_force_bilevel(const DesignProblem& p, const BruteForceGrid& grid = {}) {
  const std::size_t n = p.instance.players();
  if (n > 3) throw ValidationError("brute-force oracle supports at most 3 players");
  if (grid.divisions <= 0 || !(grid.reward_step > 0.0) || !(grid.reward_max > p.reward_min)) {
    throw ValidationError("brute-force grid is empty");
  }
  const double g_star = p.optimal_good();
  const double unit = g_star / grid.divisions;

  std::vector<std::vector<double>> lattice;
  for (double frac : grid.sum_fractions) {
    const int total = static_cast<int>(std::lround(frac * grid.divisions));
    std::vector<int> cur;
    detail::enumerate_compositions(static_cast<int>(n), total, cur, [&](const std::vector<int>& k) {
      std::vector<double> c(n);
      for (std::size_t i = 0; i < n; ++i) c[i] = k[i] * unit;
      lattice.push_back(std::move(c));
    });
  }

  struct Candidate {
    double objective;
    double reward;
    std::vector<double> c;
    std::vector<double> s;
  };
  std::mutex mu;
  std::optional<Candidate> best;
  BruteForceResult out;
  out.lattice_points = lattice.size();

  auto evaluate = [&](double reward, const std::vector<double>& c, std::size_t& solves, std::size_t& matches,
                      double& gap, std::vector<double>* s_out) {
    ++solves;
    try {
      const auto eq = solve_equilibrium(p.instance, DesignPoint(reward, c));
      const double d = std::abs(eq.public_good - g_star);
      gap = std::min(gap, d);
      if (d > grid.good_tolerance * std::max(1.0, g_star)) return false;
      ++matches;
      if (p.constraints.max_violation(eq.investments, reward) > grid.constraint_tolerance) return false;
      if (s_out) *s_out = eq.investments;
      return true;
    } catch (const Error&) {
      return false;
    }
  };

  auto work = [&](std::size_t begin, std::size_t stride) {
    std::size_t solves = 0, matches = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t idx = begin; idx < lattice.size(); idx += stride) {
      const auto& c = lattice[idx];
      double cbar = 0.0;
      for (double x : c) cbar += x;
      double cap;
      {
        std::lock_guard lock(mu);
        cap = best ? std::min(grid.reward_max, best->objective - p.alpha * cbar) : grid.reward_max;
      }
      // One extra step past the cap so a feasible interval starting just
      // below it is still bracketed.
      double prev = -1.0;
      for (long k = 0;; ++k) {
        const double r = p.reward_min + static_cast<double>(k) * grid.reward_step;
        if (r > cap + grid.reward_step || r > grid.reward_max) break;
        if (!evaluate(r, c, solves, matches, gap, nullptr)) {
          prev = r;
          continue;
        }
        double lo = prev, hi = r;
        if (lo > 0.0) {
          while (hi - lo > grid.reward_tolerance) {
            const double mid = 0.5 * (lo + hi);
            if (evaluate(mid, c, solves, matches, gap, nullptr)) {
              hi = mid;
            } else {
              lo = mid;
            }
          }
        }
        std::vector<double> s;
        evaluate(hi, c, solves, matches, gap, &s);
        Candidate cand{hi + p.alpha * cbar, hi, c, std::move(s)};
        std::lock_guard lock(mu);
        if (!best || cand.objective < best->objective ||
            (cand.objective == best->objective && cand.c < best->c)) {
          best = std::move(cand);
        }
        break;
      }
    }
    std::lock_guard lock(mu);
    out.equilibrium_solves += solves;
    out.good_matches += matches;
    out.closest_good_gap = std::min(out.closest_good_gap, gap);
  };

  const unsigned workers = std::max(1u, grid.workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  if (best) {
    out.best.status = LpStatus::optimal;
    out.best.reward = best->reward;
    out.best.perturbation = best->c;
    out.best.objective = best->objective;
    out.best.predicted_investments = best->s;
  }
  return out;
}

}  // namespace lottery
