#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lottery/analysis.hpp"
#include "lottery/benefit.hpp"
#include "lottery/design.hpp"
#include "lottery/game.hpp"
#include "lottery/grid.hpp"
#include "lottery/simplex.hpp"

// Seeded generators for property tests and acceptance checks. Every corpus is
// a pure function of its seed.
namespace lottery::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

 private:
  std::mt19937_64 eng_;
};

inline BenefitProfile random_profile(Rng& rng, int n_min, int n_max, double a_lo, double a_hi) {
  const int n = rng.integer(n_min, n_max);
  std::vector<double> a(static_cast<std::size_t>(n));
  for (auto& x : a) x = rng.uniform(a_lo, a_hi);
  return BenefitProfile::scaled_log(a);
}

// Random nonnegative vector with the given sum; each entry gets at least
// floor_share of total / n.
inline std::vector<double> random_split(Rng& rng, std::size_t n, double total, double floor_share = 0.0) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (auto& x : w) {
    x = -std::log(rng.uniform(1e-12, 1.0));
    sum += x;
  }
  const double base = floor_share * total / static_cast<double>(n);
  const double rest = total - base * static_cast<double>(n);
  for (auto& x : w) x = base + rest * x / sum;
  return w;
}

struct GameCase {
  LotteryInstance instance;
  DesignPoint point;
};

// Unrestricted pairs: N in 2..6, a_i in [0.6, 3], R log-uniform in [0.2, 50],
// c_bar in [0, 1.5 G*] (a fifth of them exactly G*), some perturbation
// vectors concentrated on a single player.
inline std::vector<GameCase> equilibrium_corpus(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<GameCase> out;
  while (static_cast<int>(out.size()) < count) {
    BenefitProfile p = random_profile(rng, 2, 6, 0.6, 3.0);
    const double g = p.socially_optimal_good();
    const double reward = rng.log_uniform(0.2, 50.0);
    const double frac = rng.coin(0.2) ? 1.0 : rng.uniform(0.0, 1.5);
    std::vector<double> c = random_split(rng, p.size(), frac * g);
    if (rng.coin(0.15)) {
      std::fill(c.begin(), c.end(), 0.0);
      c[static_cast<std::size_t>(rng.integer(0, static_cast<int>(p.size()) - 1))] = frac * g;
    }
    out.push_back({LotteryInstance(std::move(p)), DesignPoint(reward, std::move(c))});
  }
  return out;
}

// Pairs inside the efficiency-bound hypotheses: R in
// [R_L(c) + 0.1, max(50, R_L(c) + 10)]. Mix: 60% c_bar in [0, G*), 20%
// c_bar = G*, 20% c_bar in (G*, 1.5 G*].
inline std::vector<GameCase> bounds_corpus(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<GameCase> out;
  for (int k = 0; k < count; ++k) {
    BenefitProfile p = random_profile(rng, 2, 6, 0.6, 3.0);
    const double g = p.socially_optimal_good();
    const double u = rng.uniform(0.0, 1.0);
    const double frac = u < 0.6 ? rng.uniform(0.0, 1.0) : (u < 0.8 ? 1.0 : rng.uniform(1.0, 1.5));
    std::vector<double> c = random_split(rng, p.size(), frac * g);
    const double r_l = reward_threshold(p, c);
    const double reward = rng.uniform(r_l + 0.1, std::max(50.0, r_l + 10.0));
    out.push_back({LotteryInstance(std::move(p)), DesignPoint(reward, std::move(c))});
  }
  return out;
}

// All-active pairs with every c_i bounded away from zero (room for central
// differences) and c_bar != G*.
inline std::vector<GameCase> all_active_corpus(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<GameCase> out;
  for (int k = 0; k < count; ++k) {
    BenefitProfile p = random_profile(rng, 2, 6, 0.6, 3.0);
    const double g = p.socially_optimal_good();
    const double frac = rng.coin(0.75) ? rng.uniform(0.05, 0.9) : rng.uniform(1.1, 1.5);
    std::vector<double> c = random_split(rng, p.size(), frac * g, 0.2);
    const double r_l = reward_threshold(p, c);
    const double reward = rng.uniform(r_l + 0.5, std::max(30.0, 2.0 * r_l + 1.0));
    out.push_back({LotteryInstance(std::move(p)), DesignPoint(reward, std::move(c))});
  }
  return out;
}

// A design problem with N in {2, 3}, a_i in [0.6, 1.5] and 1-3 random affine
// rows that a reference design (R0, c0) with sum c0 = G* satisfies strictly.
struct DesignCase {
  DesignProblem problem;
  double reference_reward;
  std::vector<double> reference_perturbation;
};

inline DesignCase random_design_case(Rng& rng) {
  BenefitProfile p = random_profile(rng, 2, 3, 0.6, 1.5);
  const std::size_t n = p.size();
  const double g = p.socially_optimal_good();
  const double r0 = rng.uniform(0.5, 3.0);
  std::vector<double> c0 = random_split(rng, n, g);
  std::vector<double> s0(n);
  for (std::size_t i = 0; i < n; ++i) s0[i] = c0[i] + r0 * p[i].slope(g);
  ConstraintSet cs(n);
  const int rows = rng.integer(1, 3);
  for (int k = 0; k < rows; ++k) {
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(n) + 1);
    double lhs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      row[static_cast<Eigen::Index>(i)] = rng.uniform(-1.0, 1.0);
      lhs += row[static_cast<Eigen::Index>(i)] * s0[i];
    }
    row[static_cast<Eigen::Index>(n)] = rng.uniform(-0.5, 0.5);
    lhs += row[static_cast<Eigen::Index>(n)] * r0;
    cs.append(row, lhs + rng.uniform(0.0, 0.3), "random" + std::to_string(k));
  }
  return {DesignProblem(LotteryInstance(std::move(p)), std::move(cs), rng.uniform(0.0, 2.0), 1e-3), r0, c0};
}

// Bounded, feasible LP with 2-5 variables: random inequality rows satisfied by
// a random interior point, an upper box, and sometimes one equality.
inline LinearProgram random_lp(Rng& rng) {
  const int n = rng.integer(2, 5);
  const int m = rng.integer(1, 4);
  LinearProgram lp;
  lp.objective = Eigen::VectorXd(n);
  for (int j = 0; j < n; ++j) lp.objective[j] = rng.uniform(-2.0, 2.0);
  lp.lower = Eigen::VectorXd(n);
  Eigen::VectorXd x0(n);
  for (int j = 0; j < n; ++j) {
    lp.lower[j] = rng.coin(0.7) ? 0.0 : rng.uniform(-2.0, 1.0);
    x0[j] = lp.lower[j] + rng.uniform(0.1, 2.0);
  }
  lp.a_ub = Eigen::MatrixXd(m + n, n);
  lp.b_ub = Eigen::VectorXd(m + n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) lp.a_ub(i, j) = rng.coin(0.2) ? 0.0 : rng.uniform(-3.0, 3.0);
    lp.b_ub[i] = lp.a_ub.row(i).dot(x0) + rng.uniform(0.0, 1.5);
  }
  for (int j = 0; j < n; ++j) {
    lp.a_ub.row(m + j) = Eigen::RowVectorXd::Unit(n, j);
    lp.b_ub[m + j] = x0[j] + rng.uniform(0.5, 3.0);
  }
  if (rng.coin(0.3)) {
    lp.a_eq = Eigen::MatrixXd(1, n);
    for (int j = 0; j < n; ++j) lp.a_eq(0, j) = rng.uniform(-2.0, 2.0);
    lp.b_eq = Eigen::VectorXd::Constant(1, lp.a_eq.row(0).dot(x0));
  } else {
    lp.a_eq = Eigen::MatrixXd(0, n);
    lp.b_eq = Eigen::VectorXd(0);
  }
  return lp;
}

// Random spanning tree on `buses` buses (ids 1..buses, slack at a random bus)
// with random reactances and loads.
inline GridCase random_tree(Rng& rng, int buses) {
  GridCase g;
  const int slack = rng.integer(1, buses);
  for (int b = 1; b <= buses; ++b) g.buses.push_back({b, b == slack ? 3 : 1, rng.coin(0.7) ? rng.uniform(1.0, 30.0) : 0.0});
  for (int b = 2; b <= buses; ++b) {
    const int parent = rng.integer(1, b - 1);
    const bool flip = rng.coin();
    g.branches.push_back({flip ? b : parent, flip ? parent : b, rng.uniform(0.02, 0.5), rng.uniform(10.0, 100.0)});
  }
  g.generators.push_back({slack, 50.0});
  return g;
}

}  // namespace lottery::testing
