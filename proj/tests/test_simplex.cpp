// Dense two-phase simplex.

#include <gtest/gtest.h>

#include <cmath>

#include "lottery/simplex.hpp"
#include "lottery/testing/corpus.hpp"
#include "lottery/testing/oracles.hpp"

using namespace lottery;
namespace lt = lottery::testing;

namespace {

LinearProgram lp2(Eigen::Vector2d cost) {
  LinearProgram lp;
  lp.objective = cost;
  lp.lower = Eigen::Vector2d::Zero();
  lp.a_eq = Eigen::MatrixXd(0, 2);
  lp.b_eq = Eigen::VectorXd(0);
  return lp;
}

}  // namespace

TEST(Simplex, TextbookMaximization) {
  // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18: optimum (2, 6), value 36.
  LinearProgram lp = lp2({-3.0, -5.0});
  lp.a_ub = (Eigen::MatrixXd(3, 2) << 1, 0, 0, 2, 3, 2).finished();
  lp.b_ub = Eigen::Vector3d(4, 12, 18);
  const auto r = solve_simplex(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.objective, -36.0, 1e-12);
  EXPECT_NEAR(r.x[0], 2.0, 1e-12);
  EXPECT_NEAR(r.x[1], 6.0, 1e-12);
}

TEST(Simplex, EqualityAndShiftedLowerBounds) {
  // min x + 2y s.t. x + y = 3, x >= 1, y >= 0.5 -> (2.5, 0.5).
  LinearProgram lp = lp2({1.0, 2.0});
  lp.lower = Eigen::Vector2d(1.0, 0.5);
  lp.a_ub = Eigen::MatrixXd(0, 2);
  lp.b_ub = Eigen::VectorXd(0);
  lp.a_eq = (Eigen::MatrixXd(1, 2) << 1, 1).finished();
  lp.b_eq = Eigen::VectorXd::Constant(1, 3.0);
  const auto r = solve_simplex(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.x[0], 2.5, 1e-12);
  EXPECT_NEAR(r.x[1], 0.5, 1e-12);
}

TEST(Simplex, NegativeRightHandSide) {
  // min x + y s.t. -x - y <= -2 -> value 2.
  LinearProgram lp = lp2({1.0, 1.0});
  lp.a_ub = (Eigen::MatrixXd(1, 2) << -1, -1).finished();
  lp.b_ub = Eigen::VectorXd::Constant(1, -2.0);
  const auto r = solve_simplex(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.objective, 2.0, 1e-12);
}

TEST(Simplex, Infeasible) {
  LinearProgram lp = lp2({1.0, 1.0});
  lp.a_ub = (Eigen::MatrixXd(1, 2) << 1, 1).finished();
  lp.b_ub = Eigen::VectorXd::Constant(1, -1.0);
  EXPECT_EQ(solve_simplex(lp).status, LpStatus::infeasible);
}

TEST(Simplex, Unbounded) {
  LinearProgram lp = lp2({-1.0, 0.0});
  lp.a_ub = (Eigen::MatrixXd(1, 2) << 0, 1).finished();
  lp.b_ub = Eigen::VectorXd::Constant(1, 1.0);
  EXPECT_EQ(solve_simplex(lp).status, LpStatus::unbounded);
}

TEST(Simplex, RedundantEqualities) {
  LinearProgram lp = lp2({1.0, 0.0});
  lp.a_ub = Eigen::MatrixXd(0, 2);
  lp.b_ub = Eigen::VectorXd(0);
  lp.a_eq = (Eigen::MatrixXd(2, 2) << 1, 1, 2, 2).finished();
  lp.b_eq = Eigen::Vector2d(1.0, 2.0);
  const auto r = solve_simplex(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.x[0], 0.0, 1e-12);
  EXPECT_NEAR(r.x[1], 1.0, 1e-12);
}

TEST(Simplex, TieBreakerSelectsSmallestCoordinate) {
  // min 0 s.t. x + y = 1: every point is optimal; the tie-breaker on x wins.
  LinearProgram lp = lp2({0.0, 0.0});
  lp.a_ub = Eigen::MatrixXd(0, 2);
  lp.b_ub = Eigen::VectorXd(0);
  lp.a_eq = (Eigen::MatrixXd(1, 2) << 1, 1).finished();
  lp.b_eq = Eigen::VectorXd::Constant(1, 1.0);
  lp.tie_breakers = {Eigen::Vector2d::Unit(0)};
  const auto r = solve_simplex(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.x[0], 0.0, 1e-12);
  EXPECT_NEAR(r.x[1], 1.0, 1e-12);
}

TEST(Simplex, RejectsMalformedProgram) {
  LinearProgram lp = lp2({1.0, 1.0});
  lp.a_ub = Eigen::MatrixXd(1, 3);
  lp.b_ub = Eigen::VectorXd(1);
  EXPECT_THROW(solve_simplex(lp), ValidationError);
}

// Property: random bounded LPs agree with vertex enumeration, and the returned
// point is feasible.
TEST(SimplexProperty, MatchesVertexEnumeration) {
  lt::Rng rng(41);
  for (int k = 0; k < 200; ++k) {
    const LinearProgram lp = lt::random_lp(rng);
    const auto r = solve_simplex(lp);
    const auto oracle = lt::vertex_enumeration_minimum(lp);
    ASSERT_TRUE(oracle.has_value());
    ASSERT_EQ(r.status, LpStatus::optimal);
    EXPECT_NEAR(r.objective, *oracle, 1e-7 * std::max(1.0, std::abs(*oracle)));
    EXPECT_LE(((lp.a_ub * r.x - lp.b_ub).array()).maxCoeff(), 1e-8);
    EXPECT_GE((r.x - lp.lower).minCoeff(), -1e-9);
    if (lp.a_eq.rows() > 0) {
      EXPECT_NEAR((lp.a_eq * r.x - lp.b_eq).norm(), 0.0, 1e-8);
    }
  }
}
