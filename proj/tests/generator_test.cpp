#include "modeswitch/generator.hpp"

#include <gtest/gtest.h>

#include <random>

#include "modeswitch/fd_solver.hpp"
#include "test_problems.hpp"

namespace modeswitch {
namespace {

TEST(BuildGrid, Uniform) {
  const Grid g = build_grid(0.0, 2.0, 5, Spacing::Uniform);
  const std::vector<double> want = {0.0, 0.5, 1.0, 1.5, 2.0};
  ASSERT_EQ(g.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(g[k], want[k]);
}

TEST(BuildGrid, Logarithmic) {
  const Grid g = build_grid(1.0, 4.0, 3, Spacing::Logarithmic);
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_NEAR(g[1], 2.0, 1e-14);
  EXPECT_DOUBLE_EQ(g[2], 4.0);
}

TEST(BuildGrid, Errors) {
  EXPECT_THROW(build_grid(0.0, 1.0, 2, Spacing::Uniform), std::invalid_argument);
  EXPECT_THROW(build_grid(1.0, 1.0, 5, Spacing::Uniform), std::invalid_argument);
  EXPECT_THROW(build_grid(0.0, 1.0, 5, Spacing::Logarithmic), std::invalid_argument);
}

TEST(BuildGrid, NearestAndInterpolate) {
  const Grid g = build_grid(0.0, 2.0, 5, Spacing::Uniform);
  EXPECT_EQ(g.nearest_index(-3.0), 0u);
  EXPECT_EQ(g.nearest_index(0.74), 1u);
  EXPECT_EQ(g.nearest_index(0.75), 1u);
  EXPECT_EQ(g.nearest_index(0.76), 2u);
  EXPECT_EQ(g.nearest_index(9.0), 4u);
  const std::vector<double> v = {0.0, 1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(g.interpolate(v, 1.25), 2.5);
  EXPECT_DOUBLE_EQ(g.interpolate(v, 2.0), 4.0);
  EXPECT_THROW(g.interpolate(v, 2.5), std::out_of_range);
}

TEST(Discretize, DegenerateDiffusion) {
  const DiffusionModel m{Expr::parse("0"), Expr::parse("0")};
  const auto op = discretize_generator(m, build_grid(-1.0, 1.0, 7), 3.0);
  EXPECT_EQ(op.left, EndRow::Pde);
  EXPECT_EQ(op.right, EndRow::Pde);
  for (std::size_t k = 0; k < op.size(); ++k) {
    EXPECT_EQ(op.lower[k], 0.0);
    EXPECT_EQ(op.diag[k], 3.0);
    EXPECT_EQ(op.upper[k], 0.0);
  }
}

TEST(Discretize, DegenerateAtOrigin) {
  const auto op = discretize_generator(testing_problems::gbm_model(), build_grid(0.0, 2.0, 21), 100.0);
  EXPECT_EQ(op.left, EndRow::Pde);
  EXPECT_EQ(op.diag[0], 100.0);
  EXPECT_EQ(op.upper[0], 0.0);
  EXPECT_EQ(op.right, EndRow::Extrapolate);
}

TEST(Discretize, DirichletEnds) {
  const auto op = discretize_generator(testing_problems::gbm_model(), build_grid(1.0, 2.0, 11), 100.0,
                                       BoundaryCondition::dirichlet(0.5, 0.7));
  EXPECT_EQ(op.left, EndRow::Fixed);
  EXPECT_EQ(op.right, EndRow::Fixed);
  EXPECT_EQ(op.left_value, 0.5);
  EXPECT_EQ(op.right_value, 0.7);
}

TEST(DiscretizeProperty, InteriorRowsAreMMatrixRows) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  std::uniform_real_distribution<double> rr(0.01, 200.0);
  std::uniform_int_distribution<int> nn(3, 60);
  std::bernoulli_distribution use_log(0.3);
  for (int t = 0; t < 400; ++t) {
    const std::string b = std::to_string(coef(rng)) + " + " + std::to_string(coef(rng)) + "*x";
    const std::string s = std::to_string(coef(rng)) + " - " + std::to_string(coef(rng)) + "*|x|";
    const DiffusionModel m{Expr::parse(b), Expr::parse(s)};
    const bool lg = use_log(rng);
    const double lo = lg ? 0.1 + std::abs(coef(rng)) : coef(rng);
    const Grid g = build_grid(lo, lo + 0.5 + std::abs(coef(rng)), nn(rng), lg ? Spacing::Logarithmic : Spacing::Uniform);
    const double r = rr(rng);
    const auto op = discretize_generator(m, g, r);
    for (std::size_t k = 1; k + 1 < op.size(); ++k) {
      EXPECT_LE(op.lower[k], 0.0);
      EXPECT_LE(op.upper[k], 0.0);
      EXPECT_GT(op.diag[k], 0.0);
      EXPECT_GE(op.diag[k], std::abs(op.lower[k]) + std::abs(op.upper[k]));
      EXPECT_NEAR(op.diag[k] + op.lower[k] + op.upper[k], r, 1e-9 * op.diag[k]);
    }
  }
}

TEST(SolveWithPolicy, MatchesDenseSolve) {
  // 5-node system with extrapolated right end against a hand elimination.
  const auto op = discretize_generator(testing_problems::gbm_model(), build_grid(0.0, 2.0, 5), 100.0);
  const std::vector<double> f = {1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<std::uint8_t> none(5, 0);
  const auto v = solve_with_policy(op, f, none, f);
  for (std::size_t k = 0; k + 1 < 5; ++k) {
    if (op.is_generator_row(k)) {
      EXPECT_NEAR(op.row_residual(v, f, k), 0.0, 1e-12);
    }
  }
  EXPECT_NEAR(v[4] - 2 * v[3] + v[2], 0.0, 1e-14);
}

TEST(SolveWithPolicy, TooFewNodesForTwoExtrapolatedEnds) {
  const DiffusionModel m{Expr::parse("0"), Expr::parse("1")};
  const auto op = discretize_generator(m, build_grid(0.0, 1.0, 3), 1.0);
  const std::vector<double> f(3, 1.0);
  const std::vector<std::uint8_t> none(3, 0);
  EXPECT_THROW(solve_with_policy(op, f, none, f), SingularSystem);
}

}  // namespace
}  // namespace modeswitch
