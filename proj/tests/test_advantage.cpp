#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace pagrpo;

namespace {

Matrix<double> mat(std::vector<std::vector<double>> rows) { return Matrix<double>::from_rows(rows); }

}  // namespace

TEST(GroupStats, PopulationStd) {
  const auto s = group_stats(mat({{1.4, 1.4}, {-1.4, -1.4}}));
  EXPECT_NEAR(s.mu, 0.0, 1e-15);
  EXPECT_NEAR(s.sigma, 1.4, 1e-15);
  const auto c = group_stats(mat({{0.5, 0.5, 0.5}}));
  EXPECT_EQ(c.mu, 0.5);
  EXPECT_EQ(c.sigma, 0.0);
  const auto one = group_stats(mat({{2.4}}));
  EXPECT_DOUBLE_EQ(one.mu, 2.4);
  EXPECT_EQ(one.sigma, 0.0);
  EXPECT_THROW(group_stats(Matrix<double>{}), ShapeError);
  EXPECT_THROW(group_stats(mat({{1.0, std::nan("")}})), NumericError);
}

TEST(CrossPermutation, ZeroBranchForConstantGroups) {
  for (double x : cross_permutation_advantage(mat({{3.0, 3.0}, {3.0, 3.0}}))) EXPECT_EQ(x, 0.0);
}

TEST(CrossPermutation, TwoPointGroup) {
  const auto a = cross_permutation_advantage(mat({{2.0, 0.0}}));
  EXPECT_NEAR(a(0, 0), 1.0, 1e-7);
  EXPECT_NEAR(a(0, 1), -1.0, 1e-7);
}

TEST(CrossPermutation, FourPointGroup) {
  const auto a = cross_permutation_advantage(mat({{1.4, 1.4}, {-1.4, -1.4}}));
  EXPECT_NEAR(a(0, 0), 1.0, 1e-7);
  EXPECT_NEAR(a(0, 1), 1.0, 1e-7);
  EXPECT_NEAR(a(1, 0), -1.0, 1e-7);
  EXPECT_NEAR(a(1, 1), -1.0, 1e-7);
}

TEST(CrossPermutation, SigmaJustBelowDeltaIsZero) {
  AdvantageConfig cfg;
  cfg.delta = 1.0;
  // sigma == 1 is not below delta: standardized
  EXPECT_NE(cross_permutation_advantage(mat({{2.0, 0.0}}), cfg)(0, 0), 0.0);
  cfg.delta = 1.0 + 1e-12;
  EXPECT_EQ(cross_permutation_advantage(mat({{2.0, 0.0}}), cfg)(0, 0), 0.0);
}

TEST(PerPrompt, RowLocal) {
  const auto a = per_prompt_advantage(mat({{2.0, 0.0}, {5.0, 5.0}, {10.0, -7.0}}));
  EXPECT_NEAR(a(0, 0), 1.0, 1e-7);
  EXPECT_NEAR(a(0, 1), -1.0, 1e-7);
  EXPECT_EQ(a(1, 0), 0.0);
  EXPECT_EQ(a(1, 1), 0.0);
  EXPECT_NEAR(a(2, 0), 1.0, 1e-7);
}

TEST(PerPrompt, CoincidesWithCrossAtSingleRow) {
  std::mt19937_64 eng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix<double> r(1, 8);
    for (double& x : r) x = g(eng);
    EXPECT_EQ(per_prompt_advantage(r), cross_permutation_advantage(r));
  }
}

TEST(CrossPermutation, ZeroMeanAndScaledStd) {
  std::mt19937_64 eng(5);
  std::normal_distribution<double> g(0.0, 2.0);
  const AdvantageConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    Matrix<double> r(5, 8);
    for (double& x : r) x = g(eng);
    const auto st = cross_permutation_stats(r, cfg);
    const auto a = group_stats(st.advantages);
    EXPECT_LE(std::abs(a.mu), 1e-9);
    EXPECT_LE(std::abs(a.sigma - st.sigma / (st.sigma + cfg.epsilon)), 1e-9);
  }
}

TEST(AdvantageConfig, Validation) {
  AdvantageConfig c;
  c.epsilon = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.delta = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
}
