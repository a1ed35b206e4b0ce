#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace pagrpo;

namespace {

PromptVariant identity_variant() {
  return apply_permutation(oracle::plain_instance(Task::mcq), Permutation::identity(4), Protocol::coupled);
}

Response resp(std::optional<int> choice, int len = 10, bool formatted = true) {
  Response r;
  r.semantic_choice = choice;
  if (choice) r.parsed_label = symbol_at(*choice);
  r.length_units = len;
  r.well_formatted = formatted && choice.has_value();
  return r;
}

SemanticMatrix zmat(std::vector<std::vector<std::optional<int>>> rows) { return SemanticMatrix::from_rows(rows); }

}  // namespace

TEST(Preliminary, CorrectInBoundsFormatted) {
  const auto r = preliminary_reward(make_response("Answer: B", identity_variant(), 10), 2, {});
  EXPECT_DOUBLE_EQ(r.r_acc, 1.0);
  EXPECT_DOUBLE_EQ(r.r_len, 0.1);
  EXPECT_DOUBLE_EQ(r.r_fmt, 0.3);
  EXPECT_NEAR(r.sum(), 1.4, 1e-12);
}

TEST(Preliminary, WrongTooLongMalformed) {
  const auto r = preliminary_reward(make_response("i think c maybe", identity_variant(), 99), 2, {});
  EXPECT_DOUBLE_EQ(r.r_acc, -1.0);
  EXPECT_DOUBLE_EQ(r.r_len, -0.1);
  EXPECT_DOUBLE_EQ(r.r_fmt, -0.3);
  EXPECT_NEAR(r.sum(), -1.4, 1e-12);
}

TEST(Preliminary, UnparseableIsWrongAndMalformed) {
  for (int truth = 1; truth <= 4; ++truth) {
    const auto r = preliminary_reward(make_response("no idea", identity_variant(), 10), truth, {});
    EXPECT_DOUBLE_EQ(r.r_acc, -1.0);
    EXPECT_DOUBLE_EQ(r.r_len, 0.1);
    EXPECT_DOUBLE_EQ(r.r_fmt, -0.3);
  }
}

TEST(Preliminary, LengthBoundsAreInclusive) {
  const RewardConfig cfg;
  EXPECT_DOUBLE_EQ(preliminary_reward(resp(1, cfg.min_len), 1, cfg).r_len, 0.1);
  EXPECT_DOUBLE_EQ(preliminary_reward(resp(1, cfg.max_len), 1, cfg).r_len, 0.1);
  EXPECT_DOUBLE_EQ(preliminary_reward(resp(1, cfg.min_len - 1), 1, cfg).r_len, -0.1);
  EXPECT_DOUBLE_EQ(preliminary_reward(resp(1, cfg.max_len + 1), 1, cfg).r_len, -0.1);
}

TEST(JudgeConsistency, Cases) {
  auto c = judge_consistency(zmat({{1, 2}, {1, 2}}));
  for (double x : c) EXPECT_EQ(x, 1.0);
  c = judge_consistency(zmat({{1, 1}, {2, 1}}));
  EXPECT_EQ(c(0, 0), -1.0);
  EXPECT_EQ(c(1, 0), -1.0);
  EXPECT_EQ(c(0, 1), 1.0);
  c = judge_consistency(zmat({{1}, {std::nullopt}}));
  EXPECT_EQ(c(0, 0), -1.0);
  EXPECT_EQ(c(1, 0), -1.0);
  EXPECT_THROW(judge_consistency(zmat({{1}, {1}, {1}})), ShapeError);
}

TEST(JudgeConsistency, TruthTableExhaustive) {
  const std::vector<std::optional<int>> values{std::nullopt, 1, 2};
  for (const auto& a : values)
    for (const auto& b : values) {
      const auto c = judge_consistency(zmat({{a}, {b}}));
      EXPECT_EQ(c(0, 0), oracle::judge_pair(a, b));
      EXPECT_EQ(c(1, 0), oracle::judge_pair(a, b));
    }
}

TEST(McqConsistency, Majority) {
  // counts {1:7, 2:2, 3:1}
  const auto c = mcq_consistency(zmat({{1, 1, 1, 1, 1}, {1, 1, 2, 2, 3}}));
  const std::vector<double> expected{1, 1, 1, 1, 1, 1, 1, -1, -1, -1};
  EXPECT_EQ(std::vector<double>(c.begin(), c.end()), expected);
}

TEST(McqConsistency, TieAndUnanimous) {
  for (double x : mcq_consistency(zmat({{1, 1, 1, 1, 1}, {2, 2, 2, 2, 2}}))) EXPECT_EQ(x, -1.0);
  for (double x : mcq_consistency(zmat({{3, 3, 3, 3, 3}, {3, 3, 3, 3, 3}}))) EXPECT_EQ(x, 1.0);
  for (double x : mcq_consistency(zmat({{std::nullopt, std::nullopt}}))) EXPECT_EQ(x, -1.0);
  EXPECT_THROW(mcq_consistency(SemanticMatrix{}), ShapeError);
}

TEST(McqConsistency, AbsentChoicesNeverAgree) {
  const auto c = mcq_consistency(zmat({{2, std::nullopt, 2}}));
  EXPECT_EQ(c(0, 0), 1.0);
  EXPECT_EQ(c(0, 1), -1.0);
  EXPECT_EQ(c(0, 2), 1.0);
}

TEST(McqConsistency, MatchesOracleOnRandomGroups) {
  std::mt19937_64 eng(11);
  std::uniform_int_distribution<int> pick(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t P = std::array<std::size_t, 3>{2, 4, 5}[trial % 3];
    const std::size_t N = std::array<std::size_t, 3>{1, 2, 8}[(trial / 3) % 3];
    SemanticMatrix z(P, N);
    for (auto& x : z) {
      const int v = pick(eng);
      x = v == 0 ? std::nullopt : std::optional<int>(v);
    }
    EXPECT_EQ(mcq_consistency(z), oracle::mcq_consistency(z, 4));
  }
}

TEST(TotalRewards, ComposesWithLambda) {
  const PromptVariant v = identity_variant();
  GroupResponses agree(2, 1, make_response("Answer: A", v, 10));
  auto t = total_rewards(agree, 1, Task::mcq, {});
  EXPECT_NEAR(t(0, 0).total, 2.4, 1e-12);

  GroupResponses split(2, 1);
  split(0, 0) = make_response("Answer: A", v, 10);
  split(1, 0) = make_response("Answer: B", v, 10);
  t = total_rewards(split, 1, Task::mcq, {});
  EXPECT_NEAR(t(0, 0).total, 0.4, 1e-12);
  EXPECT_EQ(t(0, 0).r_con, -1.0);

  RewardConfig no_con;
  no_con.lambda = 0.0;
  t = total_rewards(split, 1, Task::mcq, no_con);
  EXPECT_NEAR(t(0, 0).total, 1.4, 1e-12);
  EXPECT_NEAR(t(1, 0).total, -0.6, 1e-12);
}

TEST(RewardConfig, Validation) {
  RewardConfig c;
  c.lambda = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.min_len = 50;
  EXPECT_THROW(validate(c), ConfigError);
}
