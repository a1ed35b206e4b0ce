#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace pagrpo;

namespace {

Dataset small_set(std::uint64_t seed, int count = 12, int n = 4, const std::string& prefix = "t") {
  SynthDatasetSpec spec;
  spec.count = count;
  spec.n = n;
  spec.seed = seed;
  spec.id_prefix = prefix;
  return generate_instances(spec);
}

TrainerConfig small_cfg() {
  TrainerConfig cfg;
  cfg.batch_size = 6;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(Ratio, Values) {
  EXPECT_EQ(importance_ratio(-1.3, -1.3), 1.0);
  EXPECT_NEAR(importance_ratio(std::log(2.0) - 0.5, -0.5), 2.0, 1e-15);
  EXPECT_GT(importance_ratio(-700.0, 0.0), 0.0);
  EXPECT_THROW(importance_ratio(std::nan(""), 0.0), NumericError);
}

TEST(Clip, WorkedCases) {
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
  for (double a : {-2.0, -0.3, 0.0, 0.7, 3.0}) EXPECT_EQ(clipped_surrogate(1.0, a, 0.2), a);
}

TEST(Clip, SlopeMatchesFiniteDifferences) {
  const double h = 1e-7;
  for (double a : {-1.5, -0.2, 0.4, 2.0}) {
    for (double rho : {0.3, 0.7, 0.95, 1.0, 1.1, 1.3, 2.5}) {
      const double fd = (clipped_surrogate(rho + h, a, 0.2) - clipped_surrogate(rho - h, a, 0.2)) / (2 * h);
      EXPECT_NEAR(clipped_surrogate_slope(rho, a, 0.2), fd, 1e-6) << "rho " << rho << " A " << a;
    }
  }
  EXPECT_EQ(clipped_surrogate_slope(1.5, 1.0, 0.2), 0.0);
  EXPECT_EQ(clipped_surrogate_slope(0.5, -1.0, 0.2), 0.0);
  EXPECT_EQ(clipped_surrogate_slope(0.5, 1.0, 0.2), 1.0);
  EXPECT_EQ(clipped_surrogate_slope(1.5, -1.0, 0.2), -1.0);
}

TEST(TrainStep, ZeroAdvantageAtReferenceIsStationary) {
  // Deterministic policy on every sample: identical rewards, sigma < delta.
  Dataset data = small_set(1, 4);
  PolicyParams p;
  p.content_weight = 200.0;
  TrainerConfig cfg = small_cfg();
  cfg.noise = NoiseConfig::clean();
  cfg.entropy_coef = 0.0;
  const auto step = train_step(data, p, p, p, cfg, 11);
  EXPECT_EQ(step.params, p);
  EXPECT_EQ(step.record.mean_abs_advantage, 0.0);
}

TEST(TrainStep, LargeKlPenaltyKeepsPolicyCloser) {
  const Dataset data = small_set(2, 6);
  const PolicyParams ref = biased_default_params();
  PolicyParams start = ref;
  start.label_bias[0] = 0.5;
  start.content_weight = 1.5;
  TrainerConfig free_cfg = small_cfg();
  free_cfg.kl_beta = 0.0;
  free_cfg.learning_rate = 1e-7;
  TrainerConfig pen_cfg = free_cfg;
  pen_cfg.kl_beta = 1e6;
  const auto a = train_step(data, start, start, ref, free_cfg, 3);
  const auto b = train_step(data, start, start, ref, pen_cfg, 3);
  EXPECT_LE(b.record.kl_to_ref, a.record.kl_to_ref);
  EXPECT_LT(b.record.kl_to_ref, 0.999 * a.record.kl_to_ref);
}

TEST(TrainStep, AlgorithmsShareSampleStreams) {
  const Dataset data = small_set(3, 6);
  TrainerConfig pa = small_cfg();
  TrainerConfig gr = pa;
  gr.algorithm = Algorithm::grpo;
  const PolicyParams p = biased_default_params();
  const auto a = train_step(data, p, p, p, pa, 77, true);
  const auto b = train_step(data, p, p, p, gr, 77, true);
  ASSERT_EQ(a.rollouts.size(), b.rollouts.size());
  bool advantages_differ = false;
  for (std::size_t k = 0; k < a.rollouts.size(); ++k) {
    EXPECT_EQ(a.rollouts[k].slots, b.rollouts[k].slots);
    for (std::size_t j = 0; j < a.rollouts[k].responses.size(); ++j) {
      EXPECT_EQ(a.rollouts[k].responses.flat()[j].raw_text, b.rollouts[k].responses.flat()[j].raw_text);
    }
    advantages_differ |= !(a.rollouts[k].advantages == b.rollouts[k].advantages);
  }
  EXPECT_TRUE(advantages_differ);
}

TEST(TrainStep, SingleVariantMakesAlgorithmsCoincide) {
  const Dataset data = small_set(4, 6);
  TrainerConfig pa = small_cfg();
  pa.perm_set = PermSet::identity;
  TrainerConfig gr = pa;
  gr.algorithm = Algorithm::grpo;
  const PolicyParams p = biased_default_params();
  EXPECT_EQ(train_step(data, p, p, p, pa, 9).params, train_step(data, p, p, p, gr, 9).params);
}

TEST(TrainStep, WorkerCountDoesNotChangeResult) {
  const Dataset data = small_set(5, 12);
  TrainerConfig one = small_cfg();
  one.batch_size = 12;
  TrainerConfig four = one;
  four.workers = 4;
  const PolicyParams p = biased_default_params();
  const auto a = train_step(data, p, p, p, one, 21);
  const auto b = train_step(data, p, p, p, four, 21);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.record.mean_reward, b.record.mean_reward);
}

TEST(TrainStep, RejectsMixedTasks) {
  Dataset data = small_set(6, 2);
  const Dataset judge = small_set(6, 1, 2, "j");
  data.push_back(judge.front());
  EXPECT_THROW(train_step(data, PolicyParams{}, PolicyParams{}, PolicyParams{}, small_cfg(), 1), ConfigError);
  EXPECT_THROW(train_step({}, PolicyParams{}, PolicyParams{}, PolicyParams{}, small_cfg(), 1), ShapeError);
}

TEST(TrainStep, JudgeTaskRuns) {
  const Dataset data = small_set(7, 8, 2, "j");
  TrainerConfig cfg = small_cfg();
  cfg.perm_set = PermSet::judge_pair;
  const auto step = train_step(data, biased_default_params(), biased_default_params(), biased_default_params(), cfg, 4, true);
  EXPECT_EQ(step.rollouts.front().responses.rows(), 2u);
  EXPECT_TRUE(step.params.all_finite());
}

TEST(Train, ZeroEpochsReturnsInitial) {
  TrainerConfig cfg = small_cfg();
  cfg.epochs = 0;
  const auto res = train(small_set(8), {}, cfg, biased_default_params());
  EXPECT_EQ(res.params, biased_default_params());
  EXPECT_TRUE(res.log.empty());
}

TEST(Train, DeterministicLog) {
  const Dataset data = small_set(9, 18);
  const Dataset held = small_set(9, 5, 4, "h");
  TrainerConfig cfg = small_cfg();
  const auto a = train(data, held, cfg, biased_default_params());
  cfg.workers = 3;
  const auto b = train(data, held, cfg, biased_default_params());
  ASSERT_EQ(a.log.size(), 6u);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    EXPECT_EQ(a.log[k].mean_reward, b.log[k].mean_reward);
    EXPECT_EQ(a.log[k].grad_norm, b.log[k].grad_norm);
    EXPECT_EQ(a.log[k].iteration, static_cast<int>(k) + 1);
  }
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.checkpoints.size(), 2u);
  EXPECT_TRUE(a.log[2].heldout_con.has_value());
  EXPECT_FALSE(a.log[1].heldout_con.has_value());
}

TEST(Train, EpochOrderIsAPermutation) {
  const auto o = epoch_order(50, 3, 1);
  std::vector<std::size_t> sorted = o;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) EXPECT_EQ(sorted[k], k);
  EXPECT_NE(o, epoch_order(50, 3, 2));
  EXPECT_EQ(o, epoch_order(50, 3, 1));
}

TEST(Train, HeldoutConsistencyRisesOnBiasedPolicy) {
  SynthDatasetSpec spec;
  spec.count = 200;
  spec.seed = 1;
  spec.id_prefix = "train";
  const Dataset data = generate_instances(spec);
  spec.count = 100;
  spec.id_prefix = "heldout";
  const Dataset held = generate_instances(spec);
  TrainerConfig cfg;
  cfg.seed = 1;
  const auto res = train(data, held, cfg, biased_default_params());
  ASSERT_TRUE(res.initial_heldout.has_value());
  EXPECT_GT(*res.log.back().heldout_con, res.initial_heldout->con);
}

TEST(TrainerConfig, Validation) {
  TrainerConfig c;
  c.clip_eta = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.samples_per_variant = 0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_EQ(parse_algorithm("grpo"), Algorithm::grpo);
  EXPECT_THROW(parse_algorithm("ppo"), ConfigError);
}
