#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pagrpo/advantage.hpp"
#include "pagrpo/core.hpp"
#include "pagrpo/eval.hpp"
#include "pagrpo/io.hpp"
#include "pagrpo/parallel.hpp"
#include "pagrpo/policy.hpp"
#include "pagrpo/reward.hpp"

namespace pagrpo {

enum class Algorithm { pa_grpo, grpo };

inline std::string_view to_string(Algorithm a) noexcept { return a == Algorithm::pa_grpo ? "pa_grpo" : "grpo"; }

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "pa_grpo" || s == "pa-grpo") return Algorithm::pa_grpo;
  if (s == "grpo") return Algorithm::grpo;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

struct TrainerConfig {
  Algorithm algorithm = Algorithm::pa_grpo;
  PermSet perm_set = PermSet::structured5;
  int samples_per_variant = 8;  // N
  RewardConfig reward;
  AdvantageConfig advantage;
  NoiseConfig noise;
  double clip_eta = 0.2;
  double kl_beta = 0.001;
  double entropy_coef = 0.001;
  double learning_rate = 1.0;
  int epochs = 2;
  int batch_size = 40;
  std::uint64_t seed = 0;
  int workers = 1;
};

inline PermSet default_perm_set(Task task) { return task == Task::judge ? PermSet::judge_pair : PermSet::structured5; }
inline int default_batch_size(Task task) { return task == Task::judge ? 32 : 40; }

inline void validate(const TrainerConfig& cfg) {
  if (cfg.samples_per_variant < 1) throw ConfigError("trainer.n must be >= 1");
  if (!(cfg.clip_eta > 0.0 && cfg.clip_eta < 1.0)) throw ConfigError("trainer.clip_eta must lie in (0, 1)");
  if (!(cfg.kl_beta >= 0.0)) throw ConfigError("trainer.kl_beta must be >= 0");
  if (!(cfg.entropy_coef >= 0.0)) throw ConfigError("trainer.entropy_coef must be >= 0");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) throw ConfigError("trainer.learning_rate must be > 0");
  if (cfg.epochs < 0) throw ConfigError("trainer.epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
  validate(cfg.reward);
  validate(cfg.advantage);
  validate(cfg.noise);
}

/// pi_new / pi_old evaluated in log space.
inline double importance_ratio(double logp_new, double logp_old) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old)) throw NumericError("non-finite log-probability");
  const double rho = std::exp(logp_new - logp_old);
  if (!std::isfinite(rho)) throw NumericError("importance ratio overflow");
  return rho;
}

inline double clipped_surrogate(double rho, double advantage, double eta) {
  const double clipped = std::clamp(rho, 1.0 - eta, 1.0 + eta);
  return std::min(rho * advantage, clipped * advantage);
}

// d/d(rho) of clipped_surrogate: zero once the ratio has left the band in the
// direction the advantage favours.
inline double clipped_surrogate_slope(double rho, double advantage, double eta) {
  if (advantage > 0.0 && rho > 1.0 + eta) return 0.0;
  if (advantage < 0.0 && rho < 1.0 - eta) return 0.0;
  return advantage;
}

struct IterationRecord {
  int iteration = 0;  // 1-based, monotone across epochs
  int epoch = 0;      // 1-based
  std::size_t batch_instances = 0;
  double mean_reward = 0.0;
  double mean_consistency = 0.0;
  double mean_abs_advantage = 0.0;
  double surrogate = 0.0;
  double kl_to_ref = 0.0;  // mean over batch variants, after the update
  double entropy = 0.0;    // mean over batch variants, after the update
  double grad_norm = 0.0;
  std::optional<double> heldout_acc;
  std::optional<double> heldout_con;
  std::optional<double> heldout_ca;
};

using TrainLog = std::vector<IterationRecord>;

/// Rollout of one permutation group: the slot picked and the graded
/// response for every (variant, sample).
struct GroupRollout {
  std::string instance_id;
  Matrix<std::size_t> slots;
  GroupResponses responses;
  Matrix<RewardBreakdown> rewards;
  Matrix<double> advantages;
};

struct StepResult {
  PolicyParams params;
  IterationRecord record;
  std::vector<GroupRollout> rollouts;
};

namespace detail {

struct GroupContribution {
  GroupRollout rollout;
  PolicyGrad surrogate_grad;  // summed over samples
  PolicyGrad kl_grad;         // summed over variants
  PolicyGrad entropy_grad;    // summed over variants
  double surrogate = 0.0;
  double reward = 0.0;
  double consistency = 0.0;
  double abs_advantage = 0.0;
  std::size_t samples = 0;
  std::size_t variants = 0;
};

inline GroupContribution process_group(const Scenario& sc, const std::vector<Permutation>& perms,
                                       const PolicyParams& params, const PolicyParams& old_params,
                                       const PolicyParams& ref_params, const TrainerConfig& cfg,
                                       std::uint64_t step_seed) {
  const std::size_t P = perms.size();
  const auto N = static_cast<std::size_t>(cfg.samples_per_variant);
  GroupContribution out;
  out.rollout.instance_id = sc.instance.id;
  out.rollout.slots = Matrix<std::size_t>(P, N);
  out.rollout.responses = GroupResponses(P, N);

  std::vector<PromptVariant> variants;
  variants.reserve(P);
  for (std::size_t t = 0; t < P; ++t) {
    variants.push_back(apply_permutation(sc.instance, perms[t], Protocol::coupled, static_cast<int>(t)));
  }

  // Rollouts come from the frozen old policy.
  for (std::size_t t = 0; t < P; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      auto eng = sample_engine(step_seed, sc.instance.id, static_cast<int>(t), static_cast<int>(i));
      SampledResponse s = sample_with_slot(old_params, sc.utilities, variants[t], cfg.noise, eng);
      out.rollout.slots(t, i) = s.slot;
      out.rollout.responses(t, i) = std::move(s.response);
    }
  }

  out.rollout.rewards = total_rewards(out.rollout.responses, sc.instance.ground_truth, sc.instance.task, cfg.reward);
  const Matrix<double> totals = totals_of(out.rollout.rewards);
  out.rollout.advantages = cfg.algorithm == Algorithm::pa_grpo ? cross_permutation_advantage(totals, cfg.advantage)
                                                               : per_prompt_advantage(totals, cfg.advantage);

  for (std::size_t t = 0; t < P; ++t) {
    const auto lp_new = log_probs(params, sc.utilities, variants[t]);
    const auto lp_old = log_probs(old_params, sc.utilities, variants[t]);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t slot = out.rollout.slots(t, i);
      const double adv = out.rollout.advantages(t, i);
      const double rho = importance_ratio(lp_new[slot], lp_old[slot]);
      out.surrogate += clipped_surrogate(rho, adv, cfg.clip_eta);
      // d(rho)/d(theta) = rho * grad log pi_theta
      const double coeff = clipped_surrogate_slope(rho, adv, cfg.clip_eta) * rho;
      if (coeff != 0.0) out.surrogate_grad += coeff * log_prob_grad(params, sc.utilities, variants[t], slot);
      out.reward += out.rollout.rewards(t, i).total;
      out.consistency += out.rollout.rewards(t, i).r_con;
      out.abs_advantage += std::abs(adv);
    }
    out.kl_grad += kl_grad(params, ref_params, sc.utilities, variants[t]);
    out.entropy_grad += entropy_grad(params, sc.utilities, variants[t]);
  }
  out.samples = P * N;
  out.variants = P;
  return out;
}

inline void check_task(const Scenario& sc, Task task) {
  if (sc.instance.task != task) throw ConfigError("batch mixes tasks; train on one task at a time");
}

}  // namespace detail

/// One PA-GRPO (or GRPO) iteration over a batch: build coupled permutation
/// groups, sample N responses per variant from `old_params`, score them,
/// standardize, and take a single gradient-ascent step on
///   mean clipped surrogate - beta * mean KL(pi || pi_ref) + c_ent * mean entropy
/// evaluated at `params`. Per-instance work may run on `cfg.workers`
/// threads; gradients are reduced in batch order.
inline StepResult train_step(std::span<const Scenario> batch, const PolicyParams& params,
                             const PolicyParams& old_params, const PolicyParams& ref_params,
                             const TrainerConfig& cfg, std::uint64_t step_seed, bool keep_rollouts = false) {
  if (batch.empty()) throw ShapeError("empty training batch");
  const Task task = batch.front().instance.task;
  for (const auto& sc : batch) detail::check_task(sc, task);
  const auto perms = permutation_set(cfg.perm_set, task);

  std::vector<detail::GroupContribution> parts(batch.size());
  parallel_for(batch.size(), cfg.workers, [&](std::size_t k) {
    parts[k] = detail::process_group(batch[k], perms, params, old_params, ref_params, cfg, step_seed);
  });

  PolicyGrad surrogate_grad, kl_sum, ent_sum;
  double surrogate = 0.0, reward = 0.0, con = 0.0, abs_adv = 0.0;
  std::size_t samples = 0, variants = 0;
  for (const auto& part : parts) {
    surrogate_grad += part.surrogate_grad;
    kl_sum += part.kl_grad;
    ent_sum += part.entropy_grad;
    surrogate += part.surrogate;
    reward += part.reward;
    con += part.consistency;
    abs_adv += part.abs_advantage;
    samples += part.samples;
    variants += part.variants;
  }
  const double ns = static_cast<double>(samples);
  const double nv = static_cast<double>(variants);

  PolicyGrad grad = (1.0 / ns) * surrogate_grad;
  grad += (-cfg.kl_beta / nv) * kl_sum;
  grad += (cfg.entropy_coef / nv) * ent_sum;
  if (!grad.all_finite()) throw NumericError("non-finite policy gradient");

  StepResult result;
  result.params = params + cfg.learning_rate * grad;
  if (!result.params.all_finite()) throw NumericError("non-finite policy parameters after update");

  IterationRecord& rec = result.record;
  rec.batch_instances = batch.size();
  rec.mean_reward = reward / ns;
  rec.mean_consistency = con / ns;
  rec.mean_abs_advantage = abs_adv / ns;
  rec.surrogate = surrogate / ns;
  rec.grad_norm = grad.norm();
  double kl = 0.0, ent = 0.0;
  for (const auto& sc : batch) {
    for (std::size_t t = 0; t < perms.size(); ++t) {
      const PromptVariant v = apply_permutation(sc.instance, perms[t], Protocol::coupled, static_cast<int>(t));
      kl += kl_to(result.params, ref_params, sc.utilities, v);
      ent += entropy(result.params, sc.utilities, v);
    }
  }
  rec.kl_to_ref = kl / nv;
  rec.entropy = ent / nv;

  if (keep_rollouts) {
    for (auto& part : parts) result.rollouts.push_back(std::move(part.rollout));
  }
  return result;
}

// Per-iteration sampling seed; identical for every algorithm under one run seed.
inline std::uint64_t step_seed(std::uint64_t run_seed, int iteration) {
  auto eng = keyed_engine({run_seed, static_cast<std::uint64_t>(iteration), 0x726f6c6cULL});
  return eng();
}

// Instance order for one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t run_seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto eng = keyed_engine({run_seed, static_cast<std::uint64_t>(epoch), 0x73687566ULL});
  // Fisher-Yates with our own uniform draw; std::shuffle's output is library-specific.
  for (std::size_t k = n; k > 1; --k) {
    const auto j = static_cast<std::size_t>(uniform01(eng) * static_cast<double>(k));
    std::swap(order[k - 1], order[std::min(j, k - 1)]);
  }
  return order;
}

struct HeldoutMetrics {
  double acc = 0.0;
  double con = 0.0;
  double ca = 0.0;
};

// Coupled full expansion with argmax decisions.
inline HeldoutMetrics heldout_metrics(const PolicyParams& params, const Dataset& heldout, int workers = 1) {
  const auto reports = evaluate(params, heldout, Protocol::coupled, DecisionMode::argmax(), LabelOnlyMode::full, workers);
  if (reports.empty()) return {};
  return {reports.front().acc, reports.front().con, reports.front().ca};
}

struct TrainResult {
  PolicyParams params;
  TrainLog log;
  std::vector<Checkpoint> checkpoints;  // one per epoch
  std::optional<HeldoutMetrics> initial_heldout;
};

/// Runs `cfg.epochs` passes over shuffled batches. pi_ref stays at
/// `initial`; pi_old is refreshed after every step. When `heldout` is
/// non-empty it is evaluated before training and after every epoch.
inline TrainResult train(const Dataset& data, const Dataset& heldout, const TrainerConfig& cfg,
                         const PolicyParams& initial,
                         const std::function<void(const IterationRecord&)>& on_iteration = {}) {
  validate(cfg);
  TrainResult result;
  result.params = initial;
  if (cfg.epochs == 0) return result;
  if (data.empty()) throw InputError("training dataset is empty");
  const Task task = data.front().instance.task;
  for (const auto& sc : data) detail::check_task(sc, task);
  (void)permutation_set(cfg.perm_set, task);

  if (!heldout.empty()) result.initial_heldout = heldout_metrics(initial, heldout, cfg.workers);

  const PolicyParams ref = initial;
  PolicyParams params = initial;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  int iteration = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), cfg.seed, epoch);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<Scenario> members;
      for (std::size_t k = start; k < std::min(start + batch, order.size()); ++k) members.push_back(data[order[k]]);
      ++iteration;
      const PolicyParams old = params;
      StepResult step = train_step(members, params, old, ref, cfg, step_seed(cfg.seed, iteration));
      params = step.params;
      step.record.iteration = iteration;
      step.record.epoch = epoch;
      const bool epoch_end = start + batch >= order.size();
      if (epoch_end && !heldout.empty()) {
        const HeldoutMetrics m = heldout_metrics(params, heldout, cfg.workers);
        step.record.heldout_acc = m.acc;
        step.record.heldout_con = m.con;
        step.record.heldout_ca = m.ca;
      }
      if (on_iteration) on_iteration(step.record);
      result.log.push_back(step.record);
    }
    result.checkpoints.push_back({params, cfg.seed, iteration, epoch});
  }
  result.params = params;
  return result;
}

}  // namespace pagrpo
