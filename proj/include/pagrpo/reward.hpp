#pragma once

#include <cmath>
#include <map>
#include <optional>

#include "pagrpo/core.hpp"
#include "pagrpo/matrix.hpp"

namespace pagrpo {

struct RewardPair {
  double pass = 0.0;
  double fail = 0.0;
};

struct RewardConfig {
  double lambda = 1.0;  // consistency weight
  RewardPair acc{1.0, -1.0};
  RewardPair len{0.1, -0.1};
  RewardPair fmt{0.3, -0.3};
  int min_len = 4;
  int max_len = 40;
};

inline void validate(const RewardConfig& cfg) {
  const auto finite = [](RewardPair p) { return std::isfinite(p.pass) && std::isfinite(p.fail); };
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ConfigError("reward.lambda must be finite and >= 0");
  if (!finite(cfg.acc) || !finite(cfg.len) || !finite(cfg.fmt)) throw ConfigError("reward magnitudes must be finite");
  if (cfg.min_len > cfg.max_len) throw ConfigError("reward.min_len must not exceed reward.max_len");
}

struct PreliminaryReward {
  double r_acc = 0.0;
  double r_len = 0.0;
  double r_fmt = 0.0;

  double sum() const noexcept { return r_acc + r_len + r_fmt; }
};

struct RewardBreakdown {
  double r_acc = 0.0;
  double r_len = 0.0;
  double r_fmt = 0.0;
  double r_con = 0.0;
  double total = 0.0;
};

/// Responses of one permutation group: row t holds the N samples drawn for
/// variant t.
using GroupResponses = Matrix<Response>;
using SemanticMatrix = Matrix<std::optional<int>>;

inline SemanticMatrix semantic_choices(const GroupResponses& group) {
  SemanticMatrix z(group.rows(), group.cols());
  for (std::size_t t = 0; t < group.rows(); ++t)
    for (std::size_t i = 0; i < group.cols(); ++i) z(t, i) = group(t, i).semantic_choice;
  return z;
}

// A missing choice is wrong and malformed; length is judged independently.
inline PreliminaryReward preliminary_reward(const Response& resp, int ground_truth, const RewardConfig& cfg) {
  PreliminaryReward r;
  r.r_acc = resp.semantic_choice == ground_truth ? cfg.acc.pass : cfg.acc.fail;
  r.r_len = (resp.length_units >= cfg.min_len && resp.length_units <= cfg.max_len) ? cfg.len.pass : cfg.len.fail;
  r.r_fmt = (resp.well_formatted && resp.parsed_label.has_value()) ? cfg.fmt.pass : cfg.fmt.fail;
  return r;
}

/// Index-aligned pairing across the two orders: column i agrees iff both
/// choices are present and equal.
inline Matrix<double> judge_consistency(const SemanticMatrix& z) {
  if (z.rows() != 2) throw ShapeError("judge consistency needs exactly 2 permutation rows, got " + std::to_string(z.rows()));
  Matrix<double> out(2, z.cols());
  for (std::size_t i = 0; i < z.cols(); ++i) {
    const bool agree = z(0, i).has_value() && z(0, i) == z(1, i);
    out(0, i) = out(1, i) = agree ? 1.0 : -1.0;
  }
  return out;
}

/// Unique-mode agreement over every present choice in the group. Ties and
/// empty groups penalize everyone.
inline Matrix<double> mcq_consistency(const SemanticMatrix& z) {
  if (z.empty()) throw ShapeError("empty permutation group");
  std::map<int, int> counts;
  for (const auto& c : z) {
    if (c) ++counts[*c];
  }
  int best = 0;
  int n_best = 0;
  std::optional<int> mode;
  for (const auto& [k, n] : counts) {
    if (n > best) {
      best = n;
      n_best = 1;
      mode = k;
    } else if (n == best) {
      ++n_best;
    }
  }
  if (n_best != 1) mode.reset();

  Matrix<double> out(z.rows(), z.cols(), -1.0);
  if (!mode) return out;
  for (std::size_t t = 0; t < z.rows(); ++t)
    for (std::size_t i = 0; i < z.cols(); ++i)
      if (z(t, i) == mode) out(t, i) = 1.0;
  return out;
}

inline Matrix<double> consistency_rewards(const SemanticMatrix& z, Task task) {
  return task == Task::judge ? judge_consistency(z) : mcq_consistency(z);
}

inline Matrix<RewardBreakdown> total_rewards(const GroupResponses& group, int ground_truth, Task task,
                                             const RewardConfig& cfg) {
  if (group.empty()) throw ShapeError("empty permutation group");
  const Matrix<double> con = consistency_rewards(semantic_choices(group), task);
  Matrix<RewardBreakdown> out(group.rows(), group.cols());
  for (std::size_t t = 0; t < group.rows(); ++t) {
    for (std::size_t i = 0; i < group.cols(); ++i) {
      const PreliminaryReward pre = preliminary_reward(group(t, i), ground_truth, cfg);
      RewardBreakdown& b = out(t, i);
      b.r_acc = pre.r_acc;
      b.r_len = pre.r_len;
      b.r_fmt = pre.r_fmt;
      b.r_con = con(t, i);
      b.total = pre.sum() + cfg.lambda * b.r_con;
    }
  }
  return out;
}

inline Matrix<double> totals_of(const Matrix<RewardBreakdown>& rewards) {
  Matrix<double> out(rewards.rows(), rewards.cols());
  for (std::size_t t = 0; t < rewards.rows(); ++t)
    for (std::size_t i = 0; i < rewards.cols(); ++i) out(t, i) = rewards(t, i).total;
  return out;
}

}  // namespace pagrpo
