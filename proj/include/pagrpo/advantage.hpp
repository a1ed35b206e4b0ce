#pragma once

#include <cmath>
#include <span>

#include "pagrpo/error.hpp"
#include "pagrpo/matrix.hpp"

namespace pagrpo {

struct AdvantageConfig {
  double delta = 1e-6;    // groups with sigma below this get zero advantage
  double epsilon = 1e-8;  // denominator stabilizer
};

inline void validate(const AdvantageConfig& cfg) {
  if (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon)) throw ConfigError("advantage.epsilon must be > 0");
  if (!(cfg.delta >= 0.0) || !std::isfinite(cfg.delta)) throw ConfigError("advantage.delta must be >= 0");
}

struct GroupStats {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
  Matrix<double> advantages;
};

struct MeanStd {
  double mu = 0.0;
  double sigma = 0.0;
};

// Two-pass mean and population standard deviation.
inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) throw ShapeError("reward matrix is empty");
  double sum = 0.0;
  for (double x : xs) {
    if (!std::isfinite(x)) throw NumericError("non-finite reward");
    sum += x;
  }
  const double n = static_cast<double>(xs.size());
  const double mu = sum / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return {mu, std::sqrt(ss / n)};
}

inline MeanStd group_stats(const Matrix<double>& rewards) { return mean_std(rewards.flat()); }

namespace detail {

inline void standardize(std::span<const double> in, std::span<double> out, const AdvantageConfig& cfg) {
  const MeanStd s = mean_std(in);
  if (s.sigma < cfg.delta) {
    for (double& a : out) a = 0.0;
    return;
  }
  const double denom = s.sigma + cfg.epsilon;
  for (std::size_t k = 0; k < in.size(); ++k) out[k] = (in[k] - s.mu) / denom;
}

}  // namespace detail

/// Standardizes every reward against the statistics of the whole
/// permutation group (all P x N samples).
inline Matrix<double> cross_permutation_advantage(const Matrix<double>& rewards, const AdvantageConfig& cfg = {}) {
  Matrix<double> out(rewards.rows(), rewards.cols());
  detail::standardize(rewards.flat(), out.flat(), cfg);
  return out;
}

inline GroupStats cross_permutation_stats(const Matrix<double>& rewards, const AdvantageConfig& cfg = {}) {
  const MeanStd s = group_stats(rewards);
  return {s.mu, s.sigma, cross_permutation_advantage(rewards, cfg)};
}

/// Standard GRPO baseline: each variant row is standardized on its own.
inline Matrix<double> per_prompt_advantage(const Matrix<double>& rewards, const AdvantageConfig& cfg = {}) {
  if (rewards.empty()) throw ShapeError("reward matrix is empty");
  Matrix<double> out(rewards.rows(), rewards.cols());
  for (std::size_t t = 0; t < rewards.rows(); ++t) detail::standardize(rewards.row(t), out.row(t), cfg);
  return out;
}

}  // namespace pagrpo
