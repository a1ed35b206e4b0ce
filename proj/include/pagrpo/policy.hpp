#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pagrpo/core.hpp"
#include "pagrpo/rng.hpp"

namespace pagrpo {

/// Parameters of the synthetic choice policy. The logit of a displayed slot
/// is  content_weight * u[semantic] + label_bias[symbol] + position_bias[position].
/// The same struct doubles as a gradient.
struct PolicyParams {
  static constexpr std::size_t kDim = 9;

  double content_weight = 0.0;
  std::array<double, 4> label_bias{};     // indexed by symbol A..D
  std::array<double, 4> position_bias{};  // indexed by display position 1..4

  std::array<double, kDim> flat() const {
    return {content_weight,   label_bias[0],    label_bias[1],    label_bias[2],   label_bias[3],
            position_bias[0], position_bias[1], position_bias[2], position_bias[3]};
  }

  static PolicyParams from_flat(const std::array<double, kDim>& v) {
    PolicyParams p;
    p.content_weight = v[0];
    for (std::size_t k = 0; k < 4; ++k) {
      p.label_bias[k] = v[1 + k];
      p.position_bias[k] = v[5 + k];
    }
    return p;
  }

  PolicyParams& operator+=(const PolicyParams& o) {
    content_weight += o.content_weight;
    for (std::size_t k = 0; k < 4; ++k) {
      label_bias[k] += o.label_bias[k];
      position_bias[k] += o.position_bias[k];
    }
    return *this;
  }

  PolicyParams& operator*=(double s) {
    content_weight *= s;
    for (std::size_t k = 0; k < 4; ++k) {
      label_bias[k] *= s;
      position_bias[k] *= s;
    }
    return *this;
  }

  friend PolicyParams operator+(PolicyParams a, const PolicyParams& b) { return a += b; }
  friend PolicyParams operator*(double s, PolicyParams a) { return a *= s; }

  bool all_finite() const {
    const auto v = flat();
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  }

  double norm() const {
    double s = 0.0;
    for (double x : flat()) s += x * x;
    return std::sqrt(s);
  }

  bool operator==(const PolicyParams&) const = default;
};

using PolicyGrad = PolicyParams;

// Default starting point for experiments: a strong preference for label A.
inline PolicyParams biased_default_params() {
  PolicyParams p;
  p.content_weight = 0.5;
  p.label_bias = {2.0, 0.0, 0.0, 0.0};
  return p;
}

/// Hidden per-candidate quality, indexed by semantic index - 1.
struct LatentUtilities {
  std::vector<double> values;

  double at(int semantic) const { return values[static_cast<std::size_t>(semantic - 1)]; }
  bool operator==(const LatentUtilities&) const = default;
};

struct UtilitySpec {
  double margin = 1.0;  // utility of the ground truth
  double spread = 0.5;  // std dev of the zero-mean distractor utilities
  std::uint64_t seed = 0;
};

inline LatentUtilities make_utilities(const Instance& inst, const UtilitySpec& spec) {
  auto eng = keyed_engine({spec.seed, stable_hash(inst.id), 0x7574696cULL});
  std::normal_distribution<double> noise(0.0, spec.spread);
  LatentUtilities u;
  u.values.resize(static_cast<std::size_t>(inst.n()));
  for (int k = 1; k <= inst.n(); ++k) {
    const double draw = noise(eng);
    u.values[static_cast<std::size_t>(k - 1)] = k == inst.ground_truth ? spec.margin : draw;
  }
  return u;
}

/// An instance together with the latent utilities the simulator uses for it.
struct Scenario {
  Instance instance;
  LatentUtilities utilities;
};

using Dataset = std::vector<Scenario>;

struct NoiseConfig {
  double p_malformed = 0.05;    // includes the unparseable fraction
  double p_unparseable = 0.01;
  double length_mean = 24.0;
  double length_spread = 8.0;

  static NoiseConfig clean() { return {0.0, 0.0, 24.0, 0.0}; }
};

inline void validate(const NoiseConfig& n) {
  const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(n.p_malformed) || !prob(n.p_unparseable)) throw ConfigError("noise probabilities must lie in [0, 1]");
  if (n.p_unparseable > n.p_malformed) throw ConfigError("noise.p_unparseable must not exceed noise.p_malformed");
  if (!std::isfinite(n.length_mean) || !(n.length_spread >= 0.0)) throw ConfigError("bad noise length distribution");
}

inline std::vector<double> logits(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v) {
  std::vector<double> z;
  z.reserve(v.slots.size());
  for (const Slot& s : v.slots) {
    z.push_back(params.content_weight * u.at(s.semantic) +
                params.label_bias[static_cast<std::size_t>(symbol_index(s.symbol) - 1)] +
                params.position_bias[static_cast<std::size_t>(s.position - 1)]);
  }
  return z;
}

// Max-subtracted log-softmax.
inline std::vector<double> log_softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double x : z) s += std::exp(x - m);
  const double lse = m + std::log(s);
  std::vector<double> out;
  out.reserve(z.size());
  for (double x : z) out.push_back(x - lse);
  return out;
}

inline std::vector<double> log_probs(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v) {
  return log_softmax(logits(params, u, v));
}

inline std::vector<double> probs(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v) {
  auto lp = log_probs(params, u, v);
  for (double& x : lp) x = std::exp(x);
  return lp;
}

inline double log_prob(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v,
                       std::size_t slot) {
  return log_probs(params, u, v).at(slot);
}

namespace detail {

// d(logit_j)/d(params): the feature vector of slot j.
inline PolicyGrad slot_features(const LatentUtilities& u, const Slot& s) {
  PolicyGrad f;
  f.content_weight = u.at(s.semantic);
  f.label_bias[static_cast<std::size_t>(symbol_index(s.symbol) - 1)] = 1.0;
  f.position_bias[static_cast<std::size_t>(s.position - 1)] = 1.0;
  return f;
}

// Chain rule through the linear logits: sum_j coeff[j] * phi_j.
inline PolicyGrad pull_back(const LatentUtilities& u, const PromptVariant& v, const std::vector<double>& coeff) {
  PolicyGrad g;
  for (std::size_t j = 0; j < v.slots.size(); ++j) g += coeff[j] * slot_features(u, v.slots[j]);
  return g;
}

}  // namespace detail

/// Gradient of log pi(slot): phi_slot - E_pi[phi].
inline PolicyGrad log_prob_grad(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v,
                                std::size_t slot) {
  std::vector<double> coeff = probs(params, u, v);
  for (double& c : coeff) c = -c;
  coeff.at(slot) += 1.0;
  return detail::pull_back(u, v, coeff);
}

// KL(pi_params || pi_ref) over the slots of one variant.
inline double kl_to(const PolicyParams& params, const PolicyParams& ref, const LatentUtilities& u,
                    const PromptVariant& v) {
  const auto lp = log_probs(params, u, v);
  const auto lq = log_probs(ref, u, v);
  double kl = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) kl += std::exp(lp[j]) * (lp[j] - lq[j]);
  return std::max(kl, 0.0);
}

inline PolicyGrad kl_grad(const PolicyParams& params, const PolicyParams& ref, const LatentUtilities& u,
                          const PromptVariant& v) {
  const auto lp = log_probs(params, u, v);
  const auto lq = log_probs(ref, u, v);
  double kl = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) kl += std::exp(lp[j]) * (lp[j] - lq[j]);
  std::vector<double> coeff(lp.size());
  for (std::size_t j = 0; j < lp.size(); ++j) coeff[j] = std::exp(lp[j]) * (lp[j] - lq[j] - kl);
  return detail::pull_back(u, v, coeff);
}

// Shannon entropy in nats.
inline double entropy(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v) {
  double h = 0.0;
  for (double l : log_probs(params, u, v)) h -= std::exp(l) * l;
  return h;
}

inline PolicyGrad entropy_grad(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v) {
  const auto lp = log_probs(params, u, v);
  double h = 0.0;
  for (double l : lp) h -= std::exp(l) * l;
  std::vector<double> coeff(lp.size());
  for (std::size_t j = 0; j < lp.size(); ++j) coeff[j] = -std::exp(lp[j]) * (lp[j] + h);
  return detail::pull_back(u, v, coeff);
}

// Highest-probability slot; ties go to the lowest display position.
inline std::size_t argmax_slot(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v) {
  const auto z = logits(params, u, v);
  std::size_t best = 0;
  for (std::size_t j = 1; j < z.size(); ++j) {
    if (z[j] > z[best] || (z[j] == z[best] && v.slots[j].position < v.slots[best].position)) best = j;
  }
  return best;
}

/// Engine for one sampled response. Keyed on (seed, instance, variant,
/// sample) so parallel rollout reproduces serial rollout exactly.
inline std::mt19937_64 sample_engine(std::uint64_t seed, const std::string& instance_id, int permutation_index,
                                     int sample_index) {
  return keyed_engine({seed, stable_hash(instance_id), static_cast<std::uint64_t>(permutation_index),
                       static_cast<std::uint64_t>(sample_index)});
}

namespace detail {

inline std::string render_answer(char symbol, double u_noise, double u_template, const NoiseConfig& noise) {
  const char lower = static_cast<char>(symbol - 'A' + 'a');
  if (u_noise < noise.p_unparseable) {
    static constexpr std::array<const char*, 3> kBlank{"no idea", "I cannot decide.", "unsure, sorry"};
    return kBlank[static_cast<std::size_t>(u_template * kBlank.size())];
  }
  if (u_noise < noise.p_malformed) {
    switch (static_cast<int>(u_template * 3.0)) {
      case 0: return std::string("i think ") + lower + " maybe";
      case 1: return std::string("The answer is probably ") + symbol + ".";
      default: return std::string(1, symbol);
    }
  }
  return std::string("Answer: ") + symbol;
}

}  // namespace detail

struct SampledResponse {
  std::size_t slot = 0;  // slot the policy picked, whatever the text says
  Response response;
};

/// Draws a slot from the policy, renders it as text (possibly degraded by
/// `noise`) and parses the text back through make_response.
inline SampledResponse sample_with_slot(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v,
                                        const NoiseConfig& noise, std::mt19937_64& eng) {
  const double u_choice = uniform01(eng);
  const double u_noise = uniform01(eng);
  const double u_template = uniform01(eng);
  const double u_len = uniform01(eng);
  const double u_len2 = uniform01(eng);

  const auto p = probs(params, u, v);
  std::size_t slot = p.size() - 1;
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u_choice < acc) {
      slot = j;
      break;
    }
  }

  // Box-Muller from two uniforms keeps the draw count per sample fixed.
  const double gauss = std::sqrt(-2.0 * std::log1p(-u_len)) * std::cos(2.0 * std::numbers::pi * u_len2);
  const long len = std::lround(noise.length_mean + noise.length_spread * gauss);
  const int length_units = static_cast<int>(std::max(0L, len));

  std::string text = detail::render_answer(v.slots[slot].symbol, u_noise, u_template, noise);
  return {slot, make_response(std::move(text), v, length_units)};
}

inline Response sample(const PolicyParams& params, const LatentUtilities& u, const PromptVariant& v,
                       const NoiseConfig& noise, std::mt19937_64& eng) {
  return sample_with_slot(params, u, v, noise, eng).response;
}

}  // namespace pagrpo
