#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid::diffusion {

using nn::Tensor;

/// Variance schedule beta_1..beta_T with alpha_t = 1 - beta_t and the running
/// product alpha_bar_t. Index 0 of every vector is the noiseless state
/// (beta 0, alpha_bar 1), so vectors have T + 1 entries.
struct NoiseSchedule {
  std::vector<double> beta, alpha, alpha_bar;

  std::size_t steps() const { return beta.size() - 1; }
  void check_step(std::size_t t) const {
    if (t < 1 || t > steps()) throw ConfigError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
};

/// Linearly spaced betas from beta_start to beta_end.
inline NoiseSchedule build_schedule(std::size_t steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_start > 0) || !(beta_start <= beta_end) || !(beta_end < 1))
    throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  for (std::size_t t = 1; t <= steps; ++t) {
    s.beta[t] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(t - 1) / double(steps - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

/// Closed form z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
template <class S>
Tensor<S> forward_noising(const Tensor<S>& z0, std::size_t t, const Tensor<S>& eps, const NoiseSchedule& s) {
  s.check_step(t);
  if (z0.shape() != eps.shape()) throw ShapeError("forward_noising: noise shape " + shape_str(eps.shape()) + " != " + shape_str(z0.shape()));
  const S a = S(std::sqrt(s.alpha_bar[t])), b = S(std::sqrt(1.0 - s.alpha_bar[t]));
  Tensor<S> out(z0.shape());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

/// One transition of the stepwise kernel: z_t = sqrt(alpha_t) z_{t-1} + sqrt(beta_t) eps.
template <class S>
Tensor<S> noising_step(const Tensor<S>& prev, std::size_t t, const Tensor<S>& eps, const NoiseSchedule& s) {
  s.check_step(t);
  const S a = S(std::sqrt(s.alpha[t])), b = S(std::sqrt(s.beta[t]));
  Tensor<S> out(prev.shape());
  for (std::size_t i = 0; i < prev.size(); ++i) out[i] = a * prev[i] + b * eps[i];
  return out;
}

template <class S>
Tensor<S> gaussian_like(const Shape& shape, std::mt19937_64& rng) {
  Tensor<S> t(shape);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : t.vec()) v = S(n(rng));
  return t;
}

}  // namespace ctxvid::diffusion
