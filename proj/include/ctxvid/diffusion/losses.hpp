#pragma once

#include <cmath>
#include <vector>

#include "ctxvid/nn/ops.hpp"

namespace ctxvid::diffusion {

using nn::Graph;
using nn::Var;

/// log10(k + 1) for k = 0..frames-1.
inline std::vector<double> log_frame_weights(std::size_t frames) {
  std::vector<double> w(frames);
  for (std::size_t k = 0; k < frames; ++k) w[k] = std::log10(double(k + 1));
  return w;
}

inline double log_weight_normalizer(std::size_t frames) {
  double s = 0;
  for (double v : log_frame_weights(frames)) s += v;
  return s;
}

/// Per-frame errors weighted by log10(k+1), divided by the sum of weights.
inline double loss_log_weighted(const std::vector<double>& per_frame) {
  if (per_frame.size() < 2) throw ConfigError("log-weighted loss needs at least two frames");
  const auto w = log_frame_weights(per_frame.size());
  double acc = 0;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * per_frame[k];
  return acc / log_weight_normalizer(per_frame.size());
}

/// Differentiable form over a (frames) vector of per-frame MSEs.
template <class S>
Var<S> loss_log_weighted(const Var<S>& per_frame) {
  const std::size_t n = per_frame.value().size();
  if (n < 2) throw ConfigError("log-weighted loss needs at least two frames");
  const auto w = log_frame_weights(n);
  const double z = log_weight_normalizer(n);
  std::vector<S> ws(n);
  for (std::size_t k = 0; k < n; ++k) ws[k] = S(w[k] / z);
  return nn::weighted_sum(per_frame, ws);
}

/// Mean squared error over all entries.
inline double loss_uniform(const nn::Tensor<double>& eps, const nn::Tensor<double>& eps_hat) {
  if (eps.shape() != eps_hat.shape()) throw ShapeError("loss_uniform: shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) acc += (eps_hat[i] - eps[i]) * (eps_hat[i] - eps[i]);
  return acc / double(eps.size());
}

/// eps_u + s (eps_c - eps_u). Scales 1 and 0 return the matching input exactly.
template <class S>
nn::Tensor<S> cfg_combine(const nn::Tensor<S>& cond, const nn::Tensor<S>& uncond, double scale) {
  if (cond.shape() != uncond.shape()) throw ShapeError("cfg_combine: shape mismatch");
  if (scale == 1.0) return cond;
  if (scale == 0.0) return uncond;
  nn::Tensor<S> out(cond.shape());
  const S s = S(scale);
  for (std::size_t i = 0; i < cond.size(); ++i) out[i] = uncond[i] + s * (cond[i] - uncond[i]);
  return out;
}

}  // namespace ctxvid::diffusion
