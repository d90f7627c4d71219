#pragma once

#include <algorithm>
#include <functional>

#include "ctxvid/diffusion/denoiser.hpp"
#include "ctxvid/diffusion/losses.hpp"
#include "ctxvid/diffusion/schedule.hpp"

namespace ctxvid::diffusion {

/// Noise predictor used by the sampler: (x_t, t) -> eps_hat.
template <class S>
using EpsFn = std::function<Tensor<S>(const Tensor<S>& x, std::size_t t)>;

/// Uniformly strided sub-schedule ending at `start`: tau_i = floor(i * start / steps), i = 1..steps.
inline std::vector<std::size_t> ddim_timesteps(std::size_t start, std::size_t steps) {
  if (steps < 1) throw ConfigError("DDIM needs at least one step");
  if (steps > start) throw ConfigError("DDIM steps (" + std::to_string(steps) + ") exceed the starting step " + std::to_string(start));
  std::vector<std::size_t> tau(steps);
  for (std::size_t i = 1; i <= steps; ++i) tau[i - 1] = i * start / steps;
  return tau;
}

/// Deterministic DDIM (eta = 0) from x at diffusion step `start` down to the
/// clean sample:
///   x0_hat = (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t)
///   x_prev = sqrt(ab_prev) x0_hat + sqrt(1 - ab_prev) eps
/// with ab_0 = 1 after the last step. A positive `clip_x0` clamps x0_hat to
/// [-clip_x0, clip_x0] and re-derives eps from the clamped value; at high
/// noise levels x0_hat amplifies small eps errors by 1 / sqrt(ab).
/// A non-null `anchor` overwrites the leading entries of x0_hat (the first
/// frame, for a frame-major latent) with known values, again re-deriving eps.
template <class S>
Tensor<S> ddim_sample_from(const EpsFn<S>& eps_fn, Tensor<S> x, std::size_t start, std::size_t steps, const NoiseSchedule& s,
                           double clip_x0 = 0, const Tensor<S>* anchor = nullptr) {
  if (anchor && anchor->size() > x.size()) throw ShapeError("DDIM: anchor larger than the sample");
  const std::size_t anchored = anchor ? anchor->size() : 0;
  s.check_step(start);
  const auto tau = ddim_timesteps(start, steps);
  for (std::size_t i = tau.size(); i-- > 0;) {
    const std::size_t t = tau[i], prev = i == 0 ? 0 : tau[i - 1];
    const Tensor<S> eps = eps_fn(x, t);
    if (eps.shape() != x.shape()) throw ShapeError("DDIM: noise prediction shape mismatch");
    const double ab = s.alpha_bar[t], ab_prev = s.alpha_bar[prev];
    const S inv_sqrt_ab = S(1.0 / std::sqrt(ab)), sqrt_1m_ab = S(std::sqrt(1.0 - ab));
    const S sqrt_ab_prev = S(std::sqrt(ab_prev)), sqrt_1m_ab_prev = S(std::sqrt(1.0 - ab_prev));
    for (std::size_t k = 0; k < x.size(); ++k) {
      S x0 = (x[k] - sqrt_1m_ab * eps[k]) * inv_sqrt_ab;
      S e = eps[k];
      if (k < anchored) {
        x0 = (*anchor)[k];
        e = (x[k] - S(std::sqrt(ab)) * x0) / sqrt_1m_ab;
      } else if (clip_x0 > 0 && std::abs(double(x0)) > clip_x0) {
        x0 = S(std::clamp(double(x0), -clip_x0, clip_x0));
        e = (x[k] - S(std::sqrt(ab)) * x0) / sqrt_1m_ab;
      }
      x[k] = sqrt_ab_prev * x0 + sqrt_1m_ab_prev * e;
    }
  }
  return x;
}

/// Classifier-free-guided noise predictor for a denoiser and condition set.
template <class S>
EpsFn<S> guided_eps(const Denoiser<S>& model, const ConditionSet<S>& cond, double cfg_scale) {
  return [&model, &cond, cfg_scale](const Tensor<S>& x, std::size_t t) {
    Tensor<S> c = cfg_scale == 0.0 ? Tensor<S>() : model.predict(x, t, cond, false);
    if (cfg_scale == 1.0) return c;
    Tensor<S> u = model.predict(x, t, cond, true);
    if (cfg_scale == 0.0) return u;
    return cfg_combine(c, u, cfg_scale);
  };
}

/// Samples a latent video starting from Gaussian noise drawn with `seed`.
/// With `anchor_reference` the first frame is pinned to cond.z_ref.
template <class S>
Tensor<S> ddim_sample(const Denoiser<S>& model, const ConditionSet<S>& cond, std::size_t steps, double cfg_scale, std::uint64_t seed,
                      const NoiseSchedule& s, double clip_x0 = 0, bool anchor_reference = false) {
  if (steps > s.steps()) throw ConfigError("DDIM steps exceed the diffusion horizon");
  std::mt19937_64 rng(seed);
  const auto& m = model.config();
  Tensor<S> x = gaussian_like<S>({m.tokens(), m.channels}, rng);
  return ddim_sample_from<S>(guided_eps(model, cond, cfg_scale), std::move(x), s.steps(), steps, s, clip_x0,
                              anchor_reference ? &cond.z_ref : nullptr);
}

}  // namespace ctxvid::diffusion
