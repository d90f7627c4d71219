#pragma once

#include <cmath>
#include <vector>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid::metrics {

using Frame = nn::Tensor<double>;  // H x W x channels
using Video = std::vector<Frame>;

namespace detail {
inline void require_same(const Video& a, const Video& b) {
  if (a.size() != b.size()) throw ShapeError("videos have different frame counts");
  for (std::size_t t = 0; t < a.size(); ++t)
    if (a[t].shape() != b[t].shape())
      throw ShapeError("frame " + std::to_string(t) + " shape " + shape_str(a[t].shape()) + " vs " + shape_str(b[t].shape()));
}
}  // namespace detail

/// Mean squared difference of each frame pair.
inline std::vector<double> mse_per_frame(const Video& gen, const Video& gt) {
  detail::require_same(gen, gt);
  std::vector<double> out;
  out.reserve(gen.size());
  for (std::size_t t = 0; t < gen.size(); ++t) {
    double acc = 0;
    for (std::size_t i = 0; i < gen[t].size(); ++i) {
      const double d = gen[t][i] - gt[t][i];
      acc += d * d;
    }
    out.push_back(acc / double(gen[t].size()));
  }
  return out;
}

struct SsimOptions {
  double dynamic_range = 255.0;
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

namespace detail {
inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double x = i - (size - 1) / 2.0;
    k[i] = std::exp(-x * x / (2 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable 'valid' filtering of one channel of an H x W plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t H, std::size_t W, const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = H - n + 1, ow = W - n + 1;
  std::vector<double> tmp(H * ow);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * plane[y * W + x + i];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}
}  // namespace detail

/// Mean SSIM of two frames, averaged over channels. Gaussian-weighted local
/// statistics over fully contained windows.
inline double ssim(const Frame& a, const Frame& b, const SsimOptions& opt = {}) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: frame shapes differ");
  if (a.ndim() < 2) throw ShapeError("ssim: expected H x W [x C] frame");
  const std::size_t H = a.dim(0), W = a.dim(1), C = a.ndim() > 2 ? a.dim(2) : 1;
  if (H < std::size_t(opt.window) || W < std::size_t(opt.window))
    throw ConfigError("ssim: frame " + std::to_string(H) + "x" + std::to_string(W) + " smaller than window " + std::to_string(opt.window));
  const auto k = detail::gaussian_kernel(opt.window, opt.sigma);
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> x(H * W), y(H * W), xx(H * W), yy(H * W), xy(H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
      x[i] = a[i * C + c];
      y[i] = b[i * C + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, H, W, k);
    const auto my = detail::filter_valid(y, H, W, k);
    const auto sxx = detail::filter_valid(xx, H, W, k);
    const auto syy = detail::filter_valid(yy, H, W, k);
    const auto sxy = detail::filter_valid(xy, H, W, k);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
      total += num / den;
      ++count;
    }
  }
  return total / double(count);
}

inline std::vector<double> ssim_per_frame(const Video& gen, const Video& gt, const SsimOptions& opt = {}) {
  detail::require_same(gen, gt);
  std::vector<double> out;
  out.reserve(gen.size());
  for (std::size_t t = 0; t < gen.size(); ++t) out.push_back(ssim(gen[t], gt[t], opt));
  return out;
}

}  // namespace ctxvid::metrics
