#pragma once

#include <array>

#include "ctxvid/nn/layers.hpp"

namespace ctxvid::nn {

/// Extent of a (T, h, w) token volume stored as T*h*w rows, frame-major.
struct Volume {
  std::size_t frames = 1, height = 1, width = 1;
  std::size_t size() const { return frames * height * width; }
};

/// Gather indices of the 3x3x3 neighbourhood of every voxel, tap-major within
/// each voxel. Out-of-volume taps point at row `v.size()` (a zero pad row).
inline std::vector<std::size_t> conv3_neighbourhood(const Volume& v) {
  std::vector<std::size_t> idx;
  idx.reserve(v.size() * 27);
  const auto in = [](long x, std::size_t n) { return x >= 0 && x < long(n); };
  for (std::size_t t = 0; t < v.frames; ++t)
    for (std::size_t y = 0; y < v.height; ++y)
      for (std::size_t x = 0; x < v.width; ++x)
        for (long dt = -1; dt <= 1; ++dt)
          for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
              const long tt = long(t) + dt, yy = long(y) + dy, xx = long(x) + dx;
              idx.push_back(in(tt, v.frames) && in(yy, v.height) && in(xx, v.width)
                                ? (std::size_t(tt) * v.height + std::size_t(yy)) * v.width + std::size_t(xx)
                                : v.size());
            }
  return idx;
}

/// 3x3x3 convolution with zero padding ("same" output size), expressed as a
/// neighbourhood gather followed by one matrix product. Weight rows are
/// ordered (dt, dy, dx, in_channel).
template <class S>
struct Conv3d {
  Linear<S> proj;
  std::size_t in_channels = 0;

  Conv3d() = default;
  Conv3d(ParamStore<S>& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng, bool zero_init)
      : proj(store, name, 27 * in, out, rng, true, zero_init), in_channels(in) {}

  Var<S> operator()(Graph<S>& g, const Var<S>& x, const Volume& v) const {
    if (x.rows() != v.size() || x.cols() != in_channels)
      throw ShapeError("conv3d: input " + shape_str(x.value().shape()) + " does not match volume/channels");
    auto padded = concat_rows<S>({x, g.constant(Tensor<S>::matrix(1, in_channels))});
    auto cols = reshape(gather_rows(padded, conv3_neighbourhood(v)), {v.size(), 27 * in_channels});
    return proj(g, cols);
  }

  /// Weight row of tap (dt, dy, dx) in {-1,0,1}^3 and input channel c.
  static std::size_t weight_row(int dt, int dy, int dx, std::size_t c, std::size_t in) {
    return std::size_t(((dt + 1) * 3 + (dy + 1)) * 3 + (dx + 1)) * in + c;
  }
};

}  // namespace ctxvid::nn
