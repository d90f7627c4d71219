#pragma once

#include <cmath>
#include <concepts>
#include <type_traits>
#include <vector>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid::nn {

/// Interleaved sinusoidal embedding: channel 2i = sin(p * w_i), channel
/// 2i+1 = cos(p * w_i), with w_i = 10000^(-2i/dim).
inline std::vector<double> sinusoidal_embedding(double position, std::size_t dim) {
  if (dim == 0 || dim % 2) throw ConfigError("sinusoidal embedding dim must be even and positive, got " + std::to_string(dim));
  std::vector<double> e(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * double(i) / double(dim));
    e[2 * i] = std::sin(position * freq);
    e[2 * i + 1] = std::cos(position * freq);
  }
  return e;
}

template <std::integral I>
std::vector<double> sinusoidal_embedding(I index, std::size_t dim) {
  if constexpr (std::is_signed_v<I>)
    if (index < 0) throw ConfigError("sinusoidal embedding index must be non-negative");
  return sinusoidal_embedding(static_cast<double>(index), dim);
}

/// Rows of sinusoidal embeddings for a list of positions.
template <class S>
Tensor<S> sinusoidal_table(const std::vector<double>& positions, std::size_t dim) {
  Tensor<S> t = Tensor<S>::matrix(positions.size(), dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const auto e = sinusoidal_embedding(positions[r], dim);
    for (std::size_t c = 0; c < dim; ++c) t.at(r, c) = S(e[c]);
  }
  return t;
}

/// Fixed 2D sinusoidal position code for an h x w grid: half the channels
/// encode the row, half the column. dim must be divisible by 4.
template <class S>
Tensor<S> grid_position_code(std::size_t h, std::size_t w, std::size_t dim) {
  if (dim % 4) throw ConfigError("grid position code dim must be divisible by 4");
  Tensor<S> t = Tensor<S>::matrix(h * w, dim);
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u) {
      const auto ev = sinusoidal_embedding(double(v), dim / 2);
      const auto eu = sinusoidal_embedding(double(u), dim / 2);
      for (std::size_t c = 0; c < dim / 2; ++c) {
        t.at(v * w + u, c) = S(ev[c]);
        t.at(v * w + u, dim / 2 + c) = S(eu[c]);
      }
    }
  return t;
}

}  // namespace ctxvid::nn
