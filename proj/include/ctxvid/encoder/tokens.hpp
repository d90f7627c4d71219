#pragma once

#include <random>
#include <vector>

#include "ctxvid/nn/embedding.hpp"
#include "ctxvid/nn/layers.hpp"

namespace ctxvid::encoder {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;
using nn::add;
using nn::concat_cols;
using nn::concat_rows;
using nn::gather_rows;

/// Image and text token embedders shared by the native conditioning path and
/// the semantic stream. Image tokens are per-latent-pixel linear embeddings
/// plus a fixed grid position code; text tokens come from a learned table in
/// which id 0 is the null token used by the unconditional branch.
template <class S>
class SemanticTokenizer {
 public:
  SemanticTokenizer() = default;
  SemanticTokenizer(ParamStore<S>& store, const std::string& name, std::size_t channels, std::size_t h, std::size_t w,
                    std::size_t dim, std::size_t vocab, std::mt19937_64& rng)
      : image_(store, name + ".img", channels, dim, rng),
        pos_(nn::grid_position_code<S>(h, w, dim)),
        vocab_(vocab) {
    if (vocab < 2) throw ConfigError("text vocabulary needs the null token and at least one word");
    table_ = &store.add_normal(name + ".text", {vocab, dim}, 0.5, rng);
  }

  /// (n*h*w, C) latents -> (n*h*w, D) tokens.
  Var<S> image_tokens(Graph<S>& g, const Var<S>& latents) const {
    const std::size_t hw = pos_.rows();
    if (latents.rows() % hw) throw ShapeError("image_tokens: rows not a multiple of the latent grid");
    const std::size_t n = latents.rows() / hw;
    Tensor<S> pos = Tensor<S>::matrix(n * hw, pos_.cols());
    for (std::size_t k = 0; k < n; ++k) std::copy(pos_.vec().begin(), pos_.vec().end(), pos.data() + k * pos_.size());
    return add(image_(g, latents), g.constant(std::move(pos)));
  }

  Var<S> text_tokens(Graph<S>& g, const std::vector<std::size_t>& ids) const {
    if (ids.empty()) throw ShapeError("text_tokens: empty caption");
    for (auto id : ids)
      if (id >= vocab_) throw ShapeError("text_tokens: token id " + std::to_string(id) + " outside vocabulary");
    return gather_rows(g.param(*table_), ids);
  }

  std::size_t vocab() const { return vocab_; }

 private:
  nn::Linear<S> image_;
  Tensor<S> pos_;
  nn::Parameter<S>* table_ = nullptr;
  std::size_t vocab_ = 0;
};

/// Rows of sinusoidal frame-index embeddings, one block of `rows_per_index`
/// rows per index. All zeros when `enabled` is false.
template <class S>
Tensor<S> frame_embedding_rows(const std::vector<std::size_t>& indices, std::size_t rows_per_index, std::size_t dim, bool enabled) {
  Tensor<S> out = Tensor<S>::matrix(indices.size() * rows_per_index, dim);
  if (!enabled) return out;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto e = nn::sinusoidal_embedding(indices[k], dim);
    for (std::size_t r = 0; r < rows_per_index; ++r)
      for (std::size_t c = 0; c < dim; ++c) out.at(k * rows_per_index + r, c) = S(e[c]);
  }
  return out;
}

}  // namespace ctxvid::encoder
