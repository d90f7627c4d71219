#pragma once

#include <vector>

#include "ctxvid/nn/layers.hpp"

namespace ctxvid::nn {

struct QueryTransformerConfig {
  std::size_t layers = 4;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;

  void validate() const {
    if (layers < 1) throw ConfigError("query transformer needs at least one layer");
    if (heads == 0 || dim % heads) throw ConfigError("query transformer dim must be divisible by heads");
    if (ffn_mult == 0) throw ConfigError("query transformer ffn_mult must be positive");
  }
};

/// Stack of pre-norm blocks in which a query set attends to a fixed context:
///   x += Attn(LN(x), LN(ctx));  x += FFN(LN(x))
/// Residual output projections start at zero, so an untrained stack returns
/// its queries unchanged.
template <class S>
class QueryTransformer {
 public:
  struct Layer {
    LayerNorm<S> norm_q, norm_ctx, norm_ffn;
    MultiHeadAttention<S> attn;
    FeedForward<S> ffn;
  };

  QueryTransformer() = default;
  QueryTransformer(ParamStore<S>& store, const std::string& name, const QueryTransformerConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg) {
    cfg.validate();
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = name + ".l" + std::to_string(l);
      Layer layer;
      layer.norm_q = LayerNorm<S>(store, p + ".ln_q", cfg.dim);
      layer.norm_ctx = LayerNorm<S>(store, p + ".ln_ctx", cfg.dim);
      layer.attn = MultiHeadAttention<S>(store, p + ".attn", cfg.dim, cfg.dim, cfg.dim, cfg.dim, cfg.heads, rng);
      layer.norm_ffn = LayerNorm<S>(store, p + ".ln_ffn", cfg.dim);
      layer.ffn = FeedForward<S>(store, p + ".ffn", cfg.dim, cfg.dim * cfg.ffn_mult, cfg.dim, rng);
      layers_.push_back(layer);
    }
  }

  const QueryTransformerConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Var<S> operator()(Graph<S>& g, Var<S> queries, const Var<S>& context) const {
    if (queries.cols() != cfg_.dim || context.cols() != cfg_.dim)
      throw ShapeError("query transformer: expected feature dim " + std::to_string(cfg_.dim));
    for (const auto& layer : layers_) {
      auto ctx = layer.norm_ctx(g, context);
      queries = add(queries, layer.attn(g, layer.norm_q(g, queries), ctx));
      queries = add(queries, layer.ffn(g, layer.norm_ffn(g, queries)));
    }
    return queries;
  }

 private:
  QueryTransformerConfig cfg_;
  std::vector<Layer> layers_;
};

}  // namespace ctxvid::nn
