#pragma once

#include <random>
#include <string>

#include "ctxvid/nn/attention.hpp"
#include "ctxvid/nn/ops.hpp"

namespace ctxvid::nn {

/// y = x W + b, W stored (in, out).
template <class S>
struct Linear {
  Parameter<S>* weight = nullptr;
  Parameter<S>* bias = nullptr;

  Linear() = default;
  Linear(ParamStore<S>& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
         bool use_bias = true, bool zero_init = false) {
    weight = zero_init ? &store.add_constant(name + ".w", {in, out}, S(0))
                       : &store.add_uniform(name + ".w", {in, out}, in, rng);
    if (use_bias) bias = &store.add_constant(name + ".b", {out}, S(0));
  }

  std::size_t in_features() const { return weight->value.dim(0); }
  std::size_t out_features() const { return weight->value.dim(1); }

  Var<S> operator()(Graph<S>& g, const Var<S>& x) const {
    auto w = g.param(*weight);
    if (!bias) return linear(x, w);
    auto b = g.param(*bias);
    return linear(x, w, &b);
  }
};

template <class S>
struct LayerNorm {
  Parameter<S>* gamma = nullptr;
  Parameter<S>* beta = nullptr;

  LayerNorm() = default;
  LayerNorm(ParamStore<S>& store, const std::string& name, std::size_t dim) {
    gamma = &store.add_constant(name + ".g", {dim}, S(1));
    beta = &store.add_constant(name + ".b", {dim}, S(0));
  }

  Var<S> operator()(Graph<S>& g, const Var<S>& x) const { return layer_norm(x, g.param(*gamma), g.param(*beta)); }
};

/// Two-layer GELU MLP. The output projection is zero-initialized when the
/// block feeds a residual branch.
template <class S>
struct FeedForward {
  Linear<S> up, down;

  FeedForward() = default;
  FeedForward(ParamStore<S>& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
              std::mt19937_64& rng, bool zero_out = true)
      : up(store, name + ".up", in, hidden, rng), down(store, name + ".down", hidden, out, rng, true, zero_out) {}

  Var<S> operator()(Graph<S>& g, const Var<S>& x) const { return down(g, gelu(up(g, x))); }
};

/// Multi-head attention with learned projections. The output projection is
/// zero-initialized when `zero_out` is set.
template <class S>
struct MultiHeadAttention {
  Linear<S> q_proj, k_proj, v_proj, out_proj;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& store, const std::string& name, std::size_t query_dim, std::size_t key_dim,
                     std::size_t dim, std::size_t out_dim, std::size_t n_heads, std::mt19937_64& rng, bool zero_out = true)
      : q_proj(store, name + ".q", query_dim, dim, rng, false),
        k_proj(store, name + ".k", key_dim, dim, rng, false),
        v_proj(store, name + ".v", key_dim, dim, rng, false),
        out_proj(store, name + ".o", dim, out_dim, rng, true, zero_out),
        heads(n_heads) {
    if (dim % n_heads) throw ConfigError(name + ": attention dim not divisible by heads");
  }

  Var<S> operator()(Graph<S>& g, const Var<S>& x, const Var<S>& context, const BitMatrix* mask = nullptr,
                    AttentionLayout layout = {}) const {
    auto q = q_proj(g, x);
    auto k = k_proj(g, context);
    auto v = v_proj(g, context);
    return out_proj(g, attention(q, k, v, heads, mask, layout));
  }
};

}  // namespace ctxvid::nn
