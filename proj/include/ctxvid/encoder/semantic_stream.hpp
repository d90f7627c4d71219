#pragma once

#include "ctxvid/encoder/config.hpp"
#include "ctxvid/encoder/tokens.hpp"
#include "ctxvid/nn/query_transformer.hpp"

namespace ctxvid::encoder {

/// Learnable query tokens T_sem aggregating [F_img, F_txt, F_ctx] through a
/// query transformer. Context tokens carry the sinusoidal embedding of their
/// source frame index.
template <class S>
class SemanticStream {
 public:
  SemanticStream() = default;
  SemanticStream(ParamStore<S>& store, const std::string& name, const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    queries_ = &store.add_normal(name + ".queries", {cfg.sem_queries, cfg.dim}, 1.0, rng);
    null_ = &store.add_normal(name + ".null", {cfg.sem_queries, cfg.dim}, 1.0, rng);
    qt_ = nn::QueryTransformer<S>(store, name + ".qt", {cfg.sem_layers, cfg.dim, cfg.heads, cfg.ffn_mult}, rng);
  }

  /// `ctx_tokens` holds N blocks of equal size, block j from the context frame
  /// at clip-relative index `source_index[j]`.
  Var<S> operator()(Graph<S>& g, const Var<S>& img_tokens, const Var<S>& txt_tokens, const Var<S>& ctx_tokens,
                    const std::vector<std::size_t>& source_index) const {
    const std::size_t n = source_index.size();
    if (n == 0) throw MissingContextError("semantic stream: no context frames");
    if (n > cfg_.max_context) throw ConfigError("semantic stream: " + std::to_string(n) + " context frames exceed the limit of " + std::to_string(cfg_.max_context));
    if (ctx_tokens.rows() % n) throw ShapeError("semantic stream: context tokens do not split into frames");
    auto ctx = add(ctx_tokens, g.constant(frame_embedding_rows<S>(source_index, ctx_tokens.rows() / n, cfg_.dim, cfg_.temporal_embedding)));
    return qt_(g, g.param(*queries_), concat_rows<S>({img_tokens, txt_tokens, ctx}));
  }

  /// Learned replacement for F_sem in the unconditional branch.
  Var<S> null_tokens(Graph<S>& g) const { return g.param(*null_); }

 private:
  EncoderConfig cfg_;
  nn::Parameter<S>* queries_ = nullptr;
  nn::Parameter<S>* null_ = nullptr;
  nn::QueryTransformer<S> qt_;
};

}  // namespace ctxvid::encoder
