#pragma once

#include "ctxvid/encoder/config.hpp"
#include "ctxvid/encoder/tokens.hpp"
#include "ctxvid/nn/layers.hpp"

namespace ctxvid::encoder {

/// Pixel-level context features for every generated frame. Learnable tokens
/// T_vis (one per frame and latent pixel), offset by a projection of the
/// query pixel's Plücker ray, attend to projected context latents under the
/// epipolar mask. The attended feature is concatenated with the sinusoidal
/// embedding of the frame index and passed through an FFN:
///   a = EpiAttn(T_vis + P_q W_q, [Z_ctx, P_ctx] W_kv, m)
///   F_vis = a + FFN([a, emb(t)])
template <class S>
class VisualStream {
 public:
  VisualStream() = default;
  VisualStream(ParamStore<S>& store, const std::string& name, const EncoderConfig& cfg, std::size_t frames, std::size_t hw,
               std::size_t channels, std::mt19937_64& rng)
      : cfg_(cfg), frames_(frames), hw_(hw), channels_(channels) {
    cfg.validate();
    tokens_ = &store.add_normal(name + ".tokens", {frames * hw, cfg.dim}, 1.0, rng);
    query_ray_ = nn::Linear<S>(store, name + ".qray", 6, cfg.dim, rng);
    kv_in_ = nn::Linear<S>(store, name + ".kv", channels + 6, cfg.dim, rng);
    attn_ = nn::MultiHeadAttention<S>(store, name + ".attn", cfg.dim, cfg.dim, cfg.dim, cfg.dim, cfg.heads, rng, false);
    ffn_ = nn::FeedForward<S>(store, name + ".ffn", 2 * cfg.dim, cfg.dim * cfg.ffn_mult, cfg.dim, rng, false);
  }

  /// z_ctx: (N*hw, C); plucker_q: (T*hw, 6); plucker_ctx: (N*hw, 6);
  /// mask: (T*hw, N*hw) or null for unrestricted attention.
  Var<S> operator()(Graph<S>& g, const Var<S>& z_ctx, const Var<S>& plucker_q, const Var<S>& plucker_ctx, const BitMatrix* mask,
                    const std::vector<std::size_t>& frame_index) const {
    if (z_ctx.rows() == 0) throw MissingContextError("visual stream: no context frames");
    if (z_ctx.rows() % hw_ || z_ctx.cols() != channels_) throw ShapeError("visual stream: context latents " + shape_str(z_ctx.value().shape()));
    const std::size_t n = z_ctx.rows() / hw_;
    if (n > cfg_.max_context) throw ConfigError("visual stream: " + std::to_string(n) + " context frames exceed the limit of " + std::to_string(cfg_.max_context));
    if (plucker_q.rows() != frames_ * hw_ || plucker_q.cols() != 6) throw ShapeError("visual stream: query Plücker field shape");
    if (plucker_ctx.rows() != z_ctx.rows() || plucker_ctx.cols() != 6) throw ShapeError("visual stream: context Plücker field shape");
    if (frame_index.size() != frames_) throw ShapeError("visual stream: need one frame index per generated frame");
    if (mask && (mask->rows() != frames_ * hw_ || mask->cols() != z_ctx.rows()))
      throw ShapeError("visual stream: mask is " + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()));

    auto q = add(g.param(*tokens_), query_ray_(g, plucker_q));
    auto kv = kv_in_(g, concat_cols<S>({z_ctx, plucker_ctx}));
    auto a = attn_(g, q, kv, mask);
    auto temb = g.constant(frame_embedding_rows<S>(frame_index, hw_, cfg_.dim, cfg_.temporal_embedding));
    return add(a, ffn_(g, concat_cols<S>({a, temb})));
  }

  std::size_t frames() const { return frames_; }
  std::size_t hw() const { return hw_; }

 private:
  EncoderConfig cfg_;
  std::size_t frames_ = 0, hw_ = 0, channels_ = 0;
  nn::Parameter<S>* tokens_ = nullptr;
  nn::Linear<S> query_ray_, kv_in_;
  nn::MultiHeadAttention<S> attn_;
  nn::FeedForward<S> ffn_;
};

}  // namespace ctxvid::encoder
