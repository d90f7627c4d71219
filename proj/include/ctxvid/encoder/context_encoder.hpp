#pragma once

#include <memory>
#include <optional>

#include "ctxvid/encoder/fusion_gate.hpp"
#include "ctxvid/encoder/semantic_stream.hpp"
#include "ctxvid/encoder/visual_stream.hpp"
#include "ctxvid/nn/codec.hpp"

namespace ctxvid::encoder {

/// Posed context frames prepared for one clip. Poses are folded into the
/// Plücker rows; `source_index` is each frame's position relative to the
/// first generated frame.
template <class S>
struct ContextBundle {
  Tensor<S> latents;                      // (N*h*w, C)
  Tensor<S> plucker;                      // (N*h*w, 6)
  std::vector<std::size_t> source_index;  // N entries
  std::size_t count() const { return source_index.size(); }

  template <class T>
  ContextBundle<T> cast() const {
    return {latents.template cast<T>(), plucker.template cast<T>(), source_index};
  }
};

/// Codec latents of the context frames stacked as (N, h, w, C).
template <class S>
Tensor<S> embed_context_frames(const std::vector<Tensor<S>>& frames, const nn::PatchCodec<S>& codec) {
  if (frames.empty()) throw MissingContextError("embed_context_frames: no frames");
  std::vector<S> data;
  Shape first;
  for (const auto& f : frames) {
    auto z = codec.encode(f);
    if (first.empty()) first = z.shape();
    if (z.shape() != first) throw ShapeError("embed_context_frames: frames have different sizes");
    data.insert(data.end(), z.vec().begin(), z.vec().end());
  }
  return Tensor<S>({frames.size(), first[0], first[1], first[2]}, std::move(data));
}

/// Semantic and visual streams plus the fusion gate. Streams disabled by the
/// configuration are not instantiated and contribute nothing.
template <class S>
class ContextEncoder {
 public:
  struct Output {
    std::optional<Var<S>> f_sem;  // (|T_sem|, D)
    std::optional<Var<S>> f_vis;  // (T*h*w, D)
    Var<S> fused;                 // (T*h*w, C)
  };

  ContextEncoder() = default;
  ContextEncoder(ParamStore<S>& store, const std::string& name, const EncoderConfig& cfg, std::size_t frames, std::size_t h,
                 std::size_t w, std::size_t channels, std::mt19937_64& rng)
      : cfg_(cfg), vol_{frames, h, w} {
    cfg.validate();
    if (cfg.semantic()) semantic_ = SemanticStream<S>(store, name + ".sem", cfg, rng);
    if (cfg.visual()) {
      visual_ = VisualStream<S>(store, name + ".vis", cfg, frames, h * w, channels, rng);
      gate_ = FusionGate<S>(store, name + ".gate", channels, cfg.dim, rng);
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  /// z_ref: (T*h*w, C) reference latent broadcast over frames.
  /// `unconditional` swaps F_sem for the null tokens and F_vis for zeros.
  Output operator()(Graph<S>& g, const SemanticTokenizer<S>& tok, const Var<S>& z_ref, const Var<S>& img_tokens,
                    const Var<S>& txt_tokens, const ContextBundle<S>& ctx, const Var<S>& plucker_q, const BitMatrix* mask,
                    const std::vector<std::size_t>& frame_index, bool unconditional) const {
    if (ctx.count() == 0) throw MissingContextError("context encoder: no context frames");
    Output out{std::nullopt, std::nullopt, z_ref};
    auto z_ctx = g.constant(ctx.latents);
    if (cfg_.semantic()) {
      out.f_sem = unconditional ? semantic_.null_tokens(g)
                                : semantic_(g, img_tokens, txt_tokens, tok.image_tokens(g, z_ctx), ctx.source_index);
    }
    if (cfg_.visual()) {
      out.f_vis = unconditional ? g.constant(Tensor<S>::matrix(vol_.size(), cfg_.dim))
                                : visual_(g, z_ctx, plucker_q, g.constant(ctx.plucker), mask, frame_index);
      out.fused = gate_(g, z_ref, *out.f_vis, vol_);
    }
    return out;
  }

  const SemanticStream<S>& semantic() const { return semantic_; }
  const VisualStream<S>& visual() const { return visual_; }
  const FusionGate<S>& gate() const { return gate_; }

 private:
  EncoderConfig cfg_;
  nn::Volume vol_;
  SemanticStream<S> semantic_;
  VisualStream<S> visual_;
  FusionGate<S> gate_;
};

}  // namespace ctxvid::encoder
