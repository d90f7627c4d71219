#pragma once

#include <memory>
#include <optional>

#include "ctxvid/diffusion/schedule.hpp"
#include "ctxvid/encoder/context_encoder.hpp"
#include "ctxvid/nn/bit_matrix.hpp"

namespace ctxvid::diffusion {

using ctxvid::BitMatrix;
using nn::Graph;
using nn::Var;
using nn::ParamStore;
using nn::Tensor;
using nn::add;
using nn::add_row;
using nn::concat_cols;
using nn::concat_rows;
using nn::gather_rows;
using nn::silu;

struct ModelConfig {
  std::size_t frames = 16;
  std::size_t latent_h = 8, latent_w = 8, channels = 8;
  std::size_t dim = 32, heads = 4, blocks = 2, ffn_mult = 4;
  std::size_t native_queries = 8, native_layers = 1;
  std::size_t vocab = 32;
  bool use_context = true;
  // Schedule the noise-level skip is scaled by.
  std::size_t diffusion_steps = 1000;
  double beta_start = 1e-4, beta_end = 2e-2;
  encoder::EncoderConfig encoder;  // dim and heads are taken from the fields above

  std::size_t hw() const { return latent_h * latent_w; }
  std::size_t tokens() const { return frames * hw(); }

  encoder::EncoderConfig encoder_config() const {
    auto e = encoder;
    e.dim = dim;
    e.heads = heads;
    return e;
  }

  void validate() const {
    if (frames < 1 || latent_h < 1 || latent_w < 1 || channels < 1) throw ConfigError("model: empty latent video shape");
    if (dim % 4 || dim == 0) throw ConfigError("model: dim must be a positive multiple of 4");
    if (heads == 0 || dim % heads) throw ConfigError("model: dim must be divisible by heads");
    if (blocks == 0 || native_queries == 0 || native_layers == 0) throw ConfigError("model: blocks and native queries must be positive");
    encoder_config().validate();
  }
};

/// Everything a forward pass conditions on apart from the parameters.
/// Plücker rows are relative to the first generated frame's camera.
template <class S>
struct ConditionSet {
  Tensor<S> z_ref;                      // (h*w, C) latent of the reference frame
  Tensor<S> plucker;                    // (T*h*w, 6)
  std::vector<std::size_t> text;        // caption token ids
  encoder::ContextBundle<S> context;    // empty for the context-free model
  std::shared_ptr<const BitMatrix> mask;  // (T*h*w, N*h*w); null means unrestricted
  std::vector<std::size_t> frame_index;   // one per generated frame

  template <class T>
  ConditionSet<T> cast() const {
    return {z_ref.template cast<T>(), plucker.template cast<T>(), text, context.template cast<T>(), mask, frame_index};
  }
};

/// Epsilon-prediction network over a (T*h*w, C) latent video.
///
/// Input tokens are a projection of [z_t, pixel condition, Plücker], plus a
/// fixed grid/frame code and a timestep MLP. Each block applies spatial
/// self-attention within a frame, temporal self-attention per pixel,
/// cross-attention to the native image/text tokens, and an FFN, all pre-norm
/// with zero-initialized residual projections. A zero-initialized linear
/// skip from z_t, scaled by sqrt(1 - alpha_bar_t), is added to the output:
/// for a unit-variance latent the best linear guess of the noise is
/// sqrt(1 - alpha_bar_t) z_t, so the network only has to learn the residual.
///
/// With `use_context`, the context encoder supplies the pixel condition via
/// its fusion gate and F_sem enters through an extra cross-attention branch
/// per block whose output projection starts at zero. Parameters of the
/// backbone are named "bb.*" and all context parameters "ctx.*".
template <class S>
class Denoiser {
 public:
  struct Block {
    nn::LayerNorm<S> ln_s, ln_t, ln_x, ln_f, ln_c;
    nn::MultiHeadAttention<S> spatial, temporal, cross, ctx_cross;
    nn::FeedForward<S> ffn;
  };

  Denoiser(ParamStore<S>& store, const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    const std::size_t D = cfg.dim, C = cfg.channels, H = cfg.heads;
    tok_ = encoder::SemanticTokenizer<S>(store, "bb.tok", C, cfg.latent_h, cfg.latent_w, D, cfg.vocab, rng);
    native_queries_ = &store.add_normal("bb.native.queries", {cfg.native_queries, D}, 1.0, rng);
    native_ = nn::QueryTransformer<S>(store, "bb.native.qt", {cfg.native_layers, D, H, cfg.ffn_mult}, rng);
    in_ = nn::Linear<S>(store, "bb.in", 2 * C + 6, D, rng);
    time1_ = nn::Linear<S>(store, "bb.time1", D, D, rng);
    time2_ = nn::Linear<S>(store, "bb.time2", D, D, rng);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      const std::string p = "bb.blk" + std::to_string(b);
      Block blk;
      blk.ln_s = nn::LayerNorm<S>(store, p + ".ln_s", D);
      blk.spatial = nn::MultiHeadAttention<S>(store, p + ".spatial", D, D, D, D, H, rng);
      blk.ln_t = nn::LayerNorm<S>(store, p + ".ln_t", D);
      blk.temporal = nn::MultiHeadAttention<S>(store, p + ".temporal", D, D, D, D, H, rng);
      blk.ln_x = nn::LayerNorm<S>(store, p + ".ln_x", D);
      blk.cross = nn::MultiHeadAttention<S>(store, p + ".cross", D, D, D, D, H, rng);
      blk.ln_f = nn::LayerNorm<S>(store, p + ".ln_f", D);
      blk.ffn = nn::FeedForward<S>(store, p + ".ffn", D, D * cfg.ffn_mult, D, rng);
      blocks_.push_back(blk);
    }
    out_ln_ = nn::LayerNorm<S>(store, "bb.out_ln", D);
    out_ = nn::Linear<S>(store, "bb.out", D, C, rng, true, true);
    skip_ = nn::Linear<S>(store, "bb.skip", C, C, rng, false, true);
    const auto sched = build_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
    for (double ab : sched.alpha_bar) noise_std_.push_back(std::sqrt(1.0 - ab));

    // Context parameters come last so a baseline built from the same seed
    // shares every backbone value.
    if (cfg.use_context) {
      const auto ecfg = cfg.encoder_config();
      ctx_ = encoder::ContextEncoder<S>(store, "ctx", ecfg, cfg.frames, cfg.latent_h, cfg.latent_w, C, rng);
      if (ecfg.semantic())
        for (std::size_t b = 0; b < cfg.blocks; ++b) {
          const std::string p = "ctx.blk" + std::to_string(b);
          blocks_[b].ln_c = nn::LayerNorm<S>(store, p + ".ln", D);
          blocks_[b].ctx_cross = nn::MultiHeadAttention<S>(store, p + ".xattn", D, D, D, D, H, rng);
        }
    }

    // Fixed per-token code: grid position plus frame index.
    const auto grid = nn::grid_position_code<S>(cfg.latent_h, cfg.latent_w, D);
    token_code_ = Tensor<S>::matrix(cfg.tokens(), D);
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const auto fe = nn::sinusoidal_embedding(t, D);
      for (std::size_t p = 0; p < cfg.hw(); ++p)
        for (std::size_t c = 0; c < D; ++c) token_code_.at(t * cfg.hw() + p, c) = grid.at(p, c) + S(fe[c]);
    }
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t p = 0; p < cfg.hw(); ++p) ref_broadcast_.push_back(p);
    to_pixel_major_.resize(cfg.tokens());
    to_frame_major_.resize(cfg.tokens());
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t p = 0; p < cfg.hw(); ++p) {
        to_pixel_major_[p * cfg.frames + t] = t * cfg.hw() + p;
        to_frame_major_[t * cfg.hw() + p] = p * cfg.frames + t;
      }
  }

  const ModelConfig& config() const { return cfg_; }

  /// z_t: (T*h*w, C). Returns the predicted noise with the same shape.
  Var<S> forward(Graph<S>& g, const Var<S>& z_t, std::size_t t, const ConditionSet<S>& cond, bool unconditional = false) const {
    check(z_t.value(), cond);
    if (t >= noise_std_.size()) throw ConfigError("denoiser: diffusion step " + std::to_string(t) + " beyond the schedule");
    const std::size_t D = cfg_.dim;
    auto z_ref_tokens = g.constant(cond.z_ref);
    auto z_ref = gather_rows(z_ref_tokens, ref_broadcast_);

    auto img_tokens = tok_.image_tokens(g, z_ref_tokens);
    std::vector<std::size_t> null_text(cond.text.size(), 0);
    auto txt_tokens = tok_.text_tokens(g, cond.text);
    auto native_ctx = concat_rows<S>({img_tokens, unconditional ? tok_.text_tokens(g, null_text) : txt_tokens});
    auto native = native_(g, g.param(*native_queries_), native_ctx);

    auto plucker = g.constant(cond.plucker);
    Var<S> pixel_cond = z_ref;
    std::optional<Var<S>> f_sem;
    if (cfg_.use_context) {
      auto enc = ctx_(g, tok_, z_ref, img_tokens, txt_tokens, cond.context, plucker, cond.mask.get(), cond.frame_index, unconditional);
      pixel_cond = enc.fused;
      f_sem = enc.f_sem;
    }

    auto h = in_(g, concat_cols<S>({z_t, pixel_cond, plucker}));
    h = add(h, g.constant(token_code_));
    const auto te = nn::sinusoidal_embedding(double(t), D);
    Tensor<S> te_t = Tensor<S>::matrix(1, D);
    for (std::size_t c = 0; c < D; ++c) te_t[c] = S(te[c]);
    h = add_row(h, time2_(g, silu(time1_(g, g.constant(te_t)))));

    const nn::AttentionLayout per_frame{cfg_.hw(), cfg_.hw()}, per_pixel{cfg_.frames, cfg_.frames};
    for (const auto& blk : blocks_) {
      auto x = blk.ln_s(g, h);
      h = add(h, blk.spatial(g, x, x, nullptr, per_frame));
      auto xt = gather_rows(blk.ln_t(g, h), to_pixel_major_);
      h = add(h, gather_rows(blk.temporal(g, xt, xt, nullptr, per_pixel), to_frame_major_));
      h = add(h, blk.cross(g, blk.ln_x(g, h), native));
      if (f_sem) h = add(h, blk.ctx_cross(g, blk.ln_c(g, h), *f_sem));
      h = add(h, blk.ffn(g, blk.ln_f(g, h)));
    }
    return add(out_(g, out_ln_(g, h)), nn::scale(skip_(g, z_t), S(noise_std_[t])));
  }

  /// Inference helper without gradient recording.
  Tensor<S> predict(const Tensor<S>& z_t, std::size_t t, const ConditionSet<S>& cond, bool unconditional = false) const {
    Graph<S> g(false);
    return forward(g, g.constant(z_t), t, cond, unconditional).value();
  }

 private:
  void check(const Tensor<S>& z_t, const ConditionSet<S>& cond) const {
    if (z_t.rows() != cfg_.tokens() || z_t.cols() != cfg_.channels)
      throw ShapeError("denoiser: latent " + shape_str(z_t.shape()) + " does not match " + std::to_string(cfg_.frames) + " frames of " +
                       std::to_string(cfg_.latent_h) + "x" + std::to_string(cfg_.latent_w) + "x" + std::to_string(cfg_.channels));
    if (cond.z_ref.rows() != cfg_.hw() || cond.z_ref.cols() != cfg_.channels) throw ShapeError("denoiser: reference latent shape");
    if (cond.plucker.rows() != cfg_.tokens() || cond.plucker.cols() != 6) throw ShapeError("denoiser: Plücker field shape");
    if (cfg_.use_context && cond.frame_index.size() != cfg_.frames) throw ShapeError("denoiser: frame index count");
  }

  ModelConfig cfg_;
  encoder::SemanticTokenizer<S> tok_;
  nn::Parameter<S>* native_queries_ = nullptr;
  nn::QueryTransformer<S> native_;
  nn::Linear<S> in_, time1_, time2_, out_, skip_;
  nn::LayerNorm<S> out_ln_;
  std::vector<Block> blocks_;
  encoder::ContextEncoder<S> ctx_;
  Tensor<S> token_code_;
  std::vector<double> noise_std_;  // sqrt(1 - alpha_bar_t), index t
  std::vector<std::size_t> ref_broadcast_, to_pixel_major_, to_frame_major_;
};

}  // namespace ctxvid::diffusion
