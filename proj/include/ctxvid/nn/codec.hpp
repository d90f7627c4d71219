#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ctxvid/nn/adam.hpp"
#include "ctxvid/nn/layers.hpp"

namespace ctxvid::nn {

struct CodecConfig {
  std::size_t patch = 4;
  std::size_t channels = 8;
};

/// (H, W, 3) image -> (H/p * W/p, 3p^2) matrix of flattened patches, each
/// ordered (dy, dx, channel).
template <class S>
Tensor<S> patchify(const Tensor<S>& image, std::size_t p) {
  if (image.ndim() != 3 || image.dim(2) != 3) throw ShapeError("patchify: expected H x W x 3 image, got " + shape_str(image.shape()));
  const std::size_t H = image.dim(0), W = image.dim(1);
  if (p == 0 || H % p || W % p)
    throw ShapeError("patchify: image " + std::to_string(H) + "x" + std::to_string(W) + " not divisible by patch " + std::to_string(p));
  const std::size_t h = H / p, w = W / p, d = 3 * p * p;
  Tensor<S> out = Tensor<S>::matrix(h * w, d);
  for (std::size_t py = 0; py < h; ++py)
    for (std::size_t px = 0; px < w; ++px)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t c = 0; c < 3; ++c)
            out.at(py * w + px, (dy * p + dx) * 3 + c) = image[((py * p + dy) * W + px * p + dx) * 3 + c];
  return out;
}

template <class S>
Tensor<S> unpatchify(const Tensor<S>& patches, std::size_t h, std::size_t w, std::size_t p) {
  if (patches.rows() != h * w || patches.cols() != 3 * p * p) throw ShapeError("unpatchify: patch matrix shape mismatch");
  const std::size_t W = w * p;
  Tensor<S> img({h * p, W, 3});
  for (std::size_t py = 0; py < h; ++py)
    for (std::size_t px = 0; px < w; ++px)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t c = 0; c < 3; ++c)
            img[((py * p + dy) * W + px * p + dx) * 3 + c] = patches.at(py * w + px, (dy * p + dx) * 3 + c);
  return img;
}

/// Linear patch autoencoder standing in for a pretrained latent codec.
/// Latents are centred per channel and divided by one shared scale, so
/// `encode` returns features of unit mean variance for the diffusion model.
template <class S>
class PatchCodec {
 public:
  PatchCodec() = default;
  PatchCodec(ParamStore<S>& store, const CodecConfig& cfg, std::mt19937_64& rng, const std::string& name = "codec")
      : cfg_(cfg) {
    const std::size_t d = 3 * cfg.patch * cfg.patch;
    enc_ = Linear<S>(store, name + ".enc", d, cfg.channels, rng);
    dec_ = Linear<S>(store, name + ".dec", cfg.channels, d, rng);
    mean_ = &store.add_constant(name + ".mean", {cfg.channels}, S(0));
    std_ = &store.add_constant(name + ".std", {cfg.channels}, S(1));
    mean_->trainable = false;
    std_->trainable = false;
  }

  /// p=1, C=3 codec whose encoder and decoder are the identity.
  static PatchCodec identity(ParamStore<S>& store, std::mt19937_64& rng) {
    PatchCodec c(store, CodecConfig{1, 3}, rng);
    for (auto* w : {c.enc_.weight, c.dec_.weight}) {
      w->value.fill(S(0));
      for (std::size_t i = 0; i < 3; ++i) w->value.at(i, i) = S(1);
    }
    return c;
  }

  const CodecConfig& config() const { return cfg_; }
  std::size_t patch() const { return cfg_.patch; }
  std::size_t channels() const { return cfg_.channels; }

  /// (H, W, 3) -> (H/p, W/p, C) standardized latent.
  Tensor<S> encode(const Tensor<S>& image) const {
    const std::size_t h = image.dim(0) / cfg_.patch, w = image.dim(1) / cfg_.patch;
    Graph<S> g(false);
    auto raw = enc_(g, g.constant(patchify(image, cfg_.patch)));
    Tensor<S> z = raw.value();
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) z.at(r, c) = (z.at(r, c) - mean_->value[c]) / std_->value[c];
    return std::move(z).reshaped({h, w, cfg_.channels});
  }

  /// (h, w, C) standardized latent -> (h*p, w*p, 3) image.
  Tensor<S> decode(const Tensor<S>& latent) const {
    if (latent.ndim() != 3 || latent.dim(2) != cfg_.channels) throw ShapeError("decode: expected h x w x C latent, got " + shape_str(latent.shape()));
    const std::size_t h = latent.dim(0), w = latent.dim(1);
    Tensor<S> z = latent.reshaped({h * w, cfg_.channels});
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) z.at(r, c) = z.at(r, c) * std_->value[c] + mean_->value[c];
    Graph<S> g(false);
    auto px = dec_(g, g.constant(z));
    return unpatchify(px.value(), h, w, cfg_.patch);
  }

  /// Reconstruction of a patch matrix through encoder and decoder (raw, unstandardized path).
  Var<S> reconstruct(Graph<S>& g, const Var<S>& patches) const { return dec_(g, enc_(g, patches)); }

  /// Least-squares fit of encoder and decoder on the patches of `images`,
  /// then per-channel standardization statistics from the same patches.
  /// Returns the reconstruction RMSE over all given images.
  ///
  /// The optimal linear autoencoder is an orthogonal projection, so it is
  /// computed in closed form: the first three latent channels span the
  /// per-colour constant patches (so flat colours round-trip exactly), the
  /// rest are the leading eigenvectors of the patch second-moment matrix
  /// restricted to the complement of that span. Biases are zero.
  double fit(const std::vector<Tensor<S>>& images) {
    if (images.empty()) throw ConfigError("codec fit: no images");
    std::vector<Tensor<S>> all;
    for (const auto& im : images) all.push_back(patchify(im, cfg_.patch));
    const std::size_t d = all[0].cols(), pp = cfg_.patch * cfg_.patch;
    if (cfg_.channels > d) throw ConfigError("codec fit: more latent channels than patch entries");
    using Eigen::Index;
    const Index D = Index(d), L = Index(cfg_.channels);

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(D, D);
    Eigen::VectorXd x(D);
    for (const auto& P : all)
      for (std::size_t r = 0; r < P.rows(); ++r) {
        for (Index k = 0; k < D; ++k) x[k] = double(P.at(r, std::size_t(k)));
        M.noalias() += x * x.transpose();
      }
    const Index n_dc = L >= 3 ? 3 : 0;
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(D, n_dc);
    for (Index c = 0; c < n_dc; ++c)
      for (Index k = 0; k < Index(pp); ++k) Q(k * 3 + c, c) = 1.0 / std::sqrt(double(pp));
    const Eigen::MatrixXd Pc = Eigen::MatrixXd::Identity(D, D) - Q * Q.transpose();
    const Eigen::MatrixXd R = Pc * M * Pc;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (R + R.transpose()));
    Eigen::MatrixXd W(D, L);
    W.leftCols(n_dc) = Q;
    for (Index j = n_dc; j < L; ++j) {
      // Eigenvalues ascend; take from the top. Sign fixed for determinism.
      Eigen::VectorXd v = eig.eigenvectors().col(D - 1 - (j - n_dc));
      Index big = 0;
      v.cwiseAbs().maxCoeff(&big);
      if (v[big] < 0) v = -v;
      W.col(j) = v;
    }
    for (Index k = 0; k < D; ++k)
      for (Index c = 0; c < L; ++c) {
        enc_.weight->value.at(std::size_t(k), std::size_t(c)) = S(W(k, c));
        dec_.weight->value.at(std::size_t(c), std::size_t(k)) = S(W(k, c));
      }
    enc_.bias->value.fill(S(0));
    dec_.bias->value.fill(S(0));

    // Standardization statistics and final error.
    const std::size_t C = cfg_.channels;
    std::vector<double> sum(C, 0.0), sq(C, 0.0);
    double err = 0;
    std::size_t count = 0, entries = 0;
    for (const auto& P : all) {
      Graph<S> g(false);
      auto x = g.constant(P);
      auto z = enc_(g, x);
      auto rec = dec_(g, z);
      for (std::size_t r = 0; r < z.value().rows(); ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const double v = z.value().at(r, c);
          sum[c] += v;
          sq[c] += v * v;
        }
      count += z.value().rows();
      for (std::size_t k = 0; k < P.size(); ++k) err += double(rec.value()[k] - P[k]) * double(rec.value()[k] - P[k]);
      entries += P.size();
    }
    // One shared scale keeps latent distances proportional to pixel
    // distances (the PCA basis is orthonormal); per-channel scaling would
    // inflate the low-energy detail channels.
    double var = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const double m = sum[c] / double(count);
      mean_->value[c] = S(m);
      var += std::max(sq[c] / double(count) - m * m, 0.0) / double(C);
    }
    for (std::size_t c = 0; c < C; ++c) std_->value[c] = S(std::sqrt(std::max(var, 1e-12)));
    return std::sqrt(err / double(entries));
  }

 private:
  CodecConfig cfg_;
  Linear<S> enc_, dec_;
  Parameter<S>* mean_ = nullptr;
  Parameter<S>* std_ = nullptr;
};

}  // namespace ctxvid::nn
