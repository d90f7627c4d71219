#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctxvid/nn/bit_matrix.hpp"
#include "ctxvid/nn/graph.hpp"

namespace ctxvid::nn {

/// Raised when a softmax row has no finite logit (every key masked).
class EmptyRowError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Softmax that subtracts the row maximum first. Entries at -inf map to
/// exactly zero.
template <class S>
std::vector<S> stable_softmax(std::span<const S> logits) {
  S mx = -std::numeric_limits<S>::infinity();
  for (S v : logits) mx = std::max(mx, v);
  if (!std::isfinite(mx)) throw EmptyRowError("softmax row has no finite entry");
  std::vector<S> p(logits.size());
  S z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = logits[i] == -std::numeric_limits<S>::infinity() ? S(0) : std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

/// Row partitioning for block-diagonal attention. With `q_block == 0` all
/// queries form one block. With `k_block == 0` every query block sees every
/// key; otherwise query block b attends to key block b.
struct AttentionLayout {
  std::size_t q_block = 0;
  std::size_t k_block = 0;
};

namespace detail {
template <class S>
using StridedMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0, Eigen::OuterStride<>>;
template <class S>
using ConstStridedMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0, Eigen::OuterStride<>>;

struct AttentionGeometry {
  std::size_t lq, lk, d, dv, heads, dh, dvh, q_block, k_block, blocks;
  bool shared_keys;
  std::size_t key_begin(std::size_t b) const { return shared_keys ? 0 : b * k_block; }
};

inline AttentionGeometry attention_geometry(std::size_t lq, std::size_t dq, std::size_t lk, std::size_t dk,
                                            std::size_t lv, std::size_t dv, std::size_t heads, AttentionLayout layout) {
  if (dq != dk) throw ShapeError("attention: query/key feature dims differ");
  if (lk != lv) throw ShapeError("attention: key/value row counts differ");
  if (heads == 0 || dq % heads || dv % heads) throw ShapeError("attention: feature dims not divisible by head count");
  AttentionGeometry g{};
  g.lq = lq;
  g.lk = lk;
  g.d = dq;
  g.dv = dv;
  g.heads = heads;
  g.dh = dq / heads;
  g.dvh = dv / heads;
  g.q_block = layout.q_block == 0 ? lq : layout.q_block;
  if (g.q_block == 0 || lq % g.q_block) throw ShapeError("attention: query rows not divisible by block size");
  g.blocks = lq / g.q_block;
  g.shared_keys = layout.k_block == 0;
  g.k_block = g.shared_keys ? lk : layout.k_block;
  if (!g.shared_keys && (lk % g.k_block || lk / g.k_block != g.blocks))
    throw ShapeError("attention: key blocks do not pair with query blocks");
  return g;
}
}  // namespace detail

/// Multi-head scaled dot-product attention. Masked (query, key) pairs get a
/// logit of -inf, so their weight is exactly zero. Head h uses feature
/// columns [h*D/heads, (h+1)*D/heads) of q, k and v.
template <class S>
Var<S> attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, std::size_t heads, const BitMatrix* mask = nullptr,
                 AttentionLayout layout = {}) {
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  const auto geo = detail::attention_geometry(Q.rows(), Q.cols(), K.rows(), K.cols(), V.rows(), V.cols(), heads, layout);
  if (mask && (mask->rows() != geo.lq || mask->cols() != geo.lk))
    throw ShapeError("attention: mask shape " + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()) +
                     " does not match " + std::to_string(geo.lq) + "x" + std::to_string(geo.lk));

  const S scale = S(1) / std::sqrt(S(geo.dh));
  const S neg_inf = -std::numeric_limits<S>::infinity();
  Tensor<S> out = Tensor<S>::matrix(geo.lq, geo.dv);
  // probs[(block, head)] is q_block x k_block, stored contiguously.
  auto probs = std::make_shared<std::vector<S>>(geo.blocks * geo.heads * geo.q_block * geo.k_block);

  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> logits(geo.q_block, geo.k_block);
  for (std::size_t b = 0; b < geo.blocks; ++b) {
    const std::size_t q0 = b * geo.q_block, k0 = geo.key_begin(b);
    for (std::size_t h = 0; h < geo.heads; ++h) {
      detail::ConstStridedMap<S> qb(Q.data() + q0 * geo.d + h * geo.dh, geo.q_block, geo.dh, Eigen::OuterStride<>(geo.d));
      detail::ConstStridedMap<S> kb(K.data() + k0 * geo.d + h * geo.dh, geo.k_block, geo.dh, Eigen::OuterStride<>(geo.d));
      detail::ConstStridedMap<S> vb(V.data() + k0 * geo.dv + h * geo.dvh, geo.k_block, geo.dvh, Eigen::OuterStride<>(geo.dv));
      logits.noalias() = (qb * kb.transpose()) * scale;
      S* P = probs->data() + (b * geo.heads + h) * geo.q_block * geo.k_block;
      for (std::size_t i = 0; i < geo.q_block; ++i) {
        S mx = neg_inf;
        for (std::size_t j = 0; j < geo.k_block; ++j) {
          if (mask && !mask->get(q0 + i, k0 + j)) {
            logits(i, j) = neg_inf;
            continue;
          }
          mx = std::max(mx, logits(i, j));
        }
        if (mx == neg_inf) throw EmptyRowError("attention: query row " + std::to_string(q0 + i) + " has no admissible key");
        S z = 0;
        S* pr = P + i * geo.k_block;
        for (std::size_t j = 0; j < geo.k_block; ++j) {
          pr[j] = logits(i, j) == neg_inf ? S(0) : std::exp(logits(i, j) - mx);
          z += pr[j];
        }
        for (std::size_t j = 0; j < geo.k_block; ++j) pr[j] /= z;
      }
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> pm(P, geo.q_block, geo.k_block);
      detail::StridedMap<S> ob(out.data() + q0 * geo.dv + h * geo.dvh, geo.q_block, geo.dvh, Eigen::OuterStride<>(geo.dv));
      ob.noalias() = pm * vb;
    }
  }

  auto& g = *q.graph;
  const std::size_t iq = q.id, ik = k.id, iv = v.id;
  const bool ng = g.needs_grad(iq) || g.needs_grad(ik) || g.needs_grad(iv);
  return g.push(std::move(out), ng, [iq, ik, iv, geo, scale, probs](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const auto& Q = g.value(iq);
    const auto& K = g.value(ik);
    const auto& V = g.value(iv);
    const bool gq = g.needs_grad(iq), gk = g.needs_grad(ik), gv = g.needs_grad(iv);
    S* dQ = gq ? g.grad(iq).data() : nullptr;
    S* dK = gk ? g.grad(ik).data() : nullptr;
    S* dV = gv ? g.grad(iv).data() : nullptr;
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dP(geo.q_block, geo.k_block);
    for (std::size_t b = 0; b < geo.blocks; ++b) {
      const std::size_t q0 = b * geo.q_block, k0 = geo.key_begin(b);
      for (std::size_t h = 0; h < geo.heads; ++h) {
        const S* P = probs->data() + (b * geo.heads + h) * geo.q_block * geo.k_block;
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> pm(P, geo.q_block, geo.k_block);
        detail::ConstStridedMap<S> gob(G.data() + q0 * geo.dv + h * geo.dvh, geo.q_block, geo.dvh, Eigen::OuterStride<>(geo.dv));
        detail::ConstStridedMap<S> vb(V.data() + k0 * geo.dv + h * geo.dvh, geo.k_block, geo.dvh, Eigen::OuterStride<>(geo.dv));
        if (gv) {
          detail::StridedMap<S> dvb(dV + k0 * geo.dv + h * geo.dvh, geo.k_block, geo.dvh, Eigen::OuterStride<>(geo.dv));
          dvb.noalias() += pm.transpose() * gob;
        }
        if (!gq && !gk) continue;
        dP.noalias() = gob * vb.transpose();
        for (std::size_t i = 0; i < geo.q_block; ++i) {
          S dot = 0;
          for (std::size_t j = 0; j < geo.k_block; ++j) dot += dP(i, j) * pm(i, j);
          for (std::size_t j = 0; j < geo.k_block; ++j) dP(i, j) = pm(i, j) * (dP(i, j) - dot) * scale;
        }
        if (gq) {
          detail::ConstStridedMap<S> kb(K.data() + k0 * geo.d + h * geo.dh, geo.k_block, geo.dh, Eigen::OuterStride<>(geo.d));
          detail::StridedMap<S> dqb(dQ + q0 * geo.d + h * geo.dh, geo.q_block, geo.dh, Eigen::OuterStride<>(geo.d));
          dqb.noalias() += dP * kb;
        }
        if (gk) {
          detail::ConstStridedMap<S> qb(Q.data() + q0 * geo.d + h * geo.dh, geo.q_block, geo.dh, Eigen::OuterStride<>(geo.d));
          detail::StridedMap<S> dkb(dK + k0 * geo.d + h * geo.dh, geo.k_block, geo.dh, Eigen::OuterStride<>(geo.d));
          dkb.noalias() += dP.transpose() * qb;
        }
      }
    }
  });
}

/// Masked cross-attention on plain tensors: q is (T*h*w) x D, k and v are
/// (N*h*w) x D, mask is rows(q) x rows(k). Single head, 1/sqrt(D) scaling.
template <class S>
Tensor<S> epi_cross_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, const BitMatrix& mask) {
  Graph<S> g(false);
  auto out = attention(g.constant(q), g.constant(k), g.constant(v), 1, &mask);
  return out.value();
}

}  // namespace ctxvid::nn
