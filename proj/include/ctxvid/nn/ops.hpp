#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "ctxvid/nn/graph.hpp"

// Differentiable primitives. Every op treats its inputs as matrices
// (rows x last-dim) and records a backward closure when any input needs a
// gradient.

namespace ctxvid::nn {

namespace detail {
template <class S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.value().shape() != b.value().shape())
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.value().shape()) + " vs " +
                     shape_str(b.value().shape()));
}
template <class S>
void require_same_graph(const Var<S>& a, const Var<S>& b) {
  if (a.graph != b.graph) throw std::logic_error("vars belong to different graphs");
}
}  // namespace detail

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  detail::require_same_graph(a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.rows())
    throw ShapeError("matmul: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  Tensor<S> out = Tensor<S>::matrix(A.rows(), B.cols());
  out.mat().noalias() = A.mat() * B.mat();
  auto& g = *a.graph;
  const std::size_t ia = a.id, ib = b.id;
  return g.push(std::move(out), g.needs_grad(ia) || g.needs_grad(ib), [ia, ib](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia).mat().noalias() += G.mat() * g.value(ib).mat().transpose();
    if (g.needs_grad(ib)) g.grad(ib).mat().noalias() += g.value(ia).mat().transpose() * G.mat();
  });
}

/// x * W + b with W stored (in, out) and b of length out.
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>* b = nullptr) {
  const auto& X = x.value();
  const auto& W = w.value();
  if (X.cols() != W.rows()) throw ShapeError("linear: input " + shape_str(X.shape()) + " weight " + shape_str(W.shape()));
  Tensor<S> out = Tensor<S>::matrix(X.rows(), W.cols());
  out.mat().noalias() = X.mat() * W.mat();
  const bool has_bias = b != nullptr;
  std::size_t ib = 0;
  if (has_bias) {
    ib = b->id;
    const auto& B = b->value();
    if (B.size() != W.cols()) throw ShapeError("linear: bias size mismatch");
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += B[c];
  }
  auto& g = *x.graph;
  const std::size_t ix = x.id, iw = w.id;
  const bool ng = g.needs_grad(ix) || g.needs_grad(iw) || (has_bias && g.needs_grad(ib));
  return g.push(std::move(out), ng, [ix, iw, ib, has_bias](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.needs_grad(ix)) g.grad(ix).mat().noalias() += G.mat() * g.value(iw).mat().transpose();
    if (g.needs_grad(iw)) g.grad(iw).mat().noalias() += g.value(ix).mat().transpose() * G.mat();
    if (has_bias && g.needs_grad(ib)) {
      auto& gb = g.grad(ib);
      for (std::size_t r = 0; r < G.rows(); ++r)
        for (std::size_t c = 0; c < G.cols(); ++c) gb[c] += G.at(r, c);
    }
  });
}

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<S> out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  auto& g = *a.graph;
  const std::size_t ia = a.id, ib = b.id;
  return g.push(std::move(out), g.needs_grad(ia) || g.needs_grad(ib), [ia, ib](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (!g.needs_grad(id)) continue;
      auto& t = g.grad(id);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[i];
    }
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<S> out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  auto& g = *a.graph;
  const std::size_t ia = a.id, ib = b.id;
  return g.push(std::move(out), g.needs_grad(ia) || g.needs_grad(ib), [ia, ib](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.needs_grad(ia)) {
      auto& t = g.grad(ia);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[i];
    }
    if (g.needs_grad(ib)) {
      auto& t = g.grad(ib);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] -= G[i];
    }
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<S> out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  auto& g = *a.graph;
  const std::size_t ia = a.id, ib = b.id;
  return g.push(std::move(out), g.needs_grad(ia) || g.needs_grad(ib), [ia, ib](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.needs_grad(ia)) {
      auto& t = g.grad(ia);
      const auto& B = g.value(ib);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[i] * B[i];
    }
    if (g.needs_grad(ib)) {
      auto& t = g.grad(ib);
      const auto& A = g.value(ia);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[i] * A[i];
    }
  });
}

template <class S>
Var<S> scale(const Var<S>& a, S s) {
  Tensor<S> out = a.value();
  for (auto& v : out.vec()) v *= s;
  auto& g = *a.graph;
  const std::size_t ia = a.id;
  return g.push(std::move(out), g.needs_grad(ia), [ia, s](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& t = g.grad(ia);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += s * G[i];
  });
}

/// Multiplies every element by a one-element tensor (learnable scalar gain).
template <class S>
Var<S> scale_by(const Var<S>& a, const Var<S>& s) {
  if (s.value().size() != 1) throw ShapeError("scale_by: gain must have one element");
  const S k = s.value()[0];
  Tensor<S> out = a.value();
  for (auto& v : out.vec()) v *= k;
  auto& g = *a.graph;
  const std::size_t ia = a.id, is = s.id;
  return g.push(std::move(out), g.needs_grad(ia) || g.needs_grad(is), [ia, is](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const S k = g.value(is)[0];
    if (g.needs_grad(ia)) {
      auto& t = g.grad(ia);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += k * G[i];
    }
    if (g.needs_grad(is)) {
      const auto& A = g.value(ia);
      S acc = 0;
      for (std::size_t i = 0; i < A.size(); ++i) acc += A[i] * G[i];
      g.grad(is)[0] += acc;
    }
  });
}

/// x + row, with `row` broadcast over every row of x.
template <class S>
Var<S> add_row(const Var<S>& x, const Var<S>& row) {
  const auto& X = x.value();
  const auto& R = row.value();
  if (R.size() != X.cols()) throw ShapeError("add_row: row length " + std::to_string(R.size()) + " vs cols " + std::to_string(X.cols()));
  Tensor<S> out = X;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += R[c];
  auto& g = *x.graph;
  const std::size_t ix = x.id, ir = row.id;
  return g.push(std::move(out), g.needs_grad(ix) || g.needs_grad(ir), [ix, ir](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.needs_grad(ix)) {
      auto& t = g.grad(ix);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[i];
    }
    if (g.needs_grad(ir)) {
      auto& t = g.grad(ir);
      for (std::size_t r = 0; r < G.rows(); ++r)
        for (std::size_t c = 0; c < G.cols(); ++c) t[c] += G.at(r, c);
    }
  });
}

/// out[i] = x[index[i]]; repeated indices broadcast, backward scatter-adds.
template <class S>
Var<S> gather_rows(const Var<S>& x, const std::vector<std::size_t>& index) {
  const auto& X = x.value();
  const std::size_t cols = X.cols();
  Tensor<S> out = Tensor<S>::matrix(index.size(), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= X.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(X.data() + index[i] * cols, cols, out.data() + i * cols);
  }
  auto& g = *x.graph;
  const std::size_t ix = x.id;
  return g.push(std::move(out), g.needs_grad(ix), [ix, index, cols](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& t = g.grad(ix);
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) t[index[i] * cols + c] += G[i * cols + c];
  });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.value().cols();
  }
  Tensor<S> out = Tensor<S>::matrix(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  bool ng = false;
  auto& g = *parts[0].graph;
  for (const auto& p : parts) {
    const auto& V = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(V.data() + r * V.cols(), V.cols(), out.data() + r * cols + off);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += V.cols();
    ng = ng || g.needs_grad(p.id);
  }
  return g.push(std::move(out), ng, [ids, offsets, rows, cols](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!g.needs_grad(ids[k])) continue;
      auto& t = g.grad(ids[k]);
      const std::size_t pc = t.cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < pc; ++c) t[r * pc + c] += G[r * cols + offsets[k] + c];
    }
  });
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.value().rows();
  }
  Tensor<S> out = Tensor<S>::matrix(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  bool ng = false;
  auto& g = *parts[0].graph;
  for (const auto& p : parts) {
    const auto& V = p.value();
    std::copy(V.vec().begin(), V.vec().end(), out.data() + off);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += V.size();
    ng = ng || g.needs_grad(p.id);
  }
  return g.push(std::move(out), ng, [ids, offsets](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!g.needs_grad(ids[k])) continue;
      auto& t = g.grad(ids[k]);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[offsets[k] + i];
    }
  });
}

template <class S>
Var<S> slice_cols(const Var<S>& x, std::size_t begin, std::size_t end) {
  const auto& X = x.value();
  if (begin > end || end > X.cols()) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t rows = X.rows(), cols = X.cols(), w = end - begin;
  Tensor<S> out = Tensor<S>::matrix(rows, w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(X.data() + r * cols + begin, w, out.data() + r * w);
  auto& g = *x.graph;
  const std::size_t ix = x.id;
  return g.push(std::move(out), g.needs_grad(ix), [ix, begin, w, rows, cols](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& t = g.grad(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) t[r * cols + begin + c] += G[r * w + c];
  });
}

template <class S>
Var<S> slice_rows(const Var<S>& x, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(x, idx);
}

/// Reinterprets the value with a new shape of equal element count.
template <class S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  Tensor<S> out = x.value().reshaped(std::move(shape));
  auto& g = *x.graph;
  const std::size_t ix = x.id;
  return g.push(std::move(out), g.needs_grad(ix), [ix](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& t = g.grad(ix);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[i];
  });
}

namespace detail {
template <class S, class F, class DF>
Var<S> unary(const Var<S>& x, F f, DF df) {
  Tensor<S> out = x.value();
  for (auto& v : out.vec()) v = f(v);
  auto& g = *x.graph;
  const std::size_t ix = x.id;
  return g.push(std::move(out), g.needs_grad(ix), [ix, df](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const auto& X = g.value(ix);
    auto& t = g.grad(ix);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += G[i] * df(X[i]);
  });
}
}  // namespace detail

/// tanh-approximated GELU.
template <class S>
Var<S> gelu(const Var<S>& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  auto f = [](S v) {
    const double u = k * (double(v) + 0.044715 * double(v) * v * v);
    return S(0.5 * v * (1.0 + std::tanh(u)));
  };
  auto df = [](S v) {
    const double x = v;
    const double u = k * (x + 0.044715 * x * x * x);
    const double th = std::tanh(u);
    const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
    return S(0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
  };
  return detail::unary(x, f, df);
}

template <class S>
Var<S> silu(const Var<S>& x) {
  auto f = [](S v) { return S(double(v) / (1.0 + std::exp(-double(v)))); };
  auto df = [](S v) {
    const double s = 1.0 / (1.0 + std::exp(-double(v)));
    return S(s * (1.0 + double(v) * (1.0 - s)));
  };
  return detail::unary(x, f, df);
}

template <class S>
Var<S> relu(const Var<S>& x) {
  return detail::unary(x, [](S v) { return v > 0 ? v : S(0); }, [](S v) { return v > 0 ? S(1) : S(0); });
}

/// Row-wise layer normalization with affine gain and bias of length cols.
template <class S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, double eps = 1e-5) {
  const auto& X = x.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) throw ShapeError("layer_norm: affine size mismatch");
  Tensor<S> out = Tensor<S>::matrix(rows, cols);
  Tensor<S> xhat = Tensor<S>::matrix(rows, cols);
  std::vector<S> inv_std(rows);
  const auto& Gm = gamma.value();
  const auto& Bt = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const S* xr = X.data() + r * cols;
    double mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= double(cols);
    double var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= double(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = S(is);
    for (std::size_t c = 0; c < cols; ++c) {
      const S h = S((xr[c] - mean) * is);
      xhat.at(r, c) = h;
      out.at(r, c) = h * Gm[c] + Bt[c];
    }
  }
  auto& g = *x.graph;
  const std::size_t ix = x.id, ig = gamma.id, ibt = beta.id;
  const bool ng = g.needs_grad(ix) || g.needs_grad(ig) || g.needs_grad(ibt);
  return g.push(std::move(out), ng,
                [ix, ig, ibt, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Graph<S>& g, std::size_t self) {
                  const auto& G = g.grad(self);
                  const auto& Gm = g.value(ig);
                  if (g.needs_grad(ig)) {
                    auto& t = g.grad(ig);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) t[c] += G.at(r, c) * xhat.at(r, c);
                  }
                  if (g.needs_grad(ibt)) {
                    auto& t = g.grad(ibt);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) t[c] += G.at(r, c);
                  }
                  if (g.needs_grad(ix)) {
                    auto& t = g.grad(ix);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double m1 = 0, m2 = 0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double dh = G.at(r, c) * Gm[c];
                        m1 += dh;
                        m2 += dh * xhat.at(r, c);
                      }
                      m1 /= double(cols);
                      m2 /= double(cols);
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double dh = G.at(r, c) * Gm[c];
                        t.at(r, c) += S(inv_std[r] * (dh - m1 - xhat.at(r, c) * m2));
                      }
                    }
                  }
                });
}

template <class S>
Var<S> sum(const Var<S>& x) {
  const auto& X = x.value();
  S acc = 0;
  for (auto v : X.vec()) acc += v;
  auto& g = *x.graph;
  const std::size_t ix = x.id;
  return g.push(Tensor<S>({1}, std::vector<S>{acc}), g.needs_grad(ix), [ix](Graph<S>& g, std::size_t self) {
    const S gs = g.grad(self)[0];
    auto& t = g.grad(ix);
    for (auto& v : t.vec()) v += gs;
  });
}

template <class S>
Var<S> mean(const Var<S>& x) {
  return scale(sum(x), S(1) / S(x.value().size()));
}

/// Mean squared difference over all entries.
template <class S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "mse");
  const auto& A = a.value();
  const auto& B = b.value();
  const std::size_t n = A.size();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += double(A[i] - B[i]) * double(A[i] - B[i]);
  auto& g = *a.graph;
  const std::size_t ia = a.id, ib = b.id;
  return g.push(Tensor<S>({1}, std::vector<S>{S(acc / double(n))}), g.needs_grad(ia) || g.needs_grad(ib),
                [ia, ib, n](Graph<S>& g, std::size_t self) {
                  const S k = S(2) * g.grad(self)[0] / S(n);
                  const auto& A = g.value(ia);
                  const auto& B = g.value(ib);
                  if (g.needs_grad(ia)) {
                    auto& t = g.grad(ia);
                    for (std::size_t i = 0; i < n; ++i) t[i] += k * (A[i] - B[i]);
                  }
                  if (g.needs_grad(ib)) {
                    auto& t = g.grad(ib);
                    for (std::size_t i = 0; i < n; ++i) t[i] -= k * (A[i] - B[i]);
                  }
                });
}

/// Per-group mean squared difference: entries are split into `groups`
/// contiguous equal chunks (frames of a T x h x w x C tensor). Output shape (groups).
template <class S>
Var<S> group_mse(const Var<S>& a, const Var<S>& b, std::size_t groups) {
  detail::require_same_shape(a, b, "group_mse");
  const auto& A = a.value();
  const auto& B = b.value();
  if (groups == 0 || A.size() % groups) throw ShapeError("group_mse: size not divisible by group count");
  const std::size_t per = A.size() / groups;
  Tensor<S> out({groups});
  for (std::size_t k = 0; k < groups; ++k) {
    double acc = 0;
    for (std::size_t i = k * per; i < (k + 1) * per; ++i) acc += double(A[i] - B[i]) * double(A[i] - B[i]);
    out[k] = S(acc / double(per));
  }
  auto& g = *a.graph;
  const std::size_t ia = a.id, ib = b.id;
  return g.push(std::move(out), g.needs_grad(ia) || g.needs_grad(ib), [ia, ib, per](Graph<S>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const auto& A = g.value(ia);
    const auto& B = g.value(ib);
    for (std::size_t i = 0; i < A.size(); ++i) {
      const S d = S(2) * G[i / per] * (A[i] - B[i]) / S(per);
      if (g.needs_grad(ia)) g.grad(ia)[i] += d;
      if (g.needs_grad(ib)) g.grad(ib)[i] -= d;
    }
  });
}

/// Sum of x[i] * weights[i] with constant weights.
template <class S>
Var<S> weighted_sum(const Var<S>& x, std::vector<S> weights) {
  const auto& X = x.value();
  if (weights.size() != X.size()) throw ShapeError("weighted_sum: weight count mismatch");
  S acc = 0;
  for (std::size_t i = 0; i < X.size(); ++i) acc += X[i] * weights[i];
  auto& g = *x.graph;
  const std::size_t ix = x.id;
  return g.push(Tensor<S>({1}, std::vector<S>{acc}), g.needs_grad(ix), [ix, weights = std::move(weights)](Graph<S>& g, std::size_t self) {
    const S gs = g.grad(self)[0];
    auto& t = g.grad(ix);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += gs * weights[i];
  });
}

}  // namespace ctxvid::nn
