#pragma once

#include <cmath>
#include <vector>

#include "ctxvid/nn/graph.hpp"

namespace ctxvid::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the trainable entries of a ParamStore. Moment buffers are
/// indexed by parameter position, so the store layout must not change
/// between steps.
template <class S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

  /// Applies one update using the gradients currently held by `params`,
  /// scaled by `grad_scale` (e.g. 1/batch).
  void step(ParamStore<S>& params, double grad_scale = 1.0) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), {});
      v_.assign(params.size(), {});
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.trainable) continue;
      if (m_[i].size() != p.value.size()) {
        m_[i].assign(p.value.size(), 0.0);
        v_[i].assign(p.value.size(), 0.0);
      }
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double gk = double(p.grad[k]) * grad_scale;
        m_[i][k] = cfg_.beta1 * m_[i][k] + (1 - cfg_.beta1) * gk;
        v_[i][k] = cfg_.beta2 * v_[i][k] + (1 - cfg_.beta2) * gk * gk;
        const double mh = m_[i][k] / bc1;
        const double vh = v_[i][k] / bc2;
        p.value[k] -= S(cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace ctxvid::nn
