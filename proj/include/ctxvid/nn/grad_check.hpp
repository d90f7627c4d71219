#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "ctxvid/nn/graph.hpp"

namespace ctxvid::nn {

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Builds the scalar objective on a fresh graph from the current parameter values.
using ScalarFunction = std::function<Var<double>(Graph<double>&)>;

/// Compares reverse-mode gradients of `f` against central differences for
/// every trainable entry of `params`, or for a deterministic stride subset
/// when `max_entries_per_param` is nonzero. Relative error is
/// |analytic - numeric| / max(1, |analytic|).
inline GradCheckResult grad_check(const ScalarFunction& f, ParamStore<double>& params, double eps = 1e-5,
                                  std::size_t max_entries_per_param = 0) {
  params.zero_grad();
  {
    Graph<double> g;
    auto loss = f(g);
    if (!std::isfinite(loss.value()[0])) throw std::domain_error("grad_check: objective is not finite");
    g.backward(loss);
  }
  auto eval = [&]() {
    Graph<double> g(false);
    const double v = f(g).value()[0];
    if (!std::isfinite(v)) throw std::domain_error("grad_check: objective is not finite");
    return v;
  };
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    if (!p.trainable) continue;
    const std::size_t n = p.value.size();
    const std::size_t step = (max_entries_per_param && n > max_entries_per_param) ? (n + max_entries_per_param - 1) / max_entries_per_param : 1;
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double fp = eval();
      p.value[i] = orig - eps;
      const double fm = eval();
      p.value[i] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      const double analytic = p.grad[i];
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p.name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace ctxvid::nn
