#pragma once

#include <cassert>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid::nn {

/// A named trainable tensor with its accumulated gradient.
template <class S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<S>(value.shape());
    else grad.fill(S(0));
  }
};

/// Insertion-ordered parameter registry. Addresses of stored parameters are
/// stable for the lifetime of the store.
template <class S>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<S>& add(const std::string& name, Tensor<S> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<S>>();
    p->name = name;
    p->value = std::move(value);
    p->zero_grad();
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Parameter<S>& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor<S> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.vec()) v = static_cast<S>(dist(rng));
    return add(name, std::move(t));
  }

  Parameter<S>& add_normal(const std::string& name, Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor<S> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.vec()) v = static_cast<S>(dist(rng));
    return add(name, std::move(t));
  }

  Parameter<S>& add_constant(const std::string& name, Shape shape, S value) {
    return add(name, Tensor<S>(std::move(shape), value));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter<S>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return *params_[it->second];
  }
  const Parameter<S>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return *params_[it->second];
  }

  std::size_t size() const { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  /// Marks every parameter whose name starts with one of `prefixes` as trainable
  /// and freezes the rest.
  void set_trainable_prefixes(const std::vector<std::string>& prefixes) {
    for (auto& p : params_) {
      p->trainable = false;
      for (const auto& pre : prefixes)
        if (p->name.rfind(pre, 0) == 0) p->trainable = true;
    }
  }
  void set_all_trainable(bool v) {
    for (auto& p : params_) p->trainable = v;
  }

  /// Copies values from `other` for every name present in both stores.
  template <class T>
  std::size_t copy_matching_from(const ParamStore<T>& other) {
    std::size_t n = 0;
    for (auto& p : params_) {
      if (!other.contains(p->name)) continue;
      const auto& src = other.get(p->name).value;
      if (src.shape() != p->value.shape())
        throw ShapeError("parameter " + p->name + " shape " + shape_str(src.shape()) + " != " +
                         shape_str(p->value.shape()));
      p->value = src.template cast<S>();
      ++n;
    }
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <class S>
class Graph;

/// Handle to a value recorded on a Graph.
template <class S>
struct Var {
  Graph<S>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<S>& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order so a reverse
/// sweep visits every consumer before its producers.
template <class S>
class Graph {
 public:
  using Backprop = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var<S> constant(Tensor<S> value) { return push(std::move(value), false, {}); }

  Var<S> param(Parameter<S>& p) {
    auto v = push(p.value, record_ && p.trainable, {});
    if (record_ && p.trainable) nodes_[v.id].param = &p;
    return v;
  }

  /// Records an op result; `needs_grad` should be true when any input needs one.
  Var<S> push(Tensor<S> value, bool needs_grad, Backprop backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var<S>{this, nodes_.size() - 1};
  }

  const Tensor<S>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var<S>& v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer of node `id`, zero-allocated on first access.
  Tensor<S>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor<S>(n.value.shape());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty() || nodes_[id].value.empty(); }

  /// Back-propagates from a single-element node and accumulates leaf
  /// gradients into their Parameters.
  void backward(const Var<S>& loss, S seed = S(1)) {
    if (value(loss.id).size() != 1) throw ShapeError("backward requires a scalar output");
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss.id)[0] = seed;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backprop) n.backprop(*this, i);
      if (n.param) {
        auto& pg = n.param->grad;
        if (pg.shape() != n.param->value.shape()) pg = Tensor<S>(n.param->value.shape());
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool needs_grad = false;
    Backprop backprop;
    Parameter<S>* param = nullptr;
  };
  bool record_;
  std::deque<Node> nodes_;
};

template <class S>
const Tensor<S>& Var<S>::value() const {
  return graph->value(id);
}

}  // namespace ctxvid::nn
