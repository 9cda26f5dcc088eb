// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "pointshade/tensor.hpp"

namespace pointshade {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { kEnabled, kDisabled };

/// Records one forward pass so that backward() can propagate gradients in reverse
/// creation order. Nodes live in a deque, so references to recorded values stay valid.
template <typename T>
class Tape {
 public:
  /// Called with the tape and the node's own id once that node's gradient is complete.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(GradMode mode = GradMode::kEnabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  GradMode mode() const { return mode_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, false, {}); }

  /// Leaf that receives a gradient (used for inputs under gradient checks).
  Var<T> variable(Tensor<T> value) {
    return push(std::move(value), nullptr, mode_ == GradMode::kEnabled, {});
  }

  /// Leaf viewing a parameter's value without copying. Repeated calls return the same node.
  Var<T> parameter(const Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>(this, it->second);
    Var<T> v = push(Tensor<T>(), &p.value, mode_ == GradMode::kEnabled, {});
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  /// Records an op result. The backward closure is kept only if some parent needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p.id());
    return push(std::move(value), nullptr, needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.owned;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient accumulator for a node, zero-initialized on first access.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.has_grad) {
      n.grad = Tensor<T>::zeros(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  const Tensor<T>* grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.has_grad ? &n.grad : nullptr;
  }
  const Tensor<T>* grad(const Var<T>& v) const { return grad(v.id()); }
  const Tensor<T>* grad(const Parameter<T>& p) const {
    auto it = param_nodes_.find(&p);
    return it == param_nodes_.end() ? nullptr : grad(it->second);
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1) {
      throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                  shape_string(loss.shape()));
    }
    if (!requires_grad(loss.id())) return;
    grad_buffer(loss.id())[0] += T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.has_grad && n.backward) n.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> owned, const Tensor<T>* external, bool needs_grad, BackwardFn fn) {
    Node n;
    n.owned = std::move(owned);
    n.external = external;
    n.requires_grad = needs_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  GradMode mode_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

/// Runs backward on `loss` and adds each parameter's tape gradient into Parameter::grad.
template <typename T>
void backward(Tape<T>& tape, const Var<T>& loss, std::span<Parameter<T>> params) {
  tape.backward(loss);
  for (auto& p : params) {
    if (const Tensor<T>* g = tape.grad(p)) p.grad += *g;
  }
}

}  // namespace pointshade
