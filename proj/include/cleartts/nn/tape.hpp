/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cleartts/common.hpp"
#include "cleartts/core/tensor.hpp"

namespace cleartts::nn {

using core::Tensor;

// Handle to a node on a Tape.
struct V {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape. Creation order is a topological order of the
// graph, so backward() is a single reverse sweep. Every operation registers
// a closure that pulls this node's gradient and accumulates into its
// parents. Gradients are only allocated for nodes actually on the path from
// the loss, and ops skip all bookkeeping when no input requires gradients,
// which makes inference passes allocation-light.
class Tape {
 public:
  V leaf(Tensor value, bool requires_grad = false) {
    return make(std::move(value), requires_grad);
  }

  // Leaf whose value lives outside the tape (parameter binding). The
  // referenced tensor must outlive the tape and stay unmodified until
  // backward has finished; this avoids copying every parameter into every
  // step's graph.
  V leaf_ref(const Tensor* value, bool requires_grad = false) {
    nodes_.push_back(Node{Tensor{}, Tensor{}, requires_grad, nullptr, value});
    return V{static_cast<std::int32_t>(nodes_.size()) - 1};
  }

  V make(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr, nullptr});
    return V{static_cast<std::int32_t>(nodes_.size()) - 1};
  }

  void set_backward(V x, std::function<void(Tape&)> fn) {
    nodes_[static_cast<std::size_t>(x.id)].backward = std::move(fn);
  }

  const Tensor& val(V x) const {
    const Node& n = nodes_[static_cast<std::size_t>(x.id)];
    return n.external ? *n.external : n.value;
  }

  bool needs_grad(V x) const {
    return x.valid() && nodes_[static_cast<std::size_t>(x.id)].requires_grad;
  }

  bool has_grad(V x) const {
    return !nodes_[static_cast<std::size_t>(x.id)].grad.v.empty();
  }

  // Gradient buffer, zero-allocated on first touch.
  Tensor& grad(V x) {
    Node& n = nodes_[static_cast<std::size_t>(x.id)];
    if (n.grad.v.empty()) n.grad = Tensor::zeros(val(x).shape);
    return n.grad;
  }

  // Accumulates g into the gradient of x if x participates in backprop.
  void add_grad(V x, const Tensor& g) {
    if (!needs_grad(x)) return;
    Tensor& gx = grad(x);
    if (gx.v.size() != g.v.size())
      throw Error("tape: gradient shape mismatch");
    for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += g.v[i];
  }

  // Move-in fast path: the first contribution becomes the buffer itself,
  // skipping the zero-fill and the add. Single-consumer nodes (almost all
  // of the graph, and every parameter) pay one allocation total.
  void add_grad(V x, Tensor&& g) {
    if (!needs_grad(x)) return;
    Node& n = nodes_[static_cast<std::size_t>(x.id)];
    if (n.grad.v.empty()) {
      if (g.v.size() != val(x).v.size())
        throw Error("tape: gradient shape mismatch");
      n.grad = std::move(g);
      return;
    }
    add_grad(x, g);
  }

  void backward(V root) {
    if (!root.valid()) throw Error("tape: backward on invalid node");
    if (val(root).numel() != 1)
      throw InvalidInputError("tape: backward root must be a scalar");
    grad(root).v[0] = 1.0;
    for (std::int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.grad.v.empty() && n.backward) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
    const Tensor* external = nullptr;  // set for leaf_ref nodes
  };

  std::vector<Node> nodes_;
};

}  // namespace cleartts::nn
