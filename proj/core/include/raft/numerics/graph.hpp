#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "raft/numerics/parameters.hpp"
#include "raft/numerics/tensor.hpp"

namespace raft::numerics {

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid for the graph's lifetime.
template <typename T>
class Var {
 public:
  Var() = default;

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor<T>& value() const { return graph_->value(id_); }
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph<T>;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of executed operations. Nodes are appended in execution order, so the
// reverse of insertion order is a valid topological order for backward.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, nullptr, {}); }

  // Leaf bound to a parameter; backward accumulates into p.grad when trainable.
  Var<T> param(Parameter<T>& p) { return push("parameter", p.value, p.trainable, &p, {}); }

  // Records an op output. Throws NumericError if any value is non-finite.
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<std::size_t> inputs,
                Backward backward) {
    for (const T x : value.data) {
      if (!std::isfinite(x)) {
        throw NumericError("non-finite value produced by op '" + std::string(op) + "'");
      }
    }
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_[in].needs_grad;
    return push(op, std::move(value), needs, nullptr, needs ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer of a node, allocated zero-filled on first use.
  std::vector<T>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  // Gradient buffer if the node participates in differentiation, else nullptr.
  std::vector<T>* grad_if_needed(std::size_t id) { return needs_grad(id) ? &grad(id) : nullptr; }

  // Reverse-mode sweep from a scalar loss. Parameter gradients are added to
  // Parameter::grad; callers zero them between steps.
  void backward(Var<T> loss) {
    if (loss.value().size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    }
    backward_visits_ = 0;
    grad(loss.id())[0] = T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad) continue;
      ++backward_visits_;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr && !n.grad.empty()) {
        auto& pg = n.param->grad;
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t last_backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    std::vector<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  Var<T> push(std::string_view op, Tensor<T> value, bool needs, Parameter<T>* param, Backward backward) {
    nodes_.push_back(Node{op, std::move(value), {}, std::move(backward), param, needs});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

}  // namespace raft::numerics
