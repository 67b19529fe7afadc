#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "fsv2v/nn/tensor.hpp"

namespace fsv2v::nn {

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
  int dim(int i) const { return value().dim(i); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const { return graph->requires_grad(id); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep visits every consumer before its producers.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, int self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, false, {}); }

  // Leaf that aliases caller-owned storage (parameters). `value` must outlive the graph.
  Var<T> external(const Tensor<T>& value, bool requires_grad) {
    return push(Tensor<T>{}, &value, requires_grad && grad_enabled_, {});
  }

  Var<T> leaf(Tensor<T> value, bool requires_grad) {
    return push(std::move(value), nullptr, requires_grad && grad_enabled_, {});
  }

  // Called by ops: the node needs a gradient iff any input does.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& v : inputs) needs = needs || requires_grad(v.id);
    }
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward{});
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& v : inputs) needs = needs || requires_grad(v.id);
    }
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.owned;
  }

  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

  // Gradient buffer, zero-initialized on first touch.
  Tensor<T>& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape(), T(0));
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (loss.size() != 1) {
      throw DimensionError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!requires_grad(loss.id)) return;
    grad(loss.id)[0] += T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(Tensor<T> value, const Tensor<T>* ext, bool requires_grad, Backward backward) {
    Node n;
    n.owned = std::move(value);
    n.external = ext;
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

}  // namespace fsv2v::nn
