#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "sfeat/tensor.hpp"

namespace sfeat::ad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid as long as its graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph& graph() const { return *graph_; }

  const Tensor& value() const;
  const Shape& shape() const;
  /// Gradient after backward(); throws if the node never received one.
  const Tensor& grad() const;
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Tape of recorded operations. Nodes are appended in evaluation order, so the
/// tape is always topologically sorted; backward walks it once in reverse.
///
/// A graph is single-writer. Independent graphs may be used from different
/// threads concurrently.
class Graph {
 public:
  /// Propagates the output gradient of a node into its inputs' gradients.
  using BackwardFn =
      std::function<void(Graph&, const Tensor& out_grad, const Tensor& out_value)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op result. The node requires grad if any input does; the
  /// backward closure is dropped otherwise.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Gradients sum over consumers. A second
  /// call requires reset_grads() first.
  void backward(Var loss);
  void reset_grads();

  const Tensor& value(int id) const { return nodes_.at(id).value; }
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(int id) const { return nodes_.at(id).has_grad; }

  /// Gradient buffer of an input, zero-allocated on first touch. Only valid
  /// inside a backward closure and only for nodes that require grad.
  Tensor& grad_buffer(int id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    bool is_leaf = true;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace sfeat::ad
