#include "sfeat/graph.hpp"

#include "sfeat/error.hpp"

namespace sfeat::ad {

const Tensor& Var::value() const { return graph_->value(id_); }
const Shape& Var::shape() const { return graph_->value(id_).shape; }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.is_leaf = false;
  for (const Var& in : inputs) {
    if (&in.graph() != this) {
      throw GraphError("op input belongs to a different graph");
    }
    node.requires_grad = node.requires_grad || nodes_.at(in.id()).requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Tensor& Graph::grad(int id) const {
  const Node& node = nodes_.at(id);
  if (!node.has_grad) {
    throw GraphError("node " + std::to_string(id) + " has no gradient");
  }
  return node.grad;
}

Tensor& Graph::grad_buffer(int id) {
  Node& node = nodes_.at(id);
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape, 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw GraphError("loss belongs to a different graph");
  if (backward_done_) {
    throw GraphError("backward called twice without reset_grads()");
  }
  if (loss.value().size() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " +
                     shape_string(loss.shape()));
  }
  backward_done_ = true;
  const int root = loss.id();
  if (!nodes_[root].requires_grad) return;
  grad_buffer(root).data[0] = 1.0;

  for (int id = root; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.has_grad || node.is_leaf || !node.backward) continue;
    node.backward(*this, node.grad, node.value);
  }
  for (Node& node : nodes_) {
    if (node.is_leaf && node.requires_grad && !node.has_grad) {
      node.grad = Tensor(node.value.shape, 0.0);
      node.has_grad = true;
    }
  }
}

void Graph::reset_grads() {
  for (Node& node : nodes_) {
    node.grad = Tensor();
    node.has_grad = false;
  }
  backward_done_ = false;
}

}  // namespace sfeat::ad
