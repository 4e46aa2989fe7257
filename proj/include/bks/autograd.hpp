#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "bks/tensor.hpp"

namespace bks {

// Reverse-mode tape. A Var is a shared handle to a graph node; the graph lives
// as long as the last Var referencing its output.
struct Node {
  Tensor value;
  Tensor grad;
  // Double-precision copy of scalar results; NaN when not tracked.
  double scalar = std::numeric_limits<double>::quiet_NaN();
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Empty until backward() reached this node.
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  // Scalar value of a 1-element tensor.
  double item() const {
    return node_->scalar == node_->scalar ? node_->scalar : static_cast<double>(node_->value[0]);
  }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op node. When no parent requires a gradient, parents and the
// backward closure are dropped so the upstream graph can be released.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Runs reverse accumulation from a scalar root with seed gradient 1.
void backward(const Var& root);

}  // namespace bks
