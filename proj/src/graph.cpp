#include "charfuse/graph.hpp"

#include <algorithm>

#include "charfuse/error.hpp"

namespace charfuse {

Var make_leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return node;
}

Var Graph::record(const char* op, std::vector<Var> parents,
                  std::function<void(Node&)> recompute,
                  std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->parents = std::move(parents);
  node->recompute = std::move(recompute);
  node->backprop = std::move(backprop);
  for (const Var& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  node->recompute(*node);
  steps_.push_back(node);
  return node;
}

void Graph::backward(const Var& scalar_output, double seed) {
  if (scalar_output->value.numel() != 1) {
    fail(ErrorKind::Shape,
         "backward requires a scalar output, got shape " +
             scalar_output->value.shape_str());
  }
  for (const Var& node : steps_) {
    node->zero_grad();
  }
  scalar_output->ensure_grad();
  scalar_output->grad[0] += seed;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    Node& node = **it;
    if (node.requires_grad && node.backprop) {
      node.backprop(node);
    }
  }
}

void Graph::replay() {
  for (const Var& node : steps_) {
    node->recompute(*node);
  }
}

}  // namespace charfuse
