#ifndef CHARFUSE_GRAPH_HPP
#define CHARFUSE_GRAPH_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "charfuse/tensor.hpp"

namespace charfuse {

// One value in the computation record. Leaves (parameters, inputs) have no
// closures; recorded ops carry a recompute closure (forward rule) and a
// backprop closure (backward rule).
struct Node {
  Tensor value;
  std::vector<double> grad;  // allocated lazily, same numel as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> recompute;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.data.size()) {
      grad.assign(value.data.size(), 0.0);
    }
  }
  void zero_grad() { grad.assign(value.data.size(), 0.0); }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool requires_grad);

struct NamedVar {
  std::string name;
  Var var;
};

// Ordered record of executed primitive ops. Creation order is topological by
// construction: an op is recorded only after its inputs exist. backward()
// visits every recorded op exactly once, in reverse order; replay() re-runs
// every forward rule in recorded order.
class Graph {
 public:
  Var record(const char* op, std::vector<Var> parents,
             std::function<void(Node&)> recompute,
             std::function<void(Node&)> backprop);

  // Seeds d(output)/d(output) = seed and propagates to all leaves. Gradients
  // of recorded (non-leaf) nodes are reset first; leaf gradients accumulate.
  void backward(const Var& scalar_output, double seed = 1.0);

  void replay();

  size_t size() const { return steps_.size(); }

 private:
  std::vector<Var> steps_;
};

}  // namespace charfuse

#endif  // CHARFUSE_GRAPH_HPP
