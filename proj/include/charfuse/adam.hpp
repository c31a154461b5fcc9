#ifndef CHARFUSE_ADAM_HPP
#define CHARFUSE_ADAM_HPP

#include <cstdint>
#include <vector>

#include "charfuse/graph.hpp"

namespace charfuse {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers, aligned index-for-index with the parameter
// list they were created for.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState make(const std::vector<NamedVar>& params);
  bool matches(const std::vector<NamedVar>& params) const;
};

// Bias-corrected Adam update, in place:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
// step_index starts at 1. Throws on non-finite gradients, naming the
// parameter.
void adam_step(const std::vector<NamedVar>& params, AdamState& state,
               const AdamConfig& config, int64_t step_index);

}  // namespace charfuse

#endif  // CHARFUSE_ADAM_HPP
