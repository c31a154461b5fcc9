#ifndef CHARFUSE_GRAD_CHECK_HPP
#define CHARFUSE_GRAD_CHECK_HPP

#include <functional>

#include "charfuse/graph.hpp"

namespace charfuse {

// A scalar-valued function of one tensor; other inputs are closed over.
using ScalarFn = std::function<Var(Graph&, const Var&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  int64_t worst_coordinate = -1;
  bool passed = false;
};

// Compares the reverse-mode gradient of `fn` at `input` against central
// finite differences with the given step. Relative error per coordinate is
// |analytic - fd| / max(1, |analytic|).
GradCheckResult grad_check(const ScalarFn& fn, const Tensor& input, double step,
                           double tolerance);

}  // namespace charfuse

#endif  // CHARFUSE_GRAD_CHECK_HPP
