#ifndef CHARFUSE_GRADCHECK_SUITE_HPP
#define CHARFUSE_GRADCHECK_SUITE_HPP

#include <string>
#include <vector>

#include "charfuse/grad_check.hpp"
#include "charfuse/parameters.hpp"

namespace charfuse {

struct GradCheckCase {
  std::string name;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradCheckSuiteResult {
  std::vector<GradCheckCase> cases;
  double max_relative_error = 0.0;
  bool passed = false;
};

// Finite-difference checks for every primitive op on random small shapes.
GradCheckSuiteResult gradcheck_primitive_ops(uint64_t seed, double step,
                                             double tolerance);

// Finite-difference check of the full joint-loss model (one case per
// parameter tensor) on a tiny synthetic instance.
GradCheckSuiteResult gradcheck_model(int hidden_dim, int layers, uint64_t seed,
                                     double step, double tolerance);

}  // namespace charfuse

#endif  // CHARFUSE_GRADCHECK_SUITE_HPP
