#include "charfuse/grad_check.hpp"

#include <cmath>
#include <string>

#include "charfuse/error.hpp"

namespace charfuse {

namespace {

double evaluate_scalar(const ScalarFn& fn, const Tensor& point) {
  Graph graph;
  Var leaf = make_leaf(point, false);
  Var out = fn(graph, leaf);
  if (out->value.numel() != 1) {
    fail(ErrorKind::Shape, "grad_check: function output must be scalar, got " +
                               out->value.shape_str());
  }
  return out->value.data[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, const Tensor& input, double step,
                           double tolerance) {
  if (step < 1e-7 || step > 1e-3) {
    fail(ErrorKind::Usage,
         "grad_check: step must be in [1e-7, 1e-3], got " + std::to_string(step));
  }

  Graph graph;
  Var leaf = make_leaf(input, true);
  Var out = fn(graph, leaf);
  if (out->value.numel() != 1) {
    fail(ErrorKind::Shape, "grad_check: function output must be scalar, got " +
                               out->value.shape_str());
  }
  graph.backward(out);
  const std::vector<double> analytic = leaf->grad;

  GradCheckResult result;
  Tensor point = input;
  for (size_t i = 0; i < point.data.size(); ++i) {
    const double saved = point.data[i];
    point.data[i] = saved + step;
    const double up = evaluate_scalar(fn, point);
    point.data[i] = saved - step;
    const double down = evaluate_scalar(fn, point);
    point.data[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    if (!std::isfinite(fd)) {
      fail(ErrorKind::Numerical,
           "grad_check: non-finite finite-difference estimate at coordinate " +
               std::to_string(i));
    }
    const double rel =
        std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_coordinate = static_cast<int64_t>(i);
    }
  }
  result.passed = result.max_relative_error < tolerance;
  return result;
}

}  // namespace charfuse
