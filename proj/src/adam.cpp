#include "charfuse/adam.hpp"

#include <cmath>
#include <string>

#include "charfuse/error.hpp"

namespace charfuse {

AdamState AdamState::make(const std::vector<NamedVar>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const NamedVar& p : params) {
    state.m.push_back(Tensor::zeros(p.var->value.shape));
    state.v.push_back(Tensor::zeros(p.var->value.shape));
  }
  return state;
}

bool AdamState::matches(const std::vector<NamedVar>& params) const {
  if (m.size() != params.size() || v.size() != params.size()) return false;
  for (size_t i = 0; i < params.size(); ++i) {
    if (!m[i].same_shape(params[i].var->value)) return false;
    if (!v[i].same_shape(params[i].var->value)) return false;
  }
  return true;
}

void adam_step(const std::vector<NamedVar>& params, AdamState& state,
               const AdamConfig& config, int64_t step_index) {
  if (step_index < 1) {
    fail(ErrorKind::Usage, "adam_step: step_index must be >= 1");
  }
  if (!state.matches(params)) {
    fail(ErrorKind::Shape, "adam_step: optimizer state does not match parameters");
  }
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_index));
  for (size_t i = 0; i < params.size(); ++i) {
    Node& node = *params[i].var;
    node.ensure_grad();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (size_t j = 0; j < node.value.data.size(); ++j) {
      const double g = node.grad[j];
      if (!std::isfinite(g)) {
        fail(ErrorKind::Numerical,
             "adam_step: non-finite gradient in parameter " + params[i].name);
      }
      m.data[j] = config.beta1 * m.data[j] + (1.0 - config.beta1) * g;
      v.data[j] = config.beta2 * v.data[j] + (1.0 - config.beta2) * g * g;
      const double m_hat = m.data[j] / bc1;
      const double v_hat = v.data[j] / bc2;
      node.value.data[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace charfuse
