#ifndef CHARFUSE_PARAMETERS_HPP
#define CHARFUSE_PARAMETERS_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "charfuse/graph.hpp"
#include "charfuse/model_config.hpp"
#include "charfuse/rng.hpp"

namespace charfuse {

// Named parameter tensors in a deterministic creation order derived from the
// config alone. Weights are truncated-normal(0.02), biases zero, layer-norm
// gains one.
class Parameters {
 public:
  static Parameters build(const ModelConfig& config, Rng& rng);
  static Parameters build_zero(const ModelConfig& config);

  const Var& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  // Shallow copy with one tensor swapped out (used by gradient checks to
  // route a probe leaf through the model).
  Parameters with_substitute(const std::string& name, Var replacement) const;
  const std::vector<NamedVar>& items() const { return items_; }
  int64_t total_size() const;
  void zero_grads();

 private:
  std::vector<NamedVar> items_;
  std::unordered_map<std::string, size_t> index_;

  Var add(const std::string& name, const std::vector<int>& shape, Rng* rng,
          double fill = 0.0);
  void add_linear(const std::string& prefix, int in, int out, Rng* rng);
  void add_layer_norm(const std::string& prefix, int dim, Rng* rng);
  static Parameters construct(const ModelConfig& config, Rng* rng);
};

}  // namespace charfuse

#endif  // CHARFUSE_PARAMETERS_HPP
