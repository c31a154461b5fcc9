#include "charfuse/gradcheck_suite.hpp"

#include <algorithm>

#include "charfuse/error.hpp"
#include "charfuse/model.hpp"
#include "charfuse/ops.hpp"
#include "charfuse/pretrain.hpp"

namespace charfuse {

namespace {

namespace op = ::charfuse::ops;

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) v = scale * (rng.uniform() * 2.0 - 1.0);
  return t;
}

void run_case(GradCheckSuiteResult& result, const std::string& name,
              const ScalarFn& fn, const Tensor& input, double step,
              double tolerance) {
  const GradCheckResult r = grad_check(fn, input, step, tolerance);
  result.cases.push_back({name, r.max_relative_error, r.passed});
}

// A weighted sum makes the scalar sensitive to every output coordinate.
Var weighted_sum(Graph& g, Var x, const Tensor& weights) {
  Var w = make_leaf(weights, false);
  return op::sum_all(g, op::mul(g, x, w));
}

}  // namespace

GradCheckSuiteResult gradcheck_primitive_ops(uint64_t seed, double step,
                                             double tolerance) {
  GradCheckSuiteResult result;
  Rng rng(seed);

  {
    const Tensor b = random_tensor({4, 5}, rng);
    const Tensor w = random_tensor({3, 5}, rng);
    run_case(result, "matmul",
             [b, w](Graph& g, const Var& x) {
               return weighted_sum(g, op::matmul(g, x, make_leaf(b, false)), w);
             },
             random_tensor({3, 4}, rng), step, tolerance);
  }
  {
    const Tensor w = random_tensor({5, 3}, rng);
    run_case(result, "transpose",
             [w](Graph& g, const Var& x) {
               return weighted_sum(g, op::transpose(g, x), w);
             },
             random_tensor({3, 5}, rng), step, tolerance);
  }
  {
    const Tensor other = random_tensor({4, 6}, rng);
    const Tensor w = random_tensor({4, 6}, rng);
    run_case(result, "add",
             [other, w](Graph& g, const Var& x) {
               return weighted_sum(g, op::add(g, x, make_leaf(other, false)), w);
             },
             random_tensor({4, 6}, rng), step, tolerance);
    run_case(result, "add_bias",
             [other, w](Graph& g, const Var& x) {
               return weighted_sum(g, op::add(g, make_leaf(other, false), x), w);
             },
             random_tensor({6}, rng), step, tolerance);
  }
  {
    const Tensor other = random_tensor({4, 6}, rng);
    const Tensor w = random_tensor({4, 6}, rng);
    run_case(result, "mul",
             [other, w](Graph& g, const Var& x) {
               return weighted_sum(g, op::mul(g, x, make_leaf(other, false)), w);
             },
             random_tensor({4, 6}, rng), step, tolerance);
  }
  {
    const Tensor w = random_tensor({4, 3}, rng);
    run_case(result, "scale",
             [w](Graph& g, const Var& x) {
               return weighted_sum(g, op::scale(g, x, -1.7), w);
             },
             random_tensor({4, 3}, rng), step, tolerance);
  }
  {
    const Tensor other = random_tensor({3, 4}, rng);
    const Tensor w = random_tensor({3, 6}, rng);
    run_case(result, "concat",
             [other, w](Graph& g, const Var& x) {
               return weighted_sum(g, op::concat_cols(g, x, make_leaf(other, false)), w);
             },
             random_tensor({3, 2}, rng), step, tolerance);
  }
  {
    const Tensor w = random_tensor({3, 2}, rng);
    run_case(result, "slice",
             [w](Graph& g, const Var& x) {
               return weighted_sum(g, op::slice_cols(g, x, 1, 2), w);
             },
             random_tensor({3, 5}, rng), step, tolerance);
  }
  {
    // Repeated index exercises scatter-add accumulation.
    const std::vector<int> ids = {2, 0, 2, 3};
    const Tensor w = random_tensor({4, 3}, rng);
    run_case(result, "gather_rows",
             [ids, w](Graph& g, const Var& x) {
               return weighted_sum(g, op::gather_rows(g, x, ids), w);
             },
             random_tensor({5, 3}, rng), step, tolerance);
  }
  for (const char* name : {"tanh", "sigmoid", "gelu"}) {
    const Tensor w = random_tensor({3, 4}, rng);
    const std::string op_name = name;
    run_case(result, name,
             [op_name, w](Graph& g, const Var& x) {
               Var y = op_name == "tanh"    ? op::tanh(g, x)
                       : op_name == "sigmoid" ? op::sigmoid(g, x)
                                              : op::gelu(g, x);
               return weighted_sum(g, y, w);
             },
             random_tensor({3, 4}, rng, 2.0), step, tolerance);
  }
  {
    const Tensor w = random_tensor({3, 5}, rng);
    run_case(result, "softmax",
             [w](Graph& g, const Var& x) {
               return weighted_sum(g, op::softmax(g, x), w);
             },
             random_tensor({3, 5}, rng, 2.0), step, tolerance);
  }
  {
    const Tensor gain = random_tensor({5}, rng);
    const Tensor bias = random_tensor({5}, rng);
    const Tensor w = random_tensor({3, 5}, rng);
    run_case(result, "layer_norm_input",
             [gain, bias, w](Graph& g, const Var& x) {
               return weighted_sum(g,
                                   op::layer_norm(g, x, make_leaf(gain, false),
                                                  make_leaf(bias, false), 1e-8),
                                   w);
             },
             random_tensor({3, 5}, rng), step, tolerance);
    const Tensor input = random_tensor({3, 5}, rng);
    run_case(result, "layer_norm_gain",
             [input, bias, w](Graph& g, const Var& x) {
               return weighted_sum(g,
                                   op::layer_norm(g, make_leaf(input, false), x,
                                                  make_leaf(bias, false), 1e-8),
                                   w);
             },
             random_tensor({5}, rng), step, tolerance);
    run_case(result, "layer_norm_bias",
             [input, gain, w](Graph& g, const Var& x) {
               return weighted_sum(g,
                                   op::layer_norm(g, make_leaf(input, false),
                                                  make_leaf(gain, false), x, 1e-8),
                                   w);
             },
             random_tensor({5}, rng), step, tolerance);
  }
  {
    const int window = 3, c_in = 4, filters = 3, m = 5;
    const Tensor x = random_tensor({m, c_in}, rng);
    const Tensor w = random_tensor({filters, window * c_in}, rng);
    const Tensor b = random_tensor({filters}, rng);
    const Tensor out_w = random_tensor({m, filters}, rng);
    run_case(result, "conv1d_input",
             [w, b, out_w, window](Graph& g, const Var& x_in) {
               return weighted_sum(g,
                                   op::conv1d_same(g, x_in, make_leaf(w, false),
                                                   make_leaf(b, false), window),
                                   out_w);
             },
             x, step, tolerance);
    run_case(result, "conv1d_weight",
             [x, b, out_w, window](Graph& g, const Var& w_in) {
               return weighted_sum(g,
                                   op::conv1d_same(g, make_leaf(x, false), w_in,
                                                   make_leaf(b, false), window),
                                   out_w);
             },
             w, step, tolerance);
    run_case(result, "conv1d_bias",
             [x, w, out_w, window](Graph& g, const Var& b_in) {
               return weighted_sum(g,
                                   op::conv1d_same(g, make_leaf(x, false),
                                                   make_leaf(w, false), b_in, window),
                                   out_w);
             },
             b, step, tolerance);
  }
  {
    const std::vector<int> labels = {1, op::kIgnoreIndex, 3, 0};
    run_case(result, "cross_entropy_sum",
             [labels](Graph& g, const Var& x) {
               return op::cross_entropy(g, x, labels, op::Reduction::Sum);
             },
             random_tensor({4, 5}, rng, 2.0), step, tolerance);
    run_case(result, "cross_entropy_mean",
             [labels](Graph& g, const Var& x) {
               return op::cross_entropy(g, x, labels, op::Reduction::Mean);
             },
             random_tensor({4, 5}, rng, 2.0), step, tolerance);
  }
  {
    run_case(result, "sum",
             [](Graph& g, const Var& x) { return op::sum_all(g, x); },
             random_tensor({3, 4}, rng), step, tolerance);
    run_case(result, "mean",
             [](Graph& g, const Var& x) { return op::mean_all(g, x); },
             random_tensor({3, 4}, rng), step, tolerance);
    const Tensor w = random_tensor({1, 4}, rng);
    run_case(result, "mean_rows",
             [w](Graph& g, const Var& x) {
               return weighted_sum(g, op::mean_rows(g, x), w);
             },
             random_tensor({3, 4}, rng), step, tolerance);
  }
  {
    const Tensor w = random_tensor({3, 4}, rng);
    run_case(result, "scale_shift",
             [w](Graph& g, const Var& x) {
               return weighted_sum(g, op::scale_shift(g, x, -2.0, 0.5), w);
             },
             random_tensor({3, 4}, rng), step, tolerance);
  }
  {
    const Tensor w = random_tensor({4, 6}, rng);
    run_case(result, "embedding_lookup",
             [w](Graph& g, const Var& table) {
               return weighted_sum(g, op::gather_rows(g, table, {1, 0, 1, 2}), w);
             },
             random_tensor({3, 6}, rng), step, tolerance);
  }

  result.max_relative_error = 0.0;
  result.passed = true;
  for (const GradCheckCase& c : result.cases) {
    result.max_relative_error = std::max(result.max_relative_error,
                                         c.max_relative_error);
    result.passed = result.passed && c.passed;
  }
  return result;
}

GradCheckSuiteResult gradcheck_model(int hidden_dim, int layers, uint64_t seed,
                                     double step, double tolerance) {
  // Tiny synthetic corpus so every module participates.
  const std::vector<std::string> corpus = {
      "the cat sat",  "a dog ran fast", "the bird flew", "cats and dogs",
      "a fast red cat"};
  const Vocabs vocabs = build_vocabs(corpus, 64, 40, 24);

  ModelConfig config;
  config.hidden_dim = hidden_dim;
  config.layers = layers;
  config.heads = 4;
  config.char_embed_dim = 8;
  config.max_positions = 16;
  config.dropout = 0.0;
  config.subword_vocab = vocabs.subword.size();
  config.char_vocab = vocabs.chars.size();
  config.word_vocab = vocabs.words.size();

  Rng rng(seed);
  Parameters params = Parameters::build(config, rng);

  // One example with noise and masks; m stays <= 8.
  PretrainRates rates;
  rates.mask = 0.3;
  rates.noise = 0.6;
  PretrainExample example;
  for (int attempt = 0; attempt < 64; ++attempt) {
    example = build_pretrain_example("the bird flew fast", vocabs, config, rates, rng);
    bool has_mlm = false;
    for (int label : example.mlm_labels) has_mlm |= label != op::kIgnoreIndex;
    bool has_nlm = false;
    for (int label : example.nlm_labels) has_nlm |= label != op::kIgnoreIndex;
    if (has_mlm && has_nlm && example.seq.length() <= 8) break;
  }

  auto loss_fn = [&](Graph& g, const Parameters& active) {
    const ForwardResult fwd = forward(g, example.seq, active, config, nullptr);
    Var mlm = op::cross_entropy(g, mlm_logits(g, fwd.last, active, config),
                                example.mlm_labels, op::Reduction::Mean);
    Var nlm = op::cross_entropy(
        g, nlm_logits(g, fwd.last, example.nlm_positions, active, config),
        example.nlm_labels, op::Reduction::Mean);
    return op::add(g, mlm, nlm);
  };

  GradCheckSuiteResult result;
  for (const NamedVar& item : params.items()) {
    const ScalarFn fn = [&, name = item.name](Graph& g, const Var& probe) {
      const Parameters substituted = params.with_substitute(name, probe);
      return loss_fn(g, substituted);
    };
    const GradCheckResult r = grad_check(fn, item.var->value, step, tolerance);
    result.cases.push_back({item.name, r.max_relative_error, r.passed});
  }
  result.max_relative_error = 0.0;
  result.passed = true;
  for (const GradCheckCase& c : result.cases) {
    result.max_relative_error = std::max(result.max_relative_error,
                                         c.max_relative_error);
    result.passed = result.passed && c.passed;
  }
  return result;
}

}  // namespace charfuse
