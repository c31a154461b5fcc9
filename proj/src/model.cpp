#include "charfuse/model.hpp"

#include <cmath>
#include <string>

#include "charfuse/error.hpp"

namespace charfuse {

namespace {

namespace op = ::charfuse::ops;

Var linear(Graph& g, Var x, const Parameters& p, const std::string& prefix) {
  return op::add(g, op::matmul(g, std::move(x), p.get(prefix + ".w")),
                 p.get(prefix + ".b"));
}

Var maybe_dropout(Graph& g, Var x, const ModelConfig& config, Rng* rng) {
  if (rng == nullptr || config.dropout == 0.0) return x;
  return op::dropout(g, std::move(x), config.dropout, *rng);
}

GruDirectionParams gru_params_from(const Parameters& p, const std::string& base) {
  return {p.get(base + ".w_r"), p.get(base + ".u_r"), p.get(base + ".b_r"),
          p.get(base + ".w_z"), p.get(base + ".u_z"), p.get(base + ".b_z"),
          p.get(base + ".w_n"), p.get(base + ".u_n"), p.get(base + ".b_n")};
}

}  // namespace

Var gru_sequence(Graph& g, Var inputs, const GruDirectionParams& params,
                 bool backward_direction) {
  const int n = inputs->value.shape[0];
  const int q = params.u_r->value.shape[0];
  // Input projections for all timesteps at once.
  Var xr = op::add(g, op::matmul(g, inputs, params.w_r), params.b_r);
  Var xz = op::add(g, op::matmul(g, inputs, params.w_z), params.b_z);
  Var xn = op::add(g, op::matmul(g, inputs, params.w_n), params.b_n);
  Var h = make_leaf(Tensor::zeros({1, q}), false);
  std::vector<Var> outputs(n);
  for (int step = 0; step < n; ++step) {
    const int t = backward_direction ? n - 1 - step : step;
    Var xr_t = op::gather_rows(g, xr, {t});
    Var xz_t = op::gather_rows(g, xz, {t});
    Var xn_t = op::gather_rows(g, xn, {t});
    Var r = op::sigmoid(g, op::add(g, xr_t, op::matmul(g, h, params.u_r)));
    Var z = op::sigmoid(g, op::add(g, xz_t, op::matmul(g, h, params.u_z)));
    Var cand = op::tanh(
        g, op::add(g, xn_t, op::matmul(g, op::mul(g, r, h), params.u_n)));
    // h' = (1 - z) * cand + z * h
    Var keep = op::mul(g, z, h);
    Var update = op::mul(g, op::scale_shift(g, z, -1.0, 1.0), cand);
    h = op::add(g, update, keep);
    outputs[t] = h;
  }
  return op::stack_rows(g, std::move(outputs));
}

Var char_encode(Graph& g, const std::vector<int>& char_ids,
                const std::vector<std::pair<int, int>>& spans,
                const Parameters& params, const ModelConfig& config) {
  if (config.token_only) {
    fail(ErrorKind::Usage, "char_encode called on a token_only model");
  }
  std::vector<int> firsts, lasts;
  firsts.reserve(spans.size());
  lasts.reserve(spans.size());
  for (const auto& [start, len] : spans) {
    if (len <= 0) {
      fail(ErrorKind::Data, "char_encode: empty character span at token " +
                                std::to_string(firsts.size()));
    }
    firsts.push_back(start);
    lasts.push_back(start + len - 1);
  }
  Var embeds = op::gather_rows(g, params.get("embed.char"), char_ids);
  if (config.no_gru) {
    Var pair = op::concat_cols(g, op::gather_rows(g, embeds, firsts),
                               op::gather_rows(g, embeds, lasts));
    return linear(g, pair, params, "char_proj");
  }
  Var fwd = gru_sequence(g, embeds, gru_params_from(params, "char_gru.fwd"), false);
  Var bwd = gru_sequence(g, embeds, gru_params_from(params, "char_gru.bwd"), true);
  Var hidden = op::concat_cols(g, fwd, bwd);  // {N, d/2}
  return op::concat_cols(g, op::gather_rows(g, hidden, firsts),
                         op::gather_rows(g, hidden, lasts));  // {m, d}
}

Var transformer_layer(Graph& g, Var x, int layer, const Parameters& params,
                      const ModelConfig& config, Rng* dropout_rng) {
  const std::string enc = "enc." + std::to_string(layer);
  const int d = config.hidden_dim;
  const int head_dim = d / config.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var q = linear(g, x, params, enc + ".attn.q");
  Var k = linear(g, x, params, enc + ".attn.k");
  Var v = linear(g, x, params, enc + ".attn.v");
  Var merged;
  for (int a = 0; a < config.heads; ++a) {
    Var qa = op::slice_cols(g, q, a * head_dim, head_dim);
    Var ka = op::slice_cols(g, k, a * head_dim, head_dim);
    Var va = op::slice_cols(g, v, a * head_dim, head_dim);
    Var scores = op::scale(g, op::matmul(g, qa, op::transpose(g, ka)), inv_sqrt);
    Var attended = op::matmul(g, op::softmax(g, scores), va);
    merged = a == 0 ? attended : op::concat_cols(g, merged, attended);
  }
  Var attn_out = maybe_dropout(g, linear(g, merged, params, enc + ".attn.o"),
                               config, dropout_rng);
  Var x1 = op::layer_norm(g, op::add(g, x, attn_out), params.get(enc + ".attn_ln.gain"),
                          params.get(enc + ".attn_ln.bias"), kLayerNormEpsilon);

  Var ffn = linear(g, op::gelu(g, linear(g, x1, params, enc + ".ffn.in")), params,
                   enc + ".ffn.out");
  ffn = maybe_dropout(g, ffn, config, dropout_rng);
  return op::layer_norm(g, op::add(g, x1, ffn), params.get(enc + ".ffn_ln.gain"),
                        params.get(enc + ".ffn_ln.bias"), kLayerNormEpsilon);
}

DualState interact(Graph& g, const DualState& state, int layer,
                   const Parameters& params, const ModelConfig& config,
                   Rng* dropout_rng) {
  if (config.no_hi || config.token_only) return state;
  if (state.token->value.shape != state.chars->value.shape) {
    fail(ErrorKind::Shape, "interact: channel shapes differ, " +
                               state.token->value.shape_str() + " vs " +
                               state.chars->value.shape_str());
  }
  const std::string hi = "hi." + std::to_string(layer);
  Var t1 = linear(g, state.token, params, hi + ".token_fc");
  Var h1 = linear(g, state.chars, params, hi + ".char_fc");
  Var fused = op::tanh(g, op::conv1d_same(g, op::concat_cols(g, t1, h1),
                                          params.get(hi + ".conv.w"),
                                          params.get(hi + ".conv.b"),
                                          config.cnn_window));
  fused = maybe_dropout(g, fused, config, dropout_rng);
  Var mt = op::gelu(g, linear(g, fused, params, hi + ".token_out"));
  Var mh = op::gelu(g, linear(g, fused, params, hi + ".char_out"));
  DualState out;
  out.token = op::layer_norm(g, op::add(g, state.token, mt),
                             params.get(hi + ".ln_t.gain"),
                             params.get(hi + ".ln_t.bias"), kLayerNormEpsilon);
  out.chars = op::layer_norm(g, op::add(g, state.chars, mh),
                             params.get(hi + ".ln_h.gain"),
                             params.get(hi + ".ln_h.bias"), kLayerNormEpsilon);
  return out;
}

ForwardResult forward(Graph& g, const TokenizedSequence& seq,
                      const Parameters& params, const ModelConfig& config,
                      Rng* dropout_rng) {
  const int m = seq.length();
  if (m > config.max_positions) {
    fail(ErrorKind::Data, "forward: sequence length " + std::to_string(m) +
                              " exceeds max positions " +
                              std::to_string(config.max_positions));
  }
  for (int id : seq.tokens) {
    if (id < 0 || id >= config.subword_vocab) {
      fail(ErrorKind::Data, "forward: token id " + std::to_string(id) +
                                " outside subword vocab");
    }
  }
  std::vector<int> positions(m);
  for (int i = 0; i < m; ++i) positions[i] = i;
  Var pos = op::gather_rows(g, params.get("embed.position"), positions);

  ForwardResult result;
  Var tok = op::add(g, op::gather_rows(g, params.get("embed.token"), seq.tokens), pos);
  result.input.token = maybe_dropout(g, tok, config, dropout_rng);
  if (!config.token_only) {
    Var chars = op::add(g, char_encode(g, seq.char_ids, seq.spans, params, config), pos);
    result.input.chars = maybe_dropout(g, chars, config, dropout_rng);
  }

  DualState state = result.input;
  for (int l = 0; l < config.layers; ++l) {
    state.token = transformer_layer(g, state.token, l, params, config, dropout_rng);
    if (!config.token_only) {
      state.chars = transformer_layer(g, state.chars, l, params, config, dropout_rng);
    }
    state = interact(g, state, l, params, config, dropout_rng);
    result.per_layer.push_back(state);
  }
  result.last = state;
  return result;
}

Var mlm_logits(Graph& g, const DualState& last, const Parameters& params,
               const ModelConfig& config) {
  if (config.no_nlm && !config.token_only) {
    return linear(g, op::concat_cols(g, last.token, last.chars), params,
                  "head.mlm_cat");
  }
  return linear(g, last.token, params, "head.mlm");
}

Var nlm_logits(Graph& g, const DualState& last, const std::vector<int>& positions,
               const Parameters& params, const ModelConfig& config) {
  if (config.no_nlm || config.token_only) {
    fail(ErrorKind::Usage, "nlm_logits unavailable for this configuration");
  }
  const int m = last.chars->value.shape[0];
  for (int pos : positions) {
    if (pos < 0 || pos >= m) {
      fail(ErrorKind::Data, "nlm_logits: position " + std::to_string(pos) +
                                " out of range for length " + std::to_string(m));
    }
  }
  Var selected = op::gather_rows(g, last.chars, positions);
  Var hidden = op::gelu(g, linear(g, selected, params, "head.nlm.fc"));
  return linear(g, hidden, params, "head.nlm.out");
}

namespace {

Var head_input(Graph& g, const DualState& last, const ModelConfig& config) {
  if (config.token_only) return last.token;
  return op::concat_cols(g, last.token, last.chars);
}

}  // namespace

Var token_classify(Graph& g, const DualState& last,
                   const std::vector<int>& first_subword_positions,
                   const Parameters& params, const ModelConfig& config) {
  if (config.head != HeadKind::Token) {
    fail(ErrorKind::Usage, "token_classify requires a token head");
  }
  const int m = last.token->value.shape[0];
  for (int pos : first_subword_positions) {
    if (pos < 0 || pos >= m) {
      fail(ErrorKind::Data, "token_classify: position " + std::to_string(pos) +
                                " out of range for length " + std::to_string(m));
    }
  }
  Var rows = op::gather_rows(g, head_input(g, last, config), first_subword_positions);
  return linear(g, rows, params, "head.task");
}

Var sequence_classify(Graph& g, const DualState& last, const Parameters& params,
                      const ModelConfig& config) {
  if (config.head != HeadKind::Sequence) {
    fail(ErrorKind::Usage, "sequence_classify requires a sequence head");
  }
  Var pooled = op::mean_rows(g, head_input(g, last, config));
  return linear(g, pooled, params, "head.task");
}

}  // namespace charfuse
