#ifndef CHARFUSE_MODEL_HPP
#define CHARFUSE_MODEL_HPP

#include <optional>
#include <utility>
#include <vector>

#include "charfuse/ops.hpp"
#include "charfuse/parameters.hpp"
#include "charfuse/tokenize.hpp"

namespace charfuse {

// Shared by every layer norm in the network.
inline constexpr double kLayerNormEpsilon = 1e-12;

// Token/character hidden pair after each layer. H is null in token_only mode.
struct DualState {
  Var token;  // m x d
  Var chars;  // m x d, or null
};

struct ForwardResult {
  DualState input;
  std::vector<DualState> per_layer;
  DualState last;  // equals input when layers == 0
};

struct GruDirectionParams {
  Var w_r, u_r, b_r;
  Var w_z, u_z, b_z;
  Var w_n, u_n, b_n;
};

// Single-direction GRU over a {N, in} sequence, zero initial state; returns
// per-step hiddens {N, q}. backward_direction reverses the scan, not the
// row order of the output.
Var gru_sequence(Graph& g, Var inputs, const GruDirectionParams& params,
                 bool backward_direction);

// Contextual token-level embeddings from the character sequence: a shared
// bi-GRU over all N characters, each token represented by the hidden states
// of its first and last character. With no_gru the raw first/last character
// embeddings are projected to width d instead.
Var char_encode(Graph& g, const std::vector<int>& char_ids,
                const std::vector<std::pair<int, int>>& spans,
                const Parameters& params, const ModelConfig& config);

// Heterogeneous interaction: per-channel linear transforms, concat, tanh CNN
// fusion over the sequence axis, per-channel GELU projections, residual and
// layer norm. no_hi returns the inputs untouched.
DualState interact(Graph& g, const DualState& state, int layer,
                   const Parameters& params, const ModelConfig& config,
                   Rng* dropout_rng);

// Post-norm transformer encoder layer (shared between the two channels).
Var transformer_layer(Graph& g, Var x, int layer, const Parameters& params,
                      const ModelConfig& config, Rng* dropout_rng);

// Full dual-channel forward pass. dropout_rng == nullptr disables dropout
// (evaluation and gradient-check mode).
ForwardResult forward(Graph& g, const TokenizedSequence& seq,
                      const Parameters& params, const ModelConfig& config,
                      Rng* dropout_rng = nullptr);

// Subword-vocabulary logits from the token channel; in no_nlm mode from the
// concatenated channels.
Var mlm_logits(Graph& g, const DualState& last, const Parameters& params,
               const ModelConfig& config);

// Word-vocabulary logits at the given first-subword positions of the
// character channel.
Var nlm_logits(Graph& g, const DualState& last, const std::vector<int>& positions,
               const Parameters& params, const ModelConfig& config);

// Per-word label logits at first-subword positions from the concatenated
// channels (token channel only in token_only mode).
Var token_classify(Graph& g, const DualState& last,
                   const std::vector<int>& first_subword_positions,
                   const Parameters& params, const ModelConfig& config);

// Sequence-level label logits: mean over all positions of the concatenated
// channels, then linear.
Var sequence_classify(Graph& g, const DualState& last, const Parameters& params,
                      const ModelConfig& config);

}  // namespace charfuse

#endif  // CHARFUSE_MODEL_HPP
