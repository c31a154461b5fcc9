#ifndef CHARFUSE_MODEL_CONFIG_HPP
#define CHARFUSE_MODEL_CONFIG_HPP

#include <string>

#include <nlohmann/json.hpp>

namespace charfuse {

enum class HeadKind { None, Token, Sequence };

const char* head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

// Architecture hyperparameters plus ablation switches. Parameter shapes are
// fully determined by this struct, so a checkpoint stores it verbatim.
struct ModelConfig {
  int hidden_dim = 64;  // d; divisible by 4 and by heads
  int layers = 2;       // L
  int heads = 4;        // A
  int char_embed_dim = 16;
  int cnn_window = 3;   // odd
  int cnn_filters = 0;  // 0 -> hidden_dim
  int ffn_dim = 0;      // 0 -> 4 * hidden_dim
  int max_positions = 128;
  double dropout = 0.1;

  int subword_vocab = 0;
  int char_vocab = 0;
  int word_vocab = 0;

  // Ablations: raw char embeddings instead of the GRU; no channel
  // interaction; MLM-only on concatenated channels; single-channel baseline.
  bool no_gru = false;
  bool no_hi = false;
  bool no_nlm = false;
  bool token_only = false;

  HeadKind head = HeadKind::None;
  int num_labels = 0;

  int gru_dir_dim() const { return hidden_dim / 4; }
  int resolved_cnn_filters() const { return cnn_filters > 0 ? cnn_filters : hidden_dim; }
  int resolved_ffn_dim() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden_dim; }
  // Width of the representation fine-tuning heads consume.
  int head_input_dim() const { return token_only ? hidden_dim : 2 * hidden_dim; }

  void validate() const;

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace charfuse

#endif  // CHARFUSE_MODEL_CONFIG_HPP
