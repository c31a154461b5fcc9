#include "charfuse/parameters.hpp"

#include "charfuse/error.hpp"

namespace charfuse {

namespace {
constexpr double kInitStd = 0.02;
}

const char* head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::None:
      return "none";
    case HeadKind::Token:
      return "token";
    case HeadKind::Sequence:
      return "sequence";
  }
  return "none";
}

HeadKind head_kind_from_name(const std::string& name) {
  if (name == "none") return HeadKind::None;
  if (name == "token") return HeadKind::Token;
  if (name == "sequence") return HeadKind::Sequence;
  fail(ErrorKind::Usage, "unknown head kind: " + name);
}

void ModelConfig::validate() const {
  if (hidden_dim <= 0 || hidden_dim % 4 != 0) {
    fail(ErrorKind::Usage, "hidden_dim must be a positive multiple of 4, got " +
                               std::to_string(hidden_dim));
  }
  if (heads <= 0 || hidden_dim % heads != 0) {
    fail(ErrorKind::Usage, "hidden_dim must be divisible by heads");
  }
  if (layers < 0) fail(ErrorKind::Usage, "layers must be >= 0");
  if (char_embed_dim <= 0) fail(ErrorKind::Usage, "char_embed_dim must be > 0");
  if (cnn_window <= 0 || cnn_window % 2 == 0) {
    fail(ErrorKind::Usage, "cnn_window must be odd and positive");
  }
  if (max_positions <= 2) fail(ErrorKind::Usage, "max_positions must exceed 2");
  if (dropout < 0.0 || dropout >= 1.0) {
    fail(ErrorKind::Usage, "dropout must be in [0,1)");
  }
  if (subword_vocab <= 0 || char_vocab <= 0 || word_vocab <= 0) {
    fail(ErrorKind::Usage, "vocab sizes must be set in the model config");
  }
  if (head != HeadKind::None && num_labels < 2) {
    fail(ErrorKind::Usage, "classification head needs at least 2 labels");
  }
  if (token_only && (no_gru || no_hi)) {
    fail(ErrorKind::Usage, "token_only already removes the GRU and interaction");
  }
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["hidden_dim"] = hidden_dim;
  j["layers"] = layers;
  j["heads"] = heads;
  j["char_embed_dim"] = char_embed_dim;
  j["cnn_window"] = cnn_window;
  j["cnn_filters"] = cnn_filters;
  j["ffn_dim"] = ffn_dim;
  j["max_positions"] = max_positions;
  j["dropout"] = dropout;
  j["subword_vocab"] = subword_vocab;
  j["char_vocab"] = char_vocab;
  j["word_vocab"] = word_vocab;
  j["no_gru"] = no_gru;
  j["no_hi"] = no_hi;
  j["no_nlm"] = no_nlm;
  j["token_only"] = token_only;
  j["head"] = head_kind_name(head);
  j["num_labels"] = num_labels;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.char_embed_dim = j.at("char_embed_dim").get<int>();
  c.cnn_window = j.at("cnn_window").get<int>();
  c.cnn_filters = j.at("cnn_filters").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.subword_vocab = j.at("subword_vocab").get<int>();
  c.char_vocab = j.at("char_vocab").get<int>();
  c.word_vocab = j.at("word_vocab").get<int>();
  c.no_gru = j.at("no_gru").get<bool>();
  c.no_hi = j.at("no_hi").get<bool>();
  c.no_nlm = j.at("no_nlm").get<bool>();
  c.token_only = j.at("token_only").get<bool>();
  c.head = head_kind_from_name(j.at("head").get<std::string>());
  c.num_labels = j.at("num_labels").get<int>();
  return c;
}

Var Parameters::add(const std::string& name, const std::vector<int>& shape,
                    Rng* rng, double fill) {
  Tensor t = Tensor::full(shape, fill);
  if (rng != nullptr) {
    for (double& v : t.data) v = rng->truncated_normal(kInitStd);
  }
  Var var = make_leaf(std::move(t), true);
  if (!index_.emplace(name, items_.size()).second) {
    fail(ErrorKind::Usage, "duplicate parameter name: " + name);
  }
  items_.push_back({name, var});
  return var;
}

void Parameters::add_linear(const std::string& prefix, int in, int out, Rng* rng) {
  add(prefix + ".w", {in, out}, rng);
  add(prefix + ".b", {out}, nullptr, 0.0);
}

void Parameters::add_layer_norm(const std::string& prefix, int dim, Rng* rng) {
  (void)rng;
  add(prefix + ".gain", {dim}, nullptr, 1.0);
  add(prefix + ".bias", {dim}, nullptr, 0.0);
}

Parameters Parameters::construct(const ModelConfig& config, Rng* rng) {
  config.validate();
  Parameters p;
  const int d = config.hidden_dim;
  const int e = config.char_embed_dim;
  const int q = config.gru_dir_dim();
  const int filters = config.resolved_cnn_filters();
  const int ffn = config.resolved_ffn_dim();

  p.add("embed.token", {config.subword_vocab, d}, rng);
  p.add("embed.position", {config.max_positions, d}, rng);

  if (!config.token_only) {
    p.add("embed.char", {config.char_vocab, e}, rng);
    if (config.no_gru) {
      p.add_linear("char_proj", 2 * e, d, rng);
    } else {
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string base = std::string("char_gru.") + dir;
        for (const char* gate : {"r", "z", "n"}) {
          p.add(base + ".w_" + gate, {e, q}, rng);
          p.add(base + ".u_" + gate, {q, q}, rng);
          p.add(base + ".b_" + gate, {q}, nullptr, 0.0);
        }
      }
    }
  }

  for (int l = 0; l < config.layers; ++l) {
    const std::string enc = "enc." + std::to_string(l);
    p.add_linear(enc + ".attn.q", d, d, rng);
    p.add_linear(enc + ".attn.k", d, d, rng);
    p.add_linear(enc + ".attn.v", d, d, rng);
    p.add_linear(enc + ".attn.o", d, d, rng);
    p.add_layer_norm(enc + ".attn_ln", d, rng);
    p.add_linear(enc + ".ffn.in", d, ffn, rng);
    p.add_linear(enc + ".ffn.out", ffn, d, rng);
    p.add_layer_norm(enc + ".ffn_ln", d, rng);
    if (!config.token_only && !config.no_hi) {
      const std::string hi = "hi." + std::to_string(l);
      p.add_linear(hi + ".token_fc", d, d, rng);
      p.add_linear(hi + ".char_fc", d, d, rng);
      p.add(hi + ".conv.w", {filters, config.cnn_window * 2 * d}, rng);
      p.add(hi + ".conv.b", {filters}, nullptr, 0.0);
      p.add_linear(hi + ".token_out", filters, d, rng);
      p.add_linear(hi + ".char_out", filters, d, rng);
      p.add_layer_norm(hi + ".ln_t", d, rng);
      p.add_layer_norm(hi + ".ln_h", d, rng);
    }
  }

  if (config.no_nlm && !config.token_only) {
    p.add_linear("head.mlm_cat", 2 * d, config.subword_vocab, rng);
  } else {
    p.add_linear("head.mlm", d, config.subword_vocab, rng);
  }
  if (!config.no_nlm && !config.token_only) {
    p.add_linear("head.nlm.fc", d, d, rng);
    p.add_linear("head.nlm.out", d, config.word_vocab, rng);
  }
  if (config.head != HeadKind::None) {
    p.add_linear("head.task", config.head_input_dim(), config.num_labels, rng);
  }
  return p;
}

Parameters Parameters::build(const ModelConfig& config, Rng& rng) {
  return construct(config, &rng);
}

Parameters Parameters::build_zero(const ModelConfig& config) {
  return construct(config, nullptr);
}

const Var& Parameters::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::Usage, "unknown parameter: " + name);
  return items_[it->second].var;
}

Parameters Parameters::with_substitute(const std::string& name,
                                       Var replacement) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::Usage, "unknown parameter: " + name);
  if (!items_[it->second].var->value.same_shape(replacement->value)) {
    fail(ErrorKind::Shape, "substitute for " + name + " has shape " +
                               replacement->value.shape_str() + ", expected " +
                               items_[it->second].var->value.shape_str());
  }
  Parameters copy;
  copy.items_ = items_;
  copy.index_ = index_;
  copy.items_[it->second].var = std::move(replacement);
  return copy;
}

int64_t Parameters::total_size() const {
  int64_t total = 0;
  for (const NamedVar& item : items_) total += item.var->value.numel();
  return total;
}

void Parameters::zero_grads() {
  for (const NamedVar& item : items_) item.var->zero_grad();
}

}  // namespace charfuse
