#include "charfuse/pretrain.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"

namespace charfuse {

namespace {

namespace op = ::charfuse::ops;

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

PretrainExample build_pretrain_example(const std::string& line, const Vocabs& vocabs,
                                       const ModelConfig& config,
                                       const PretrainRates& rates, Rng& rng) {
  if (rates.mask < 0.0 || rates.mask > 1.0 || rates.noise < 0.0 || rates.noise > 1.0) {
    fail(ErrorKind::Usage, "pretrain rates must be in [0,1]");
  }
  PretrainExample ex;
  const std::vector<std::string> original_words = split_whitespace(line);

  // Noise first: the NLM channel sees corrupted words, the labels keep the
  // original ones. no_nlm removes character noise from pre-training.
  CorruptionPolicy policy = CorruptionPolicy::pretrain(rates.noise);
  if (config.no_nlm) policy.rate = 0.0;
  for (const std::string& w : original_words) {
    if (w.size() >= static_cast<size_t>(policy.min_len)) ++ex.noise_eligible;
  }
  const NoisySample sample = corrupt_sequence(original_words, policy, rng);
  ex.attacks = sample.attacks();

  ex.seq = encode_sequence(join_words(sample.corrupted_words), vocabs.subword,
                           vocabs.chars, config.max_positions);
  const int m = ex.seq.length();
  ex.mlm_labels.assign(m, op::kIgnoreIndex);

  const bool collect_nlm = !config.no_nlm && !config.token_only;
  if (collect_nlm) {
    for (const AppliedAttack& attack : ex.attacks) {
      ex.nlm_positions.push_back(ex.seq.word_to_first_token[attack.word_index]);
      const int wid = vocabs.words.id(to_lower(attack.original));
      // Out-of-vocab originals are excluded from the loss rather than taught
      // as [UNK].
      ex.nlm_labels.push_back(wid == WordVocab::kUnk ? op::kIgnoreIndex : wid);
    }
  }

  // Masking over tokens whose word was not noised ([CLS]/[SEP] excluded);
  // the AdvBERT-style token_only baseline masks over all non-special tokens.
  const int vocab_size = vocabs.subword.size();
  for (int t = 0; t < m; ++t) {
    const int word = ex.seq.token_to_word[t];
    if (word < 0) continue;
    if (!config.token_only && sample.applied[word]) continue;
    ++ex.mlm_eligible;
    if (rng.uniform() >= rates.mask) continue;
    ex.mlm_labels[t] = ex.seq.tokens[t];
    const double split = rng.uniform();
    if (split < 0.8) {
      ex.seq.tokens[t] = SubwordVocab::kMask;
      ex.seq.token_texts[t] = "[MASK]";
    } else if (split < 0.9) {
      const int random_id = SubwordVocab::kNumSpecial +
                            static_cast<int>(rng.uniform_index(
                                vocab_size - SubwordVocab::kNumSpecial));
      ex.seq.tokens[t] = random_id;
      ex.seq.token_texts[t] = vocabs.subword.entries[random_id];
    }  // else: keep the original token, label it anyway
  }
  return ex;
}

namespace {

struct ExampleLoss {
  Graph graph;
  Var mlm_sum;  // may be null
  Var nlm_sum;  // may be null
  int mlm_count = 0;
  int nlm_count = 0;
  double mlm_value = 0.0;
  double nlm_value = 0.0;
};

}  // namespace

PretrainResult pretrain(const std::vector<std::string>& corpus, const Vocabs& vocabs,
                        const ModelConfig& config, const PretrainHyper& hyper,
                        uint64_t seed, std::optional<Checkpoint> resume,
                        const MetricsSink& sink) {
  config.validate();
  if (corpus.empty()) fail(ErrorKind::Data, "pretrain: empty corpus");
  if (hyper.steps < 1) fail(ErrorKind::Usage, "pretrain: steps must be >= 1");
  if (hyper.batch < 1) fail(ErrorKind::Usage, "pretrain: batch must be >= 1");

  Rng rng(seed);
  PretrainResult result;
  int64_t start_step = 0;
  if (resume) {
    if (!(resume->config == config)) {
      fail(ErrorKind::Data, "pretrain: resume checkpoint config differs");
    }
    result.checkpoint = std::move(*resume);
    rng.deserialize(result.checkpoint.rng_state);
    start_step = result.checkpoint.step;
  } else {
    result.checkpoint.config = config;
    result.checkpoint.params = Parameters::build(config, rng);
    result.checkpoint.adam = AdamState::make(result.checkpoint.params.items());
    result.checkpoint.subword_hash = hash_hex(vocabs.subword.hash());
    result.checkpoint.char_hash = hash_hex(vocabs.chars.hash());
    result.checkpoint.word_hash = hash_hex(vocabs.words.hash());
  }
  Parameters& params = result.checkpoint.params;
  AdamState& adam = *result.checkpoint.adam;

  const bool use_nlm = !config.no_nlm && !config.token_only;
  Rng* dropout_rng = config.dropout > 0.0 ? &rng : nullptr;

  for (int64_t step = start_step + 1; step <= hyper.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = hyper.warmup > 0
                          ? hyper.lr * std::min(1.0, static_cast<double>(step) /
                                                         hyper.warmup)
                          : hyper.lr;
    params.zero_grads();

    std::vector<ExampleLoss> batch(hyper.batch);
    int64_t total_mlm = 0, total_nlm = 0;
    for (int b = 0; b < hyper.batch; ++b) {
      const size_t line_index = rng.uniform_index(corpus.size());
      const PretrainExample ex = build_pretrain_example(
          corpus[line_index], vocabs, config, hyper.rates, rng);
      ExampleLoss& slot = batch[b];
      const ForwardResult fwd =
          forward(slot.graph, ex.seq, params, config, dropout_rng);

      for (int label : ex.mlm_labels) {
        if (label != op::kIgnoreIndex) ++slot.mlm_count;
      }
      if (slot.mlm_count > 0) {
        Var logits = mlm_logits(slot.graph, fwd.last, params, config);
        slot.mlm_sum =
            op::cross_entropy(slot.graph, logits, ex.mlm_labels, op::Reduction::Sum);
        slot.mlm_value = slot.mlm_sum->value.data[0];
        if (!std::isfinite(slot.mlm_value)) {
          fail(ErrorKind::Numerical, "pretrain: non-finite MLM loss at step " +
                                         std::to_string(step) + ", batch example " +
                                         std::to_string(b));
        }
        total_mlm += slot.mlm_count;
      }
      if (use_nlm && !ex.nlm_positions.empty()) {
        for (int label : ex.nlm_labels) {
          if (label != op::kIgnoreIndex) ++slot.nlm_count;
        }
        if (slot.nlm_count > 0) {
          Var logits =
              nlm_logits(slot.graph, fwd.last, ex.nlm_positions, params, config);
          slot.nlm_sum =
              op::cross_entropy(slot.graph, logits, ex.nlm_labels, op::Reduction::Sum);
          slot.nlm_value = slot.nlm_sum->value.data[0];
          if (!std::isfinite(slot.nlm_value)) {
            fail(ErrorKind::Numerical, "pretrain: non-finite NLM loss at step " +
                                           std::to_string(step) +
                                           ", batch example " + std::to_string(b));
          }
          total_nlm += slot.nlm_count;
        }
      }
    }

    // Mean over all target positions in the batch, each channel separately.
    double loss_mlm = 0.0, loss_nlm = 0.0;
    for (ExampleLoss& slot : batch) {
      Var loss_ex;
      if (slot.mlm_sum && total_mlm > 0) {
        loss_ex = op::scale(slot.graph, slot.mlm_sum, 1.0 / total_mlm);
        loss_mlm += slot.mlm_value / total_mlm;
      }
      if (slot.nlm_sum && total_nlm > 0) {
        Var nlm_term =
            op::scale(slot.graph, slot.nlm_sum, hyper.nlm_weight / total_nlm);
        loss_ex = loss_ex ? op::add(slot.graph, loss_ex, nlm_term) : nlm_term;
        loss_nlm += slot.nlm_value / total_nlm;
      }
      if (loss_ex) slot.graph.backward(loss_ex);
    }
    const double loss_total = loss_mlm + hyper.nlm_weight * loss_nlm;
    if (!std::isfinite(loss_total)) {
      fail(ErrorKind::Numerical,
           "pretrain: non-finite total loss at step " + std::to_string(step));
    }

    adam_step(params.items(), adam,
              {lr, hyper.adam.beta1, hyper.adam.beta2, hyper.adam.epsilon}, step);

    StepMetrics metrics;
    metrics.step = step;
    metrics.loss_total = loss_total;
    metrics.loss_mlm = loss_mlm;
    metrics.loss_nlm = loss_nlm;
    metrics.lr = lr;
    metrics.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    result.metrics.push_back(metrics);
    result.checkpoint.loss_history.push_back(loss_total);
    if (sink) sink(metrics);
  }

  result.checkpoint.step = hyper.steps;
  result.checkpoint.rng_state = rng.serialize();
  return result;
}

std::string step_metrics_json(const StepMetrics& metrics) {
  nlohmann::ordered_json j;
  j["step"] = metrics.step;
  j["loss_total"] = metrics.loss_total;
  j["loss_mlm"] = metrics.loss_mlm;
  j["loss_nlm"] = metrics.loss_nlm;
  j["lr"] = metrics.lr;
  j["wall_ms"] = metrics.wall_ms;
  return j.dump();
}

}  // namespace charfuse
