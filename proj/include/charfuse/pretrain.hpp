#ifndef CHARFUSE_PRETRAIN_HPP
#define CHARFUSE_PRETRAIN_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "charfuse/checkpoint.hpp"
#include "charfuse/corruption.hpp"
#include "charfuse/model.hpp"

namespace charfuse {

struct PretrainRates {
  double mask = 0.10;   // MLM over tokens of un-noised words
  double noise = 0.15;  // NLM over eligible words
};

// One pre-training example. Labels always reference the original (pre-noise,
// pre-mask) content; MLM positions and noised-word token spans are disjoint.
struct PretrainExample {
  TokenizedSequence seq;           // noised + masked model input
  std::vector<int> mlm_labels;     // per token; -1 = not a target
  std::vector<int> nlm_positions;  // first-subword index of each noised word
  std::vector<int> nlm_labels;     // original word ids; -1 when not in vocab
  std::vector<AppliedAttack> attacks;
  int64_t mlm_eligible = 0;  // denominator units for rate accounting
  int64_t noise_eligible = 0;
};

// Noise is drawn first over words, then BERT-style 80/10/10 masking over the
// tokens of the remaining words. no_nlm disables noise entirely; token_only
// keeps the noise but masks over all non-special tokens (the
// adversarially-trained single-channel baseline).
PretrainExample build_pretrain_example(const std::string& line, const Vocabs& vocabs,
                                       const ModelConfig& config,
                                       const PretrainRates& rates, Rng& rng);

struct PretrainHyper {
  double lr = 1e-3;
  int warmup = 100;  // linear warmup steps, then constant
  int64_t steps = 1000;
  int batch = 16;
  double nlm_weight = 1.0;
  PretrainRates rates;
  AdamConfig adam;
};

struct StepMetrics {
  int64_t step = 0;
  double loss_total = 0.0;
  double loss_mlm = 0.0;
  double loss_nlm = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<StepMetrics> metrics;
};

// Joint MLM + NLM pre-training from random initialization, or continuation
// of `resume` up to hyper.steps total steps. Single-threaded and bit-exactly
// reproducible for a fixed seed; resuming from a saved step reproduces the
// remaining loss trajectory bit-identically.
PretrainResult pretrain(const std::vector<std::string>& corpus, const Vocabs& vocabs,
                        const ModelConfig& config, const PretrainHyper& hyper,
                        uint64_t seed,
                        std::optional<Checkpoint> resume = std::nullopt,
                        const MetricsSink& sink = nullptr);

std::string step_metrics_json(const StepMetrics& metrics);

}  // namespace charfuse

#endif  // CHARFUSE_PRETRAIN_HPP
