#include <cmath>
#include <set>

#include "gtest/gtest.h"

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"
#include "charfuse/pretrain.hpp"
#include "test_util.hpp"

namespace cf = charfuse;
namespace op = charfuse::ops;

namespace {

cf::ModelConfig small_config(const cf::Vocabs& vocabs) {
  cf::ModelConfig config;
  config.hidden_dim = 16;
  config.layers = 1;
  config.heads = 4;
  config.char_embed_dim = 8;
  config.max_positions = 48;
  config.dropout = 0.0;
  config.subword_vocab = vocabs.subword.size();
  config.char_vocab = vocabs.chars.size();
  config.word_vocab = vocabs.words.size();
  return config;
}

}  // namespace

TEST(BuildPretrainExample, ZeroRatesLeaveInputsUntouched) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = small_config(vocabs);
  cf::Rng rng(0);
  const cf::PretrainExample ex = cf::build_pretrain_example(
      "the cat sat", vocabs, config, {0.0, 0.0}, rng);
  EXPECT_TRUE(ex.nlm_positions.empty());
  EXPECT_TRUE(ex.attacks.empty());
  for (int label : ex.mlm_labels) EXPECT_EQ(label, op::kIgnoreIndex);
  const cf::TokenizedSequence clean =
      cf::encode_sequence("the cat sat", vocabs.subword, vocabs.chars, 48);
  EXPECT_EQ(ex.seq.tokens, clean.tokens);
}

// Forced noise path: character channel sees the corrupted word, labels keep
// the original.
TEST(BuildPretrainExample, NoisedWordKeepsOriginalLabel) {
  const std::vector<std::string> corpus = {"backhand play", "backhand win",
                                           "play win backhand",
                                           "abcdefghijklmnopqrstuvwxyz"};
  const cf::Vocabs vocabs = cf::build_vocabs(corpus, 96, 40, 16);
  cf::ModelConfig config = small_config(vocabs);
  config.subword_vocab = vocabs.subword.size();
  config.char_vocab = vocabs.chars.size();
  config.word_vocab = vocabs.words.size();

  const int backhand_id = vocabs.words.id("backhand");
  ASSERT_NE(backhand_id, cf::WordVocab::kUnk);

  // Noise rate 1 and mask rate 0: the only change is the corruption.
  bool saw_noise = false;
  cf::Rng rng(3);
  for (int trial = 0; trial < 16 && !saw_noise; ++trial) {
    const cf::PretrainExample ex =
        cf::build_pretrain_example("backhand", vocabs, config, {0.0, 1.0}, rng);
    if (ex.attacks.empty()) continue;
    saw_noise = true;
    ASSERT_EQ(ex.nlm_positions.size(), 1u);
    EXPECT_EQ(ex.nlm_labels[0], backhand_id);
    EXPECT_EQ(ex.attacks[0].original, "backhand");
    EXPECT_NE(ex.attacks[0].corrupted, "backhand");
    // The char channel spells the corrupted word.
    std::string spelled;
    for (size_t t = 0; t < ex.seq.tokens.size(); ++t) {
      if (ex.seq.token_to_word[t] != 0) continue;
      const auto& [start, len] = ex.seq.spans[t];
      for (int i = 0; i < len; ++i) {
        const int id = ex.seq.char_ids[start + i];
        spelled += vocabs.chars.entries[id];
      }
    }
    EXPECT_EQ(spelled, cf::to_lower(ex.attacks[0].corrupted));
    // The NLM position is the word's first subword.
    EXPECT_EQ(ex.nlm_positions[0], ex.seq.word_to_first_token[0]);
  }
  EXPECT_TRUE(saw_noise);
}

TEST(BuildPretrainExample, MlmAndNlmPositionsAreDisjoint) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = small_config(vocabs);
  cf::Rng rng(0);
  int64_t checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::string& line =
        testutil::tiny_corpus()[rng.uniform_index(testutil::tiny_corpus().size())];
    const cf::PretrainExample ex =
        cf::build_pretrain_example(line, vocabs, config, {0.3, 0.5}, rng);
    // Tokens of noised words carry no MLM label.
    std::set<int> noised_words;
    for (const cf::AppliedAttack& attack : ex.attacks) {
      noised_words.insert(attack.word_index);
    }
    for (size_t t = 0; t < ex.seq.tokens.size(); ++t) {
      if (ex.mlm_labels[t] == op::kIgnoreIndex) continue;
      ++checked;
      const int word = ex.seq.token_to_word[t];
      EXPECT_GE(word, 0);
      EXPECT_EQ(noised_words.count(word), 0u);
    }
    for (int pos : ex.nlm_positions) {
      EXPECT_EQ(ex.mlm_labels[pos], op::kIgnoreIndex);
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(BuildPretrainExample, EmpiricalRatesStayNearNominal) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = small_config(vocabs);
  cf::Rng rng(0);
  int64_t mlm_selected = 0, mlm_eligible = 0;
  int64_t noised = 0, noise_eligible = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::string& line =
        testutil::tiny_corpus()[rng.uniform_index(testutil::tiny_corpus().size())];
    const cf::PretrainExample ex =
        cf::build_pretrain_example(line, vocabs, config, {0.10, 0.15}, rng);
    for (int label : ex.mlm_labels) mlm_selected += label != op::kIgnoreIndex;
    mlm_eligible += ex.mlm_eligible;
    noised += static_cast<int64_t>(ex.attacks.size());
    noise_eligible += ex.noise_eligible;
  }
  const double mask_rate = static_cast<double>(mlm_selected) / mlm_eligible;
  const double noise_rate = static_cast<double>(noised) / noise_eligible;
  EXPECT_NEAR(mask_rate, 0.10, 0.01);
  EXPECT_NEAR(noise_rate, 0.15, 0.01);
}

TEST(Pretrain, ZeroLearningRateLeavesParamsUnchanged) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = small_config(vocabs);
  cf::PretrainHyper hyper;
  hyper.lr = 0.0;
  hyper.warmup = 0;
  hyper.steps = 1;
  hyper.batch = 2;
  const cf::PretrainResult result =
      cf::pretrain(testutil::tiny_corpus(), vocabs, config, hyper, 0);

  cf::Rng rng(0);
  const cf::Parameters fresh = cf::Parameters::build(config, rng);
  for (const cf::NamedVar& item : fresh.items()) {
    EXPECT_EQ(result.checkpoint.params.get(item.name)->value.data,
              item.var->value.data)
        << item.name;
  }
}

TEST(Pretrain, SameSeedGivesBitIdenticalLossStreams) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = small_config(vocabs);
  cf::PretrainHyper hyper;
  hyper.lr = 1e-3;
  hyper.warmup = 2;
  hyper.steps = 5;
  hyper.batch = 2;
  const cf::PretrainResult a =
      cf::pretrain(testutil::tiny_corpus(), vocabs, config, hyper, 42);
  const cf::PretrainResult b =
      cf::pretrain(testutil::tiny_corpus(), vocabs, config, hyper, 42);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].loss_total, b.metrics[i].loss_total);
    EXPECT_EQ(a.metrics[i].loss_mlm, b.metrics[i].loss_mlm);
    EXPECT_EQ(a.metrics[i].loss_nlm, b.metrics[i].loss_nlm);
  }
}

// With fresh random parameters both cross-entropies start near the uniform
// baseline ln(vocab size).
TEST(Pretrain, InitialLossesNearLogVocabSizes) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = small_config(vocabs);
  cf::PretrainHyper hyper;
  hyper.lr = 0.0;
  hyper.warmup = 0;
  hyper.steps = 20;
  hyper.batch = 8;
  hyper.rates.mask = 0.3;  // more labels per step stabilizes the estimate
  hyper.rates.noise = 0.5;
  const cf::PretrainResult result =
      cf::pretrain(testutil::tiny_corpus(), vocabs, config, hyper, 7);
  double mlm = 0.0, nlm = 0.0;
  for (const cf::StepMetrics& m : result.metrics) {
    mlm += m.loss_mlm;
    nlm += m.loss_nlm;
  }
  mlm /= result.metrics.size();
  nlm /= result.metrics.size();
  EXPECT_NEAR(mlm, std::log(vocabs.subword.size()), 0.1 * std::log(vocabs.subword.size()));
  EXPECT_NEAR(nlm, std::log(vocabs.words.size()), 0.1 * std::log(vocabs.words.size()));
}

TEST(Pretrain, ResumeReproducesTrajectoryBitExactly) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = small_config(vocabs);
  cf::PretrainHyper hyper;
  hyper.lr = 1e-3;
  hyper.warmup = 2;
  hyper.steps = 8;
  hyper.batch = 2;
  const cf::PretrainResult full =
      cf::pretrain(testutil::tiny_corpus(), vocabs, config, hyper, 11);

  cf::PretrainHyper first_half = hyper;
  first_half.steps = 4;
  cf::PretrainResult half =
      cf::pretrain(testutil::tiny_corpus(), vocabs, config, first_half, 11);

  // Round-trip through the container, as the CLI would.
  const auto dir = testutil::temp_dir("resume");
  const std::string path = (dir / "half.bin").string();
  cf::save_checkpoint(half.checkpoint, path);
  cf::Checkpoint reloaded = cf::load_checkpoint(path);

  const cf::PretrainResult rest = cf::pretrain(
      testutil::tiny_corpus(), vocabs, config, hyper, 11, std::move(reloaded));
  ASSERT_EQ(rest.metrics.size(), 4u);
  for (size_t i = 0; i < rest.metrics.size(); ++i) {
    EXPECT_EQ(rest.metrics[i].loss_total, full.metrics[4 + i].loss_total)
        << "step " << rest.metrics[i].step;
  }
  // Final parameters agree bit-exactly too.
  for (const cf::NamedVar& item : full.checkpoint.params.items()) {
    EXPECT_EQ(rest.checkpoint.params.get(item.name)->value.data,
              item.var->value.data)
        << item.name;
  }
}

TEST(Pretrain, TokenOnlyMasksOverNoisedWords) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = small_config(vocabs);
  config.token_only = true;
  cf::Rng rng(5);
  bool masked_noised_word = false;
  for (int trial = 0; trial < 4000 && !masked_noised_word; ++trial) {
    const cf::PretrainExample ex = cf::build_pretrain_example(
        "a fast red cat runs", vocabs, config, {0.4, 0.9}, rng);
    EXPECT_TRUE(ex.nlm_positions.empty());
    std::set<int> noised;
    for (const auto& attack : ex.attacks) noised.insert(attack.word_index);
    for (size_t t = 0; t < ex.seq.tokens.size(); ++t) {
      if (ex.mlm_labels[t] != op::kIgnoreIndex &&
          noised.count(ex.seq.token_to_word[t])) {
        masked_noised_word = true;
      }
    }
  }
  EXPECT_TRUE(masked_noised_word);
}

TEST(Pretrain, NoNlmDisablesNoise) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = small_config(vocabs);
  config.no_nlm = true;
  cf::Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const cf::PretrainExample ex = cf::build_pretrain_example(
        "a fast red cat runs", vocabs, config, {0.2, 0.9}, rng);
    EXPECT_TRUE(ex.attacks.empty());
    EXPECT_TRUE(ex.nlm_positions.empty());
  }
}
