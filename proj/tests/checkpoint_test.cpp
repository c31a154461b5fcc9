#include "gtest/gtest.h"

#include "charfuse/checkpoint.hpp"
#include "charfuse/error.hpp"
#include "charfuse/io.hpp"
#include "charfuse/model.hpp"
#include "test_util.hpp"

namespace cf = charfuse;

namespace {

cf::Checkpoint make_checkpoint(int hidden_dim, uint64_t seed) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config;
  config.hidden_dim = hidden_dim;
  config.layers = 2;
  config.heads = 4;
  config.char_embed_dim = 8;
  config.max_positions = 32;
  config.dropout = 0.0;
  config.subword_vocab = vocabs.subword.size();
  config.char_vocab = vocabs.chars.size();
  config.word_vocab = vocabs.words.size();
  cf::Rng rng(seed);
  cf::Checkpoint checkpoint;
  checkpoint.config = config;
  checkpoint.params = cf::Parameters::build(config, rng);
  checkpoint.step = 12;
  checkpoint.rng_state = rng.serialize();
  checkpoint.subword_hash = cf::hash_hex(vocabs.subword.hash());
  checkpoint.char_hash = cf::hash_hex(vocabs.chars.hash());
  checkpoint.word_hash = cf::hash_hex(vocabs.words.hash());
  checkpoint.loss_history = {3.5, 3.1, 2.9};
  checkpoint.adam = cf::AdamState::make(checkpoint.params.items());
  return checkpoint;
}

}  // namespace

TEST(Checkpoint, SaveLoadForwardIsBitIdentical) {
  const auto dir = testutil::temp_dir("ckpt");
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::Checkpoint original = make_checkpoint(16, 0);
  const std::string path = (dir / "model.bin").string();
  cf::save_checkpoint(original, path);
  const cf::Checkpoint loaded = cf::load_checkpoint(path);

  EXPECT_TRUE(loaded.config == original.config);
  EXPECT_EQ(loaded.step, original.step);
  EXPECT_EQ(loaded.rng_state, original.rng_state);
  EXPECT_EQ(loaded.loss_history, original.loss_history);

  const cf::TokenizedSequence seq = cf::encode_sequence(
      "the cat sat on the mat", vocabs.subword, vocabs.chars, 32);
  cf::Graph g1, g2;
  const cf::ForwardResult a = cf::forward(g1, seq, original.params, original.config);
  const cf::ForwardResult b = cf::forward(g2, seq, loaded.params, loaded.config);
  EXPECT_EQ(a.last.token->value.data, b.last.token->value.data);
  EXPECT_EQ(a.last.chars->value.data, b.last.chars->value.data);
}

TEST(Checkpoint, AdamMomentsRoundTrip) {
  const auto dir = testutil::temp_dir("ckpt_adam");
  cf::Checkpoint original = make_checkpoint(16, 1);
  original.adam->m[3].data[0] = 0.25;
  original.adam->v[3].data[0] = 0.5;
  const std::string path = (dir / "model.bin").string();
  cf::save_checkpoint(original, path);
  const cf::Checkpoint loaded = cf::load_checkpoint(path);
  ASSERT_TRUE(loaded.adam.has_value());
  EXPECT_EQ(loaded.adam->m[3].data, original.adam->m[3].data);
  EXPECT_EQ(loaded.adam->v[3].data, original.adam->v[3].data);
}

TEST(Checkpoint, TamperedHashRejected) {
  const auto dir = testutil::temp_dir("ckpt_tamper");
  const cf::Checkpoint original = make_checkpoint(16, 2);
  const std::string path = (dir / "model.bin").string();
  cf::save_checkpoint(original, path);
  std::string raw = cf::read_text_file(path);
  // Flip a payload byte without touching the manifest.
  raw[raw.size() - 5] = static_cast<char>(raw[raw.size() - 5] ^ 0x40);
  cf::write_text_file(path, raw);
  try {
    cf::load_checkpoint(path);
    FAIL() << "expected hash mismatch";
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("hash"), std::string::npos);
  }
}

TEST(Checkpoint, ConfigMismatchListsOffendingTensors) {
  const auto dir = testutil::temp_dir("ckpt_mismatch");
  const cf::Checkpoint original = make_checkpoint(16, 3);
  const std::string path = (dir / "model.bin").string();
  cf::save_checkpoint(original, path);
  cf::ModelConfig wanted = original.config;
  wanted.hidden_dim = 32;
  try {
    cf::load_checkpoint(path, &wanted);
    FAIL() << "expected mismatch error";
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("embed.token"), std::string::npos);
  }
}

TEST(Checkpoint, BadMagicRejected) {
  const auto dir = testutil::temp_dir("ckpt_magic");
  const std::string path = (dir / "junk.bin").string();
  cf::write_text_file(path, "definitely not a checkpoint");
  EXPECT_THROW(cf::load_checkpoint(path), cf::Error);
}
