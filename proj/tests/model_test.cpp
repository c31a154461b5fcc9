#include <cmath>

#include "gtest/gtest.h"

#include "charfuse/error.hpp"
#include "charfuse/model.hpp"
#include "reference_model.hpp"
#include "test_util.hpp"

namespace cf = charfuse;
namespace op = charfuse::ops;

namespace {

cf::ModelConfig tiny_config(const cf::Vocabs& vocabs) {
  cf::ModelConfig config;
  config.hidden_dim = 16;
  config.layers = 2;
  config.heads = 4;
  config.char_embed_dim = 8;
  config.max_positions = 32;
  config.dropout = 0.0;
  config.subword_vocab = vocabs.subword.size();
  config.char_vocab = vocabs.chars.size();
  config.word_vocab = vocabs.words.size();
  return config;
}

double max_abs_diff(const cf::Tensor& got, const reference::Mat& want) {
  double worst = 0.0;
  for (int r = 0; r < got.rows(); ++r)
    for (int c = 0; c < got.cols(); ++c)
      worst = std::max(worst, std::fabs(got.at(r, c) - want[r][c]));
  return worst;
}

}  // namespace

TEST(CharEncoder, AllZeroGruWeightsGiveZeroEmbeddings) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Parameters params = cf::Parameters::build_zero(config);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("the cat", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  cf::Var h = cf::char_encode(g, seq.char_ids, seq.spans, params, config);
  for (double v : h->value.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(CharEncoder, SingleCharTokenHalvesAgree) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Rng rng(3);
  cf::Parameters params = cf::Parameters::build(config, rng);
  // "a" is one word of one character; its first and last characters are the
  // same, so the two halves of the token embedding coincide.
  const cf::TokenizedSequence seq =
      cf::encode_sequence("a", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  cf::Var h = cf::char_encode(g, seq.char_ids, seq.spans, params, config);
  const int d = config.hidden_dim;
  const int word_row = seq.word_to_first_token[0];
  for (int c = 0; c < d / 2; ++c) {
    EXPECT_DOUBLE_EQ(h->value.at(word_row, c), h->value.at(word_row, d / 2 + c));
  }
}

// Scalar-loop GRU recurrence as an independent oracle.
TEST(CharEncoder, MatchesScalarLoopOracle) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.hidden_dim = 8;
  config.heads = 2;
  cf::Rng rng(0);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("cat on", vocabs.subword, vocabs.chars, 32);
  ASSERT_GE(seq.char_length(), 5);

  cf::Graph g;
  cf::Var h = cf::char_encode(g, seq.char_ids, seq.spans, params, config);

  const reference::Model ref(params, config);
  const reference::Mat want = ref.char_encode(seq.char_ids, seq.spans);
  EXPECT_LT(max_abs_diff(h->value, want), 1e-12);
}

TEST(CharEncoder, NoGruProjectsRawEmbeddings) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.no_gru = true;
  cf::Rng rng(1);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("the cat sat", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  cf::Var h = cf::char_encode(g, seq.char_ids, seq.spans, params, config);
  EXPECT_EQ(h->value.shape, (std::vector<int>{seq.length(), config.hidden_dim}));
  const reference::Model ref(params, config);
  EXPECT_LT(max_abs_diff(h->value, ref.char_encode(seq.char_ids, seq.spans)), 1e-12);
}

TEST(Interact, ZeroOutputProjectionsReduceToLayerNorm) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Rng rng(5);
  cf::Parameters params = cf::Parameters::build(config, rng);
  // Zero W4/b4/W5/b5: GELU(0) = 0, so interaction adds nothing before the
  // norm.
  for (const char* name : {"hi.0.token_out.w", "hi.0.token_out.b",
                           "hi.0.char_out.w", "hi.0.char_out.b"}) {
    cf::Var var = params.get(name);
    std::fill(var->value.data.begin(), var->value.data.end(), 0.0);
  }
  const int m = 4, d = config.hidden_dim;
  cf::Graph g;
  cf::DualState in;
  in.token = cf::make_leaf(testutil::random_tensor({m, d}, rng), false);
  in.chars = cf::make_leaf(testutil::random_tensor({m, d}, rng), false);
  const cf::DualState out = cf::interact(g, in, 0, params, config, nullptr);

  cf::Graph g2;
  cf::Var t_ln = op::layer_norm(g2, in.token, params.get("hi.0.ln_t.gain"),
                                params.get("hi.0.ln_t.bias"), cf::kLayerNormEpsilon);
  cf::Var h_ln = op::layer_norm(g2, in.chars, params.get("hi.0.ln_h.gain"),
                                params.get("hi.0.ln_h.bias"), cf::kLayerNormEpsilon);
  EXPECT_EQ(out.token->value.data, t_ln->value.data);
  EXPECT_EQ(out.chars->value.data, h_ln->value.data);
}

TEST(Interact, NoHiBypassReturnsInputsUntouched) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.no_hi = true;
  cf::Rng rng(6);
  cf::Parameters params = cf::Parameters::build(config, rng);
  cf::Graph g;
  cf::DualState in;
  in.token = cf::make_leaf(testutil::random_tensor({3, config.hidden_dim}, rng), false);
  in.chars = cf::make_leaf(testutil::random_tensor({3, config.hidden_dim}, rng), false);
  const cf::DualState out = cf::interact(g, in, 0, params, config, nullptr);
  EXPECT_EQ(out.token.get(), in.token.get());
  EXPECT_EQ(out.chars.get(), in.chars.get());
}

TEST(Interact, MatchesDirectSummationOracle) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.hidden_dim = 8;
  config.heads = 2;
  cf::Rng rng(0);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const int m = 3;
  cf::Tensor t = testutil::random_tensor({m, 8}, rng);
  cf::Tensor h = testutil::random_tensor({m, 8}, rng);
  cf::Graph g;
  cf::DualState in;
  in.token = cf::make_leaf(t, false);
  in.chars = cf::make_leaf(h, false);
  const cf::DualState out = cf::interact(g, in, 1, params, config, nullptr);

  const reference::Model ref(params, config);
  const auto [want_t, want_h] =
      ref.interact(reference::from_tensor(t), reference::from_tensor(h), 1);
  EXPECT_LT(max_abs_diff(out.token->value, want_t), 1e-12);
  EXPECT_LT(max_abs_diff(out.chars->value, want_h), 1e-12);
}

TEST(Forward, ZeroLayersReturnsInputEmbeddings) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.layers = 0;
  cf::Rng rng(7);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("the cat", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  const cf::ForwardResult result = cf::forward(g, seq, params, config);
  EXPECT_EQ(result.last.token.get(), result.input.token.get());
  EXPECT_EQ(result.last.chars.get(), result.input.chars.get());
  EXPECT_TRUE(result.per_layer.empty());
}

TEST(Forward, ShapeContractAtEveryLayer) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Rng rng(8);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("dogs bark at birds", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  const cf::ForwardResult result = cf::forward(g, seq, params, config);
  const std::vector<int> expected = {seq.length(), config.hidden_dim};
  ASSERT_EQ(result.per_layer.size(), 2u);
  for (const cf::DualState& state : result.per_layer) {
    EXPECT_EQ(state.token->value.shape, expected);
    EXPECT_EQ(state.chars->value.shape, expected);
    EXPECT_TRUE(state.token->value.all_finite());
    EXPECT_TRUE(state.chars->value.all_finite());
  }
}

// The dual-implementation oracle: straight-line scalar evaluation of the
// whole network agrees with the graph-based forward.
TEST(Forward, MatchesStraightLineReferenceImplementation) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Rng rng(0);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq = cf::encode_sequence(
      "a fast red cat runs", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  const cf::ForwardResult result = cf::forward(g, seq, params, config);
  const reference::Model ref(params, config);
  const auto [want_t, want_h] = ref.forward(seq);
  EXPECT_LT(max_abs_diff(result.last.token->value, want_t), 1e-9);
  EXPECT_LT(max_abs_diff(result.last.chars->value, want_h), 1e-9);
}

TEST(Forward, TokenOnlyMatchesReference) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.token_only = true;
  cf::Rng rng(2);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("the mat was flat", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  const cf::ForwardResult result = cf::forward(g, seq, params, config);
  EXPECT_EQ(result.last.chars, nullptr);
  const reference::Model ref(params, config);
  const auto [want_t, want_h] = ref.forward(seq);
  EXPECT_LT(max_abs_diff(result.last.token->value, want_t), 1e-9);
}

// With interaction disabled the token channel never reads the char channel:
// its output must be bit-identical to the stand-alone token_only model with
// the same transformer weights.
TEST(Forward, NoHiTokenChannelIsIndependentOfCharChannel) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig dual_config = tiny_config(vocabs);
  dual_config.no_hi = true;
  cf::Rng rng(4);
  cf::Parameters dual_params = cf::Parameters::build(dual_config, rng);

  cf::ModelConfig token_config = dual_config;
  token_config.no_hi = false;
  token_config.token_only = true;
  cf::Rng rng2(99);
  cf::Parameters token_params = cf::Parameters::build(token_config, rng2);
  // Copy the token-channel weights; the char-channel weights stay different.
  for (const cf::NamedVar& item : token_params.items()) {
    if (dual_params.has(item.name)) {
      item.var->value = dual_params.get(item.name)->value;
    }
  }

  const cf::TokenizedSequence seq =
      cf::encode_sequence("cats and dogs play", vocabs.subword, vocabs.chars, 32);
  cf::Graph g1, g2;
  const cf::ForwardResult dual = cf::forward(g1, seq, dual_params, dual_config);
  const cf::ForwardResult token = cf::forward(g2, seq, token_params, token_config);
  EXPECT_EQ(dual.last.token->value.data, token.last.token->value.data);
}

// No cross-example leakage: each line's outputs are the same no matter which
// other lines were processed before it.
TEST(Forward, PermutingBatchOrderPermutesOutputs) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Rng rng(21);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const std::vector<std::string> lines = {"the cat sat", "dogs bark at birds",
                                          "a fast red cat"};
  auto run_all = [&](const std::vector<int>& order) {
    std::vector<std::vector<double>> outputs(lines.size());
    for (int idx : order) {
      const cf::TokenizedSequence seq =
          cf::encode_sequence(lines[idx], vocabs.subword, vocabs.chars, 32);
      cf::Graph g;
      const cf::ForwardResult fwd = cf::forward(g, seq, params, config);
      outputs[idx] = fwd.last.token->value.data;
    }
    return outputs;
  };
  const auto forward_order = run_all({0, 1, 2});
  const auto reverse_order = run_all({2, 0, 1});
  for (size_t i = 0; i < lines.size(); ++i) {
    EXPECT_EQ(forward_order[i], reverse_order[i]) << "line " << i;
  }
}

TEST(Forward, PositionOverflowFails) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.max_positions = 4;
  cf::Rng rng(3);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("dogs bark at birds", vocabs.subword, vocabs.chars, 64);
  cf::Graph g;
  EXPECT_THROW(cf::forward(g, seq, params, config), cf::Error);
}

TEST(Heads, ZeroWeightsGiveUniformDistribution) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Parameters params = cf::Parameters::build_zero(config);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("the cat", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  const cf::ForwardResult fwd = cf::forward(g, seq, params, config);
  cf::Var logits = cf::nlm_logits(g, fwd.last, {1}, params, config);
  cf::Var probs = op::softmax(g, logits);
  const int s = config.word_vocab;
  for (int c = 0; c < s; ++c) EXPECT_DOUBLE_EQ(probs->value.at(0, c), 1.0 / s);
  double sum = 0.0;
  for (int c = 0; c < s; ++c) sum += probs->value.at(0, c);
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

// Positive rescaling of hidden states must not change the NLM argmax.
TEST(Heads, NlmArgmaxInvariantUnderPositiveScaling) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  const cf::ModelConfig config = tiny_config(vocabs);
  cf::Rng rng(11);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("a dog ran fast", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  const cf::ForwardResult fwd = cf::forward(g, seq, params, config);
  const std::vector<int> positions = seq.word_to_first_token;
  cf::Var logits = cf::nlm_logits(g, fwd.last, positions, params, config);

  // Brute-force argmax scan, then rescale the logits row by a positive
  // constant and re-scan.
  for (int r = 0; r < logits->value.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < logits->value.cols(); ++c) {
      if (logits->value.at(r, c) > logits->value.at(r, best)) best = c;
    }
    cf::Graph g2;
    cf::Var scaled = op::scale(g2, logits, 3.5);
    int best_scaled = 0;
    for (int c = 1; c < scaled->value.cols(); ++c) {
      if (scaled->value.at(r, c) > scaled->value.at(r, best_scaled)) best_scaled = c;
    }
    EXPECT_EQ(best, best_scaled);
  }
}

TEST(Heads, TokenClassifyGathersFirstSubwords) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.head = cf::HeadKind::Token;
  config.num_labels = 3;
  cf::Rng rng(13);
  cf::Parameters params = cf::Parameters::build(config, rng);
  const cf::TokenizedSequence seq =
      cf::encode_sequence("dogs bark", vocabs.subword, vocabs.chars, 32);
  ASSERT_EQ(seq.words.size(), 2u);
  cf::Graph g;
  const cf::ForwardResult fwd = cf::forward(g, seq, params, config);
  cf::Var logits =
      cf::token_classify(g, fwd.last, seq.word_to_first_token, params, config);
  EXPECT_EQ(logits->value.shape, (std::vector<int>{2, 3}));

  // Index-by-hand oracle: recompute from the gathered rows.
  const cf::Tensor& t = fwd.last.token->value;
  const cf::Tensor& h = fwd.last.chars->value;
  const cf::Tensor& w = params.get("head.task.w")->value;
  const cf::Tensor& b = params.get("head.task.b")->value;
  const int d = config.hidden_dim;
  for (int word = 0; word < 2; ++word) {
    const int row = seq.word_to_first_token[word];
    for (int label = 0; label < 3; ++label) {
      double expected = b.data[label];
      for (int c = 0; c < d; ++c) {
        expected += t.at(row, c) * w.at(c, label);
        expected += h.at(row, c) * w.at(d + c, label);
      }
      EXPECT_NEAR(logits->value.at(word, label), expected, 1e-12);
    }
  }
}

TEST(Heads, SequenceClassifyOfIdenticalRowsEqualsSingleRow) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.head = cf::HeadKind::Sequence;
  config.num_labels = 2;
  cf::Rng rng(17);
  cf::Parameters params = cf::Parameters::build(config, rng);
  // Mean over identical rows equals that row: classify logits computed from
  // a 1-row state must match an m-row state with the row repeated.
  const int d = config.hidden_dim;
  cf::Tensor row_t = testutil::random_tensor({1, d}, rng);
  cf::Tensor row_h = testutil::random_tensor({1, d}, rng);
  cf::Tensor rep_t = cf::Tensor::zeros({5, d});
  cf::Tensor rep_h = cf::Tensor::zeros({5, d});
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < d; ++c) {
      rep_t.at(r, c) = row_t.at(0, c);
      rep_h.at(r, c) = row_h.at(0, c);
    }
  }
  cf::Graph g;
  cf::DualState one{cf::make_leaf(row_t, false), cf::make_leaf(row_h, false)};
  cf::DualState many{cf::make_leaf(rep_t, false), cf::make_leaf(rep_h, false)};
  cf::Var a = cf::sequence_classify(g, one, params, config);
  cf::Var b = cf::sequence_classify(g, many, params, config);
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(a->value.at(0, c), b->value.at(0, c), 1e-12);
  }
}

TEST(Heads, NoNlmUsesConcatenatedChannelsForMlm) {
  const cf::Vocabs& vocabs = testutil::tiny_vocabs();
  cf::ModelConfig config = tiny_config(vocabs);
  config.no_nlm = true;
  cf::Rng rng(19);
  cf::Parameters params = cf::Parameters::build(config, rng);
  EXPECT_TRUE(params.has("head.mlm_cat.w"));
  EXPECT_FALSE(params.has("head.mlm.w"));
  EXPECT_FALSE(params.has("head.nlm.fc.w"));
  const cf::TokenizedSequence seq =
      cf::encode_sequence("the cat", vocabs.subword, vocabs.chars, 32);
  cf::Graph g;
  const cf::ForwardResult fwd = cf::forward(g, seq, params, config);
  cf::Var logits = cf::mlm_logits(g, fwd.last, params, config);
  EXPECT_EQ(logits->value.shape,
            (std::vector<int>{seq.length(), config.subword_vocab}));
  EXPECT_THROW(cf::nlm_logits(g, fwd.last, {1}, params, config), cf::Error);
}
