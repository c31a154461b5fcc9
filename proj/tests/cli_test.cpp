#include <cstdlib>
#include <fstream>
#include <string>

#include "gtest/gtest.h"

#include <nlohmann/json.hpp>

#include "charfuse/io.hpp"
#include "test_util.hpp"

namespace cf = charfuse;
using json = nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  const auto dir = testutil::temp_dir("cli_out");
  const std::string out_file = (dir / "stdout.txt").string();
  const std::string command =
      std::string(CHARFUSE_CLI_PATH) + " " + args + " > " + out_file + " 2>/dev/null";
  const int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_file);
  std::string line, all;
  while (std::getline(in, line)) all += line + "\n";
  result.stdout_text = all;
  return result;
}

json parse_summary(const RunResult& result) {
  return json::parse(result.stdout_text);
}

}  // namespace

TEST(Cli, GradcheckOpsReportsPass) {
  const RunResult result = run_cli("gradcheck --ops-only --seed 0");
  ASSERT_EQ(result.exit_code, 0) << result.stdout_text;
  const json summary = parse_summary(result);
  EXPECT_TRUE(summary.at("passed").get<bool>());
  EXPECT_LT(summary.at("max_relative_error").get<double>(), 1e-4);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli("no-such-subcommand").exit_code, 1);
  EXPECT_EQ(run_cli("stats").exit_code, 1);  // missing required flags
}

TEST(Cli, MissingFileExitsTwo) {
  const RunResult result =
      run_cli("attack --input /nonexistent.txt --out /tmp/cli_missing --seed 0");
  EXPECT_EQ(result.exit_code, 2);
}

TEST(Cli, AttackIsByteExactAcrossReruns) {
  const auto dir = testutil::temp_dir("cli_attack");
  const std::string corpus = (dir / "corpus.txt").string();
  cf::write_text_file(corpus, "think fair give them a chance\nbackhand play\n");
  for (int run = 0; run < 2; ++run) {
    const RunResult result = run_cli(
        "attack --input " + corpus + " --out " + (dir / std::to_string(run)).string() +
        " --rate 1.0 --seed 11");
    ASSERT_EQ(result.exit_code, 0);
  }
  EXPECT_EQ(cf::read_text_file((dir / "0" / "attacked.txt").string()),
            cf::read_text_file((dir / "1" / "attacked.txt").string()));
  EXPECT_EQ(cf::read_text_file((dir / "0" / "manifest.jsonl").string()),
            cf::read_text_file((dir / "1" / "manifest.jsonl").string()));
}

TEST(Cli, ResolvedConfigReplaysByteExactly) {
  const auto dir = testutil::temp_dir("cli_replay");
  const std::string corpus = (dir / "corpus.txt").string();
  cf::write_text_file(corpus, "think fair give them a chance\n");
  const RunResult first = run_cli("attack --input " + corpus + " --out " +
                                  (dir / "a").string() + " --rate 0.8 --seed 3");
  ASSERT_EQ(first.exit_code, 0);
  // Point the replay at a different output dir by editing the config copy.
  json config = json::parse(
      cf::read_text_file((dir / "a" / "resolved_config.json").string()));
  config["out"] = (dir / "b").string();
  cf::write_text_file((dir / "replay.json").string(), config.dump());
  const RunResult second =
      run_cli("attack --config " + (dir / "replay.json").string());
  ASSERT_EQ(second.exit_code, 0);
  EXPECT_EQ(cf::read_text_file((dir / "a" / "attacked.txt").string()),
            cf::read_text_file((dir / "b" / "attacked.txt").string()));
  EXPECT_EQ(first.stdout_text, second.stdout_text);
}

TEST(Cli, StatsOnBackhandVocab) {
  const auto dir = testutil::temp_dir("cli_stats");
  const std::string corpus = (dir / "corpus.txt").string();
  cf::write_text_file(corpus, "backhand\n");
  const std::string vocab =
      (testutil::data_dir() / "testdata" / "backhand_vocab.txt").string();
  const RunResult result = run_cli("stats --input " + corpus + " --subword-vocab " +
                                   vocab + " --rate 1.0 --kinds drop --seed 0");
  ASSERT_EQ(result.exit_code, 0) << result.stdout_text;
  const json summary = parse_summary(result);
  EXPECT_DOUBLE_EQ(summary.at("multi_subword_rate").get<double>(), 1.0);
  EXPECT_EQ(summary.at("total_words").get<int>(), 1);
}

// Whole pipeline at miniature scale: vocab -> pretrain -> finetune -> eval
// (with robustness drop) -> sensitivity -> extract.
TEST(Cli, EndToEndPipelineRuns) {
  const auto dir = testutil::temp_dir("cli_e2e");
  const std::string data = (testutil::data_dir() / "toy").string();
  const std::string vocab_dir = (dir / "vocab").string();
  ASSERT_EQ(run_cli("build-vocab --input " + data + "/pretrain.txt --out " +
                    vocab_dir + " --subword-size 200 --char-size 64 --word-size 200")
                .exit_code,
            0);
  const std::string V = " --subword-vocab " + vocab_dir +
                        "/subword.vocab --char-vocab " + vocab_dir +
                        "/char.vocab --word-vocab " + vocab_dir + "/word.vocab ";

  ASSERT_EQ(run_cli("tokenize --input " + data + "/seqcls_test.txt --out " +
                    (dir / "tok").string() + V)
                .exit_code,
            0);

  const RunResult pre = run_cli(
      "pretrain --input " + data + "/pretrain.txt" + V + "--out " +
      (dir / "pre").string() + " --d 16 --layers 1 --heads 4 --char-embed 8 " +
      "--steps 30 --batch 4 --warmup 10 --seed 0");
  ASSERT_EQ(pre.exit_code, 0) << pre.stdout_text;
  const std::string ckpt = (dir / "pre" / "checkpoint.bin").string();

  const RunResult tuned = run_cli(
      "finetune --task sequence --input " + data + "/seqcls_train.txt --labels " +
      data + "/seqcls_train.labels --checkpoint " + ckpt + V + "--out " +
      (dir / "ft").string() + " --epochs 1 --batch 16 --seed 0");
  ASSERT_EQ(tuned.exit_code, 0) << tuned.stdout_text;

  ASSERT_EQ(run_cli("attack --input " + data + "/seqcls_test.txt --out " +
                    (dir / "att").string() + " --rate 1.0 --seed 0")
                .exit_code,
            0);
  const RunResult eval = run_cli(
      "eval --task sequence --input " + data + "/seqcls_test.txt --labels " + data +
      "/seqcls_test.labels --attacked-input " + (dir / "att" / "attacked.txt").string() +
      " --checkpoint " + (dir / "ft" / "checkpoint.bin").string() + V);
  ASSERT_EQ(eval.exit_code, 0) << eval.stdout_text;
  const json eval_summary = parse_summary(eval);
  EXPECT_TRUE(eval_summary.contains("drop"));

  const RunResult sens = run_cli(
      "sensitivity --original " + data + "/seqcls_test.txt --attacked " +
      (dir / "att" / "attacked.txt").string() + " --manifest " +
      (dir / "att" / "manifest.jsonl").string() + " --checkpoint " + ckpt + V);
  ASSERT_EQ(sens.exit_code, 0) << sens.stdout_text;
  const json sens_summary = parse_summary(sens);
  EXPECT_GE(sens_summary.at("s").get<double>(), 0.0);
  EXPECT_LE(sens_summary.at("s").get<double>(), 1.0);

  // Sensitivity of a corpus against itself is exactly zero.
  const RunResult self = run_cli(
      "sensitivity --original " + data + "/seqcls_test.txt --attacked " + data +
      "/seqcls_test.txt --manifest /dev/null --checkpoint " + ckpt + V);
  ASSERT_EQ(self.exit_code, 0) << self.stdout_text;
  EXPECT_EQ(parse_summary(self).at("s").get<double>(), 0.0);

  const RunResult extract = run_cli(
      "extract --input " + data + "/seqcls_test.txt --checkpoint " + ckpt + V +
      "--source concat --out " + (dir / "emb").string());
  ASSERT_EQ(extract.exit_code, 0) << extract.stdout_text;
  EXPECT_EQ(parse_summary(extract).at("width").get<int>(), 32);
}

TEST(Cli, BuildVocabProducesLoadableFiles) {
  const auto dir = testutil::temp_dir("cli_vocab");
  const std::string corpus = (dir / "corpus.txt").string();
  cf::write_text_file(corpus, "the cat sat\na dog ran\n");
  const RunResult result =
      run_cli("build-vocab --input " + corpus + " --out " + (dir / "v").string() +
              " --subword-size 64 --char-size 32 --word-size 16");
  ASSERT_EQ(result.exit_code, 0);
  const json summary = parse_summary(result);
  // Tiny corpora exhaust merge candidates before the cap.
  EXPECT_LE(summary.at("subword_entries").get<int>(), 64);
  EXPECT_GT(summary.at("subword_entries").get<int>(), 31);
  // Files load back through the library.
  EXPECT_NO_THROW(cf::SubwordVocab::load((dir / "v" / "subword.vocab").string()));
  EXPECT_NO_THROW(cf::CharVocab::load((dir / "v" / "char.vocab").string()));
  EXPECT_NO_THROW(cf::WordVocab::load((dir / "v" / "word.vocab").string()));
}
