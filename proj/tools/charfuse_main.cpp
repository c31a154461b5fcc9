// charfuse: one binary driving every pipeline stage (vocab building,
// tokenization, character attacks, pre-training, fine-tuning, evaluation,
// sensitivity, embedding extraction, gradient checks) with reproducible
// seeded configuration.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "charfuse/checkpoint.hpp"
#include "charfuse/corruption.hpp"
#include "charfuse/error.hpp"
#include "charfuse/evaluation.hpp"
#include "charfuse/finetune.hpp"
#include "charfuse/gradcheck_suite.hpp"
#include "charfuse/io.hpp"
#include "charfuse/pretrain.hpp"
#include "charfuse/tokenize.hpp"

namespace cf = charfuse;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

bool g_pretty = false;

void print_summary(const json& summary) {
  std::cout << (g_pretty ? summary.dump(2) : summary.dump()) << std::endl;
}

uint64_t default_seed() {
  if (const char* env = std::getenv("CHARFUSE_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      cf::fail(cf::ErrorKind::Usage,
               std::string("CHARFUSE_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) cf::fail(cf::ErrorKind::Io, "cannot create output dir " + out);
}

void write_resolved_config(const std::string& out, const json& config) {
  if (out.empty()) return;
  ensure_out_dir(out);
  cf::write_text_file((fs::path(out) / "resolved_config.json").string(),
                      config.dump(2) + "\n");
}

json load_config_file(const std::string& path, const std::string& subcommand) {
  json config;
  try {
    config = json::parse(cf::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    cf::fail(cf::ErrorKind::Usage, "bad config file " + path + ": " + e.what());
  }
  if (config.value("subcommand", "") != subcommand) {
    cf::fail(cf::ErrorKind::Usage,
             "config file " + path + " is for subcommand \"" +
                 config.value("subcommand", "") + "\", not \"" + subcommand + "\"");
  }
  return config;
}

std::vector<cf::AttackKind> parse_kinds(const std::string& csv) {
  std::vector<cf::AttackKind> kinds;
  std::string token;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!token.empty()) kinds.push_back(cf::attack_kind_from_name(token));
      token.clear();
    } else {
      token += c;
    }
  }
  if (kinds.empty()) {
    cf::fail(cf::ErrorKind::Usage, "attack kinds list is empty");
  }
  return kinds;
}

std::string kinds_to_csv(const std::vector<cf::AttackKind>& kinds) {
  std::string out;
  for (size_t i = 0; i < kinds.size(); ++i) {
    if (i) out += ',';
    out += cf::attack_kind_name(kinds[i]);
  }
  return out;
}

void require_arg(const std::string& value, const char* flag) {
  if (value.empty()) {
    cf::fail(cf::ErrorKind::Usage, std::string("missing required option ") + flag);
  }
}

struct VocabPaths {
  std::string subword;
  std::string chars;
  std::string words;

  void add_options(CLI::App* app) {
    app->add_option("--subword-vocab", subword, "subword vocab file");
    app->add_option("--char-vocab", chars, "char vocab file");
    app->add_option("--word-vocab", words, "word vocab file");
  }

  cf::Vocabs load(bool need_words = true) const {
    require_arg(subword, "--subword-vocab");
    require_arg(chars, "--char-vocab");
    if (need_words) require_arg(words, "--word-vocab");
    cf::Vocabs vocabs;
    vocabs.subword = cf::SubwordVocab::load(subword);
    vocabs.chars = cf::CharVocab::load(chars);
    if (!words.empty()) vocabs.words = cf::WordVocab::load(words);
    return vocabs;
  }
};

// Vocab fingerprints are recorded at pre-training time; refuse to evaluate a
// checkpoint against different vocab files.
void check_vocab_hashes(const cf::Checkpoint& checkpoint, const cf::Vocabs& vocabs) {
  const std::string sub = cf::hash_hex(vocabs.subword.hash());
  const std::string chr = cf::hash_hex(vocabs.chars.hash());
  if (!checkpoint.subword_hash.empty() && checkpoint.subword_hash != sub) {
    cf::fail(cf::ErrorKind::Data, "subword vocab hash does not match checkpoint");
  }
  if (!checkpoint.char_hash.empty() && checkpoint.char_hash != chr) {
    cf::fail(cf::ErrorKind::Data, "char vocab hash does not match checkpoint");
  }
  if (!vocabs.words.entries.empty() && !checkpoint.word_hash.empty() &&
      checkpoint.word_hash != cf::hash_hex(vocabs.words.hash())) {
    cf::fail(cf::ErrorKind::Data, "word vocab hash does not match checkpoint");
  }
}

// ---------------------------------------------------------------------------
// build-vocab
// ---------------------------------------------------------------------------

struct BuildVocabArgs {
  std::string input, out, config_path;
  int subword_size = 256, char_size = 64, word_size = 256;

  json to_json() const {
    json j;
    j["subcommand"] = "build-vocab";
    j["input"] = input;
    j["out"] = out;
    j["subword_size"] = subword_size;
    j["char_size"] = char_size;
    j["word_size"] = word_size;
    return j;
  }
  void from_json(const json& j) {
    input = j.at("input");
    out = j.at("out");
    subword_size = j.at("subword_size");
    char_size = j.at("char_size");
    word_size = j.at("word_size");
  }
};

void run_build_vocab(BuildVocabArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "build-vocab"));
  }
  require_arg(args.input, "--input");
  require_arg(args.out, "--out");
  const auto lines = cf::read_lines(args.input);
  const cf::Vocabs vocabs =
      cf::build_vocabs(lines, args.subword_size, args.char_size, args.word_size);
  ensure_out_dir(args.out);
  const fs::path out(args.out);
  vocabs.subword.save((out / "subword.vocab").string());
  vocabs.chars.save((out / "char.vocab").string());
  vocabs.words.save((out / "word.vocab").string());
  write_resolved_config(args.out, args.to_json());
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "build-vocab";
  summary["subword_entries"] = vocabs.subword.size();
  summary["char_entries"] = vocabs.chars.size();
  summary["word_entries"] = vocabs.words.size();
  summary["subword_hash"] = cf::hash_hex(vocabs.subword.hash());
  summary["char_hash"] = cf::hash_hex(vocabs.chars.hash());
  summary["word_hash"] = cf::hash_hex(vocabs.words.hash());
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// tokenize
// ---------------------------------------------------------------------------

struct TokenizeArgs {
  std::string input, out, config_path;
  VocabPaths vocabs;
  int max_positions = 128;

  json to_json() const {
    json j;
    j["subcommand"] = "tokenize";
    j["input"] = input;
    j["out"] = out;
    j["subword_vocab"] = vocabs.subword;
    j["char_vocab"] = vocabs.chars;
    j["max_positions"] = max_positions;
    return j;
  }
  void from_json(const json& j) {
    input = j.at("input");
    out = j.at("out");
    vocabs.subword = j.at("subword_vocab");
    vocabs.chars = j.at("char_vocab");
    max_positions = j.at("max_positions");
  }
};

void run_tokenize(TokenizeArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "tokenize"));
  }
  require_arg(args.input, "--input");
  require_arg(args.out, "--out");
  require_arg(args.vocabs.subword, "--subword-vocab");
  require_arg(args.vocabs.chars, "--char-vocab");
  const cf::SubwordVocab subword = cf::SubwordVocab::load(args.vocabs.subword);
  const cf::CharVocab chars = cf::CharVocab::load(args.vocabs.chars);
  const auto lines = cf::read_lines(args.input);
  ensure_out_dir(args.out);
  std::ofstream out_file((fs::path(args.out) / "tokens.jsonl").string());
  int64_t total_tokens = 0, total_chars = 0;
  for (size_t li = 0; li < lines.size(); ++li) {
    const cf::TokenizedSequence seq =
        cf::encode_sequence(lines[li], subword, chars, args.max_positions);
    json record;
    record["line"] = li;
    record["words"] = seq.words;
    record["tokens"] = seq.token_texts;
    record["token_ids"] = seq.tokens;
    record["char_ids"] = seq.char_ids;
    json spans = json::array();
    for (const auto& [start, len] : seq.spans) spans.push_back({start, len});
    record["spans"] = spans;
    record["word_to_first_token"] = seq.word_to_first_token;
    out_file << record.dump() << '\n';
    total_tokens += seq.length();
    total_chars += seq.char_length();
  }
  write_resolved_config(args.out, args.to_json());
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "tokenize";
  summary["lines"] = lines.size();
  summary["tokens"] = total_tokens;
  summary["chars"] = total_chars;
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

struct AttackArgs {
  std::string input, out, config_path, adjacency, kinds = "drop,add,swap,keyboard";
  double rate = 1.0;
  int min_len = 4;
  uint64_t seed = default_seed();

  json to_json() const {
    json j;
    j["subcommand"] = "attack";
    j["input"] = input;
    j["out"] = out;
    j["rate"] = rate;
    j["kinds"] = kinds;
    j["min_len"] = min_len;
    j["seed"] = seed;
    j["adjacency"] = adjacency;
    return j;
  }
  void from_json(const json& j) {
    input = j.at("input");
    out = j.at("out");
    rate = j.at("rate");
    kinds = j.at("kinds");
    min_len = j.at("min_len");
    seed = j.at("seed");
    adjacency = j.at("adjacency");
  }
};

void run_attack(AttackArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "attack"));
  }
  require_arg(args.input, "--input");
  require_arg(args.out, "--out");
  cf::CorruptionPolicy policy;
  policy.rate = args.rate;
  policy.kinds = parse_kinds(args.kinds);
  policy.min_len = args.min_len;
  const cf::AdjacencyTable table = args.adjacency.empty()
                                       ? cf::default_adjacency_table()
                                       : cf::load_adjacency_table(args.adjacency);
  ensure_out_dir(args.out);
  const fs::path out(args.out);
  const cf::AttackDatasetResult result = cf::attack_dataset(
      args.input, (out / "attacked.txt").string(), (out / "manifest.jsonl").string(),
      policy, args.seed, table);
  write_resolved_config(args.out, args.to_json());
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "attack";
  summary["total_words"] = result.total_words;
  summary["eligible_words"] = result.eligible_words;
  summary["modified_words"] = result.modified_words;
  summary["modified_fraction"] = result.modified_fraction;
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string input, out, config_path, subword_vocab, kinds = "drop";
  double rate = 1.0;
  int min_len = 4;
  uint64_t seed = default_seed();

  json to_json() const {
    json j;
    j["subcommand"] = "stats";
    j["input"] = input;
    j["out"] = out;
    j["subword_vocab"] = subword_vocab;
    j["rate"] = rate;
    j["kinds"] = kinds;
    j["min_len"] = min_len;
    j["seed"] = seed;
    return j;
  }
  void from_json(const json& j) {
    input = j.at("input");
    out = j.at("out");
    subword_vocab = j.at("subword_vocab");
    rate = j.at("rate");
    kinds = j.at("kinds");
    min_len = j.at("min_len");
    seed = j.at("seed");
  }
};

void run_stats(StatsArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "stats"));
  }
  require_arg(args.input, "--input");
  require_arg(args.subword_vocab, "--subword-vocab");
  const cf::SubwordVocab vocab = cf::SubwordVocab::load(args.subword_vocab);
  cf::CorruptionPolicy policy;
  policy.rate = args.rate;
  policy.kinds = parse_kinds(args.kinds);
  policy.min_len = args.min_len;
  const cf::FragilityStats stats =
      cf::fragility_stats(cf::read_lines(args.input), vocab, policy, args.seed);
  write_resolved_config(args.out, args.to_json());
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "stats";
  summary["multi_subword_rate"] = stats.multi_subword_rate;
  summary["changed_decomposition_rate"] = stats.changed_decomposition_rate;
  summary["changed_count_rate"] = stats.changed_count_rate;
  summary["total_words"] = stats.total_words;
  summary["attacked_words"] = stats.attacked_words;
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct PretrainArgs {
  std::string input, out, config_path, resume;
  VocabPaths vocabs;
  uint64_t seed = default_seed();
  // model
  int d = 64, layers = 2, heads = 4, char_embed = 16, window = 3, filters = 0,
      ffn = 0, max_positions = 128;
  double dropout = 0.1;
  bool no_gru = false, no_hi = false, no_nlm = false, token_only = false;
  // schedule
  double lr = 1e-3, mask_rate = 0.10, noise_rate = 0.15, nlm_weight = 1.0;
  int warmup = 100, batch = 16;
  int64_t steps = 1000;

  json to_json() const {
    json j;
    j["subcommand"] = "pretrain";
    j["input"] = input;
    j["out"] = out;
    j["resume"] = resume;
    j["subword_vocab"] = vocabs.subword;
    j["char_vocab"] = vocabs.chars;
    j["word_vocab"] = vocabs.words;
    j["seed"] = seed;
    j["d"] = d;
    j["layers"] = layers;
    j["heads"] = heads;
    j["char_embed"] = char_embed;
    j["window"] = window;
    j["filters"] = filters;
    j["ffn"] = ffn;
    j["max_positions"] = max_positions;
    j["dropout"] = dropout;
    j["no_gru"] = no_gru;
    j["no_hi"] = no_hi;
    j["no_nlm"] = no_nlm;
    j["token_only"] = token_only;
    j["lr"] = lr;
    j["mask_rate"] = mask_rate;
    j["noise_rate"] = noise_rate;
    j["nlm_weight"] = nlm_weight;
    j["warmup"] = warmup;
    j["batch"] = batch;
    j["steps"] = steps;
    return j;
  }
  void from_json(const json& j) {
    input = j.at("input");
    out = j.at("out");
    resume = j.at("resume");
    vocabs.subword = j.at("subword_vocab");
    vocabs.chars = j.at("char_vocab");
    vocabs.words = j.at("word_vocab");
    seed = j.at("seed");
    d = j.at("d");
    layers = j.at("layers");
    heads = j.at("heads");
    char_embed = j.at("char_embed");
    window = j.at("window");
    filters = j.at("filters");
    ffn = j.at("ffn");
    max_positions = j.at("max_positions");
    dropout = j.at("dropout");
    no_gru = j.at("no_gru");
    no_hi = j.at("no_hi");
    no_nlm = j.at("no_nlm");
    token_only = j.at("token_only");
    lr = j.at("lr");
    mask_rate = j.at("mask_rate");
    noise_rate = j.at("noise_rate");
    nlm_weight = j.at("nlm_weight");
    warmup = j.at("warmup");
    batch = j.at("batch");
    steps = j.at("steps");
  }

  cf::ModelConfig model_config(const cf::Vocabs& v) const {
    cf::ModelConfig config;
    config.hidden_dim = d;
    config.layers = layers;
    config.heads = heads;
    config.char_embed_dim = char_embed;
    config.cnn_window = window;
    config.cnn_filters = filters;
    config.ffn_dim = ffn;
    config.max_positions = max_positions;
    config.dropout = dropout;
    config.no_gru = no_gru;
    config.no_hi = no_hi;
    config.no_nlm = no_nlm;
    config.token_only = token_only;
    config.subword_vocab = v.subword.size();
    config.char_vocab = v.chars.size();
    config.word_vocab = v.words.size();
    return config;
  }
};

void run_pretrain(PretrainArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "pretrain"));
  }
  require_arg(args.input, "--input");
  require_arg(args.out, "--out");
  const cf::Vocabs vocabs = args.vocabs.load();
  const cf::ModelConfig config = args.model_config(vocabs);
  cf::PretrainHyper hyper;
  hyper.lr = args.lr;
  hyper.warmup = args.warmup;
  hyper.steps = args.steps;
  hyper.batch = args.batch;
  hyper.nlm_weight = args.nlm_weight;
  hyper.rates.mask = args.mask_rate;
  hyper.rates.noise = args.noise_rate;

  std::optional<cf::Checkpoint> resume;
  if (!args.resume.empty()) {
    resume = cf::load_checkpoint(args.resume, &config);
    check_vocab_hashes(*resume, vocabs);
  }

  ensure_out_dir(args.out);
  const fs::path out(args.out);
  std::ofstream metrics_file((out / "metrics.jsonl").string());
  const auto sink = [&metrics_file](const cf::StepMetrics& m) {
    metrics_file << cf::step_metrics_json(m) << '\n';
  };
  const auto corpus = cf::read_lines(args.input);
  cf::PretrainResult result =
      cf::pretrain(corpus, vocabs, config, hyper, args.seed, std::move(resume), sink);
  cf::save_checkpoint(result.checkpoint, (out / "checkpoint.bin").string());
  write_resolved_config(args.out, args.to_json());

  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "pretrain";
  summary["steps"] = result.checkpoint.step;
  summary["parameters"] = result.checkpoint.params.total_size();
  if (!result.metrics.empty()) {
    summary["first_loss"] = result.metrics.front().loss_total;
    summary["final_loss"] = result.metrics.back().loss_total;
  }
  summary["checkpoint"] = (out / "checkpoint.bin").string();
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

struct FinetuneArgs {
  std::string task = "sequence";
  std::string input, labels, checkpoint, out, config_path;
  VocabPaths vocabs;
  uint64_t seed = default_seed();
  double lr = 1e-3, eval_fraction = 0.2;
  int epochs = 3, batch = 16;

  json to_json() const {
    json j;
    j["subcommand"] = "finetune";
    j["task"] = task;
    j["input"] = input;
    j["labels"] = labels;
    j["checkpoint"] = checkpoint;
    j["out"] = out;
    j["subword_vocab"] = vocabs.subword;
    j["char_vocab"] = vocabs.chars;
    j["word_vocab"] = vocabs.words;
    j["seed"] = seed;
    j["lr"] = lr;
    j["eval_fraction"] = eval_fraction;
    j["epochs"] = epochs;
    j["batch"] = batch;
    return j;
  }
  void from_json(const json& j) {
    task = j.at("task");
    input = j.at("input");
    labels = j.at("labels");
    checkpoint = j.at("checkpoint");
    out = j.at("out");
    vocabs.subword = j.at("subword_vocab");
    vocabs.chars = j.at("char_vocab");
    vocabs.words = j.at("word_vocab");
    seed = j.at("seed");
    lr = j.at("lr");
    eval_fraction = j.at("eval_fraction");
    epochs = j.at("epochs");
    batch = j.at("batch");
  }
};

void run_finetune(FinetuneArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "finetune"));
  }
  require_arg(args.input, "--input");
  require_arg(args.labels, "--labels");
  require_arg(args.checkpoint, "--checkpoint");
  require_arg(args.out, "--out");
  const cf::Vocabs vocabs = args.vocabs.load(false);
  const cf::Checkpoint base = cf::load_checkpoint(args.checkpoint);
  check_vocab_hashes(base, vocabs);
  const cf::TaskDataset dataset = cf::TaskDataset::load(
      cf::task_kind_from_name(args.task), args.input, args.labels);
  cf::FinetuneHyper hyper;
  hyper.lr = args.lr;
  hyper.epochs = args.epochs;
  hyper.batch = args.batch;
  hyper.eval_fraction = args.eval_fraction;
  cf::FinetuneResult result = cf::finetune(dataset, base, vocabs, hyper, args.seed);
  ensure_out_dir(args.out);
  const fs::path out(args.out);
  cf::save_checkpoint(result.checkpoint, (out / "checkpoint.bin").string());
  write_resolved_config(args.out, args.to_json());
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "finetune";
  summary["labels"] = result.label_names;
  json epochs = json::array();
  for (const cf::EpochMetrics& e : result.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"eval_metric", e.eval_metric},
                      {"eval_accuracy", e.eval_accuracy}});
  }
  summary["epochs"] = epochs;
  summary["checkpoint"] = (out / "checkpoint.bin").string();
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string task = "sequence";
  std::string input, labels, checkpoint, out, config_path, attacked_input,
      probe_dump;
  VocabPaths vocabs;
  bool grouped = false;
  int threads = 1, probe_epochs = 5;
  uint64_t seed = default_seed();

  json to_json() const {
    json j;
    j["subcommand"] = "eval";
    j["task"] = task;
    j["input"] = input;
    j["labels"] = labels;
    j["checkpoint"] = checkpoint;
    j["out"] = out;
    j["attacked_input"] = attacked_input;
    j["probe_dump"] = probe_dump;
    j["subword_vocab"] = vocabs.subword;
    j["char_vocab"] = vocabs.chars;
    j["word_vocab"] = vocabs.words;
    j["grouped"] = grouped;
    j["threads"] = threads;
    j["probe_epochs"] = probe_epochs;
    j["seed"] = seed;
    return j;
  }
  void from_json(const json& j) {
    task = j.at("task");
    input = j.at("input");
    labels = j.at("labels");
    checkpoint = j.at("checkpoint");
    out = j.at("out");
    attacked_input = j.at("attacked_input");
    probe_dump = j.at("probe_dump");
    vocabs.subword = j.at("subword_vocab");
    vocabs.chars = j.at("char_vocab");
    vocabs.words = j.at("word_vocab");
    grouped = j.at("grouped");
    threads = j.at("threads");
    probe_epochs = j.at("probe_epochs");
    seed = j.at("seed");
  }
};

void run_eval(EvalArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "eval"));
  }
  require_arg(args.input, "--input");
  require_arg(args.labels, "--labels");
  const cf::Vocabs vocabs = args.vocabs.load(false);
  const cf::TaskKind kind = cf::task_kind_from_name(args.task);
  const cf::TaskDataset dataset = cf::TaskDataset::load(kind, args.input, args.labels);

  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "eval";

  if (!args.probe_dump.empty()) {
    const cf::EmbeddingDump dump = cf::load_embedding_dump(args.probe_dump);
    cf::ProbeHyper hyper;
    hyper.epochs = args.probe_epochs;
    const double f1 =
        cf::probe_embeddings(dump, dataset, vocabs, 256, hyper, args.seed);
    summary["probe_source"] = cf::embedding_source_name(dump.source);
    summary["probe_f1"] = f1;
    write_resolved_config(args.out, args.to_json());
    print_summary(summary);
    return;
  }

  require_arg(args.checkpoint, "--checkpoint");
  const cf::Checkpoint checkpoint = cf::load_checkpoint(args.checkpoint);
  check_vocab_hashes(checkpoint, vocabs);
  const cf::TaskMetrics original =
      cf::evaluate_task(checkpoint, vocabs, dataset, args.threads);
  summary["metric"] = original.metric;
  summary["accuracy"] = original.accuracy;
  summary["units"] = original.units;
  if (!args.attacked_input.empty()) {
    cf::TaskDataset attacked = cf::TaskDataset::load(
        kind, args.attacked_input, args.labels);
    const cf::RobustnessReport report =
        cf::robustness_eval(checkpoint, vocabs, dataset, attacked);
    summary["metric_original"] = report.original.metric;
    summary["metric_attacked"] = report.attacked.metric;
    summary["drop"] = report.drop;
  }
  if (args.grouped) {
    const cf::GroupedMetrics groups = cf::grouped_eval(checkpoint, vocabs, dataset);
    summary["word_group_metric"] = groups.word_group_metric;
    summary["subword_group_metric"] = groups.subword_group_metric;
    summary["word_group_size"] = groups.word_group_size;
    summary["subword_group_size"] = groups.subword_group_size;
  }
  write_resolved_config(args.out, args.to_json());
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// sensitivity
// ---------------------------------------------------------------------------

struct SensitivityArgs {
  std::string original, attacked, manifest, checkpoint, out, config_path;
  std::string original_dump, attacked_dump;
  VocabPaths vocabs;
  int threads = 1;
  int max_positions = 128;

  json to_json() const {
    json j;
    j["subcommand"] = "sensitivity";
    j["original"] = original;
    j["attacked"] = attacked;
    j["manifest"] = manifest;
    j["checkpoint"] = checkpoint;
    j["out"] = out;
    j["original_dump"] = original_dump;
    j["attacked_dump"] = attacked_dump;
    j["subword_vocab"] = vocabs.subword;
    j["char_vocab"] = vocabs.chars;
    j["word_vocab"] = vocabs.words;
    j["threads"] = threads;
    j["max_positions"] = max_positions;
    return j;
  }
  void from_json(const json& j) {
    original = j.at("original");
    attacked = j.at("attacked");
    manifest = j.at("manifest");
    checkpoint = j.at("checkpoint");
    out = j.at("out");
    original_dump = j.at("original_dump");
    attacked_dump = j.at("attacked_dump");
    vocabs.subword = j.at("subword_vocab");
    vocabs.chars = j.at("char_vocab");
    vocabs.words = j.at("word_vocab");
    threads = j.at("threads");
    max_positions = j.at("max_positions");
  }
};

void run_sensitivity(SensitivityArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "sensitivity"));
  }
  require_arg(args.original, "--original");
  require_arg(args.attacked, "--attacked");
  require_arg(args.manifest, "--manifest");
  const cf::Vocabs vocabs = args.vocabs.load(false);
  const auto original_lines = cf::read_lines(args.original);
  const auto attacked_lines = cf::read_lines(args.attacked);
  const cf::AttackManifest manifest =
      cf::AttackManifest::load(args.manifest, original_lines.size());

  cf::SensitivityReport report;
  if (!args.original_dump.empty() || !args.attacked_dump.empty()) {
    if (args.original_dump.empty() || args.attacked_dump.empty()) {
      cf::fail(cf::ErrorKind::Usage,
               "--original-dump and --attacked-dump must be given together");
    }
    report = cf::sensitivity_from_dumps(
        cf::load_embedding_dump(args.original_dump),
        cf::load_embedding_dump(args.attacked_dump), vocabs, original_lines,
        attacked_lines, manifest, args.max_positions);
  } else {
    const cf::Checkpoint checkpoint = cf::load_checkpoint(args.checkpoint);
    check_vocab_hashes(checkpoint, vocabs);
    report = cf::sensitivity(checkpoint, vocabs, original_lines, attacked_lines,
                             manifest, args.threads);
  }
  if (!args.out.empty()) {
    ensure_out_dir(args.out);
    std::ofstream records((fs::path(args.out) / "sensitivity.jsonl").string());
    for (const cf::WordCosineRecord& r : report.records) {
      json record;
      record["word"] = r.word;
      record["attacked_word"] = r.attacked_word;
      record["cosine"] = r.cosine;
      records << record.dump() << '\n';
    }
    write_resolved_config(args.out, args.to_json());
  }
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "sensitivity";
  summary["s"] = report.s;
  summary["words"] = report.word_count;
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string input, checkpoint, out, config_path, source = "concat";
  VocabPaths vocabs;
  int threads = 1;

  json to_json() const {
    json j;
    j["subcommand"] = "extract";
    j["input"] = input;
    j["checkpoint"] = checkpoint;
    j["out"] = out;
    j["source"] = source;
    j["subword_vocab"] = vocabs.subword;
    j["char_vocab"] = vocabs.chars;
    j["word_vocab"] = vocabs.words;
    j["threads"] = threads;
    return j;
  }
  void from_json(const json& j) {
    input = j.at("input");
    checkpoint = j.at("checkpoint");
    out = j.at("out");
    source = j.at("source");
    vocabs.subword = j.at("subword_vocab");
    vocabs.chars = j.at("char_vocab");
    vocabs.words = j.at("word_vocab");
    threads = j.at("threads");
  }
};

void run_extract(ExtractArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "extract"));
  }
  require_arg(args.input, "--input");
  require_arg(args.checkpoint, "--checkpoint");
  require_arg(args.out, "--out");
  const cf::Vocabs vocabs = args.vocabs.load(false);
  const cf::Checkpoint checkpoint = cf::load_checkpoint(args.checkpoint);
  check_vocab_hashes(checkpoint, vocabs);
  const auto lines = cf::read_lines(args.input);
  const cf::EmbeddingDump dump =
      cf::extract_embeddings(checkpoint, vocabs, lines,
                             cf::embedding_source_from_name(args.source),
                             args.threads);
  ensure_out_dir(args.out);
  const fs::path out(args.out);
  cf::save_embedding_dump(dump, (out / "embeddings.bin").string());
  write_resolved_config(args.out, args.to_json());
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "extract";
  summary["source"] = args.source;
  summary["rows"] = dump.rows.shape[0];
  summary["width"] = dump.width;
  summary["corpus_hash"] = dump.corpus_hash;
  summary["dump"] = (out / "embeddings.bin").string();
  print_summary(summary);
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string out, config_path;
  int d = 16, layers = 2;
  uint64_t seed = default_seed();
  double step = 1e-5, tolerance = 1e-4;
  bool ops_only = false;

  json to_json() const {
    json j;
    j["subcommand"] = "gradcheck";
    j["out"] = out;
    j["d"] = d;
    j["layers"] = layers;
    j["seed"] = seed;
    j["step"] = step;
    j["tolerance"] = tolerance;
    j["ops_only"] = ops_only;
    return j;
  }
  void from_json(const json& j) {
    out = j.at("out");
    d = j.at("d");
    layers = j.at("layers");
    seed = j.at("seed");
    step = j.at("step");
    tolerance = j.at("tolerance");
    ops_only = j.at("ops_only");
  }
};

void run_gradcheck(GradcheckArgs& args) {
  if (!args.config_path.empty()) {
    args.from_json(load_config_file(args.config_path, "gradcheck"));
  }
  const cf::GradCheckSuiteResult ops =
      cf::gradcheck_primitive_ops(args.seed, args.step, args.tolerance);
  json summary;
  summary["ok"] = true;
  summary["subcommand"] = "gradcheck";
  summary["ops_max_relative_error"] = ops.max_relative_error;
  summary["ops_passed"] = ops.passed;
  bool passed = ops.passed;
  double max_err = ops.max_relative_error;
  if (!args.ops_only) {
    const cf::GradCheckSuiteResult model =
        cf::gradcheck_model(args.d, args.layers, args.seed, args.step, args.tolerance);
    summary["model_max_relative_error"] = model.max_relative_error;
    summary["model_passed"] = model.passed;
    passed = passed && model.passed;
    max_err = std::max(max_err, model.max_relative_error);
  }
  summary["max_relative_error"] = max_err;
  summary["passed"] = passed;
  write_resolved_config(args.out, args.to_json());
  print_summary(summary);
  if (!passed) {
    cf::fail(cf::ErrorKind::Numerical,
             "gradient check failed: max relative error " + std::to_string(max_err) +
                 " exceeds tolerance " + std::to_string(args.tolerance));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"charfuse: dual-channel character-aware transformer workbench"};
  app.require_subcommand(1);
  app.add_flag("--pretty", g_pretty, "pretty-print JSON summaries");

  BuildVocabArgs build_vocab_args;
  auto* build_vocab = app.add_subcommand("build-vocab", "build all vocabularies");
  build_vocab->add_option("--input", build_vocab_args.input, "corpus file");
  build_vocab->add_option("--out", build_vocab_args.out, "output directory");
  build_vocab->add_option("--subword-size", build_vocab_args.subword_size, "");
  build_vocab->add_option("--char-size", build_vocab_args.char_size, "");
  build_vocab->add_option("--word-size", build_vocab_args.word_size, "");
  build_vocab->add_option("--config", build_vocab_args.config_path,
                          "replay a resolved config");

  TokenizeArgs tokenize_args;
  auto* tokenize = app.add_subcommand("tokenize", "encode a corpus");
  tokenize->add_option("--input", tokenize_args.input, "corpus file");
  tokenize->add_option("--out", tokenize_args.out, "output directory");
  tokenize->add_option("--subword-vocab", tokenize_args.vocabs.subword, "");
  tokenize->add_option("--char-vocab", tokenize_args.vocabs.chars, "");
  tokenize->add_option("--max-positions", tokenize_args.max_positions, "");
  tokenize->add_option("--config", tokenize_args.config_path, "");

  AttackArgs attack_args;
  auto* attack = app.add_subcommand("attack", "write an attacked corpus copy");
  attack->add_option("--input", attack_args.input, "corpus file");
  attack->add_option("--out", attack_args.out, "output directory");
  attack->add_option("--rate", attack_args.rate, "attack probability per word");
  attack->add_option("--kinds", attack_args.kinds, "comma list of attack kinds");
  attack->add_option("--min-len", attack_args.min_len, "minimum word length");
  attack->add_option("--seed", attack_args.seed, "RNG seed");
  attack->add_option("--adjacency", attack_args.adjacency, "adjacency table file");
  attack->add_option("--config", attack_args.config_path, "");

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "subword fragility statistics");
  stats->add_option("--input", stats_args.input, "corpus file");
  stats->add_option("--out", stats_args.out, "output directory (optional)");
  stats->add_option("--subword-vocab", stats_args.subword_vocab, "");
  stats->add_option("--rate", stats_args.rate, "");
  stats->add_option("--kinds", stats_args.kinds, "");
  stats->add_option("--min-len", stats_args.min_len, "");
  stats->add_option("--seed", stats_args.seed, "");
  stats->add_option("--config", stats_args.config_path, "");

  PretrainArgs pretrain_args;
  auto* pretrain = app.add_subcommand("pretrain", "MLM + NLM pre-training");
  pretrain->add_option("--input", pretrain_args.input, "corpus file");
  pretrain->add_option("--out", pretrain_args.out, "output directory");
  pretrain->add_option("--resume", pretrain_args.resume, "checkpoint to resume");
  pretrain_args.vocabs.add_options(pretrain);
  pretrain->add_option("--seed", pretrain_args.seed, "");
  pretrain->add_option("--d", pretrain_args.d, "hidden width");
  pretrain->add_option("--layers", pretrain_args.layers, "");
  pretrain->add_option("--heads", pretrain_args.heads, "");
  pretrain->add_option("--char-embed", pretrain_args.char_embed, "");
  pretrain->add_option("--window", pretrain_args.window, "fusion CNN window");
  pretrain->add_option("--filters", pretrain_args.filters, "fusion CNN filters");
  pretrain->add_option("--ffn", pretrain_args.ffn, "");
  pretrain->add_option("--max-positions", pretrain_args.max_positions, "");
  pretrain->add_option("--dropout", pretrain_args.dropout, "");
  pretrain->add_flag("--no-gru", pretrain_args.no_gru, "");
  pretrain->add_flag("--no-hi", pretrain_args.no_hi, "");
  pretrain->add_flag("--no-nlm", pretrain_args.no_nlm, "");
  pretrain->add_flag("--token-only", pretrain_args.token_only, "");
  pretrain->add_option("--lr", pretrain_args.lr, "");
  pretrain->add_option("--mask-rate", pretrain_args.mask_rate, "");
  pretrain->add_option("--noise-rate", pretrain_args.noise_rate, "");
  pretrain->add_option("--nlm-weight", pretrain_args.nlm_weight, "");
  pretrain->add_option("--warmup", pretrain_args.warmup, "");
  pretrain->add_option("--batch", pretrain_args.batch, "");
  pretrain->add_option("--steps", pretrain_args.steps, "");
  pretrain->add_option("--config", pretrain_args.config_path, "");

  FinetuneArgs finetune_args;
  auto* finetune = app.add_subcommand("finetune", "task fine-tuning");
  finetune->add_option("--task", finetune_args.task, "token|sequence");
  finetune->add_option("--input", finetune_args.input, "");
  finetune->add_option("--labels", finetune_args.labels, "");
  finetune->add_option("--checkpoint", finetune_args.checkpoint, "");
  finetune->add_option("--out", finetune_args.out, "");
  finetune_args.vocabs.add_options(finetune);
  finetune->add_option("--seed", finetune_args.seed, "");
  finetune->add_option("--lr", finetune_args.lr, "");
  finetune->add_option("--eval-fraction", finetune_args.eval_fraction, "");
  finetune->add_option("--epochs", finetune_args.epochs, "");
  finetune->add_option("--batch", finetune_args.batch, "");
  finetune->add_option("--config", finetune_args.config_path, "");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "task / robustness / probe evaluation");
  eval->add_option("--task", eval_args.task, "token|sequence");
  eval->add_option("--input", eval_args.input, "");
  eval->add_option("--labels", eval_args.labels, "");
  eval->add_option("--checkpoint", eval_args.checkpoint, "");
  eval->add_option("--out", eval_args.out, "");
  eval->add_option("--attacked-input", eval_args.attacked_input, "");
  eval->add_option("--probe-dump", eval_args.probe_dump, "");
  eval_args.vocabs.add_options(eval);
  eval->add_flag("--grouped", eval_args.grouped, "word vs subword groups");
  eval->add_option("--threads", eval_args.threads, "");
  eval->add_option("--probe-epochs", eval_args.probe_epochs, "");
  eval->add_option("--seed", eval_args.seed, "");
  eval->add_option("--config", eval_args.config_path, "");

  SensitivityArgs sensitivity_args;
  auto* sensitivity = app.add_subcommand("sensitivity", "embedding sensitivity");
  sensitivity->add_option("--original", sensitivity_args.original, "");
  sensitivity->add_option("--attacked", sensitivity_args.attacked, "");
  sensitivity->add_option("--manifest", sensitivity_args.manifest, "");
  sensitivity->add_option("--checkpoint", sensitivity_args.checkpoint, "");
  sensitivity->add_option("--out", sensitivity_args.out, "");
  sensitivity->add_option("--original-dump", sensitivity_args.original_dump, "");
  sensitivity->add_option("--attacked-dump", sensitivity_args.attacked_dump, "");
  sensitivity_args.vocabs.add_options(sensitivity);
  sensitivity->add_option("--threads", sensitivity_args.threads, "");
  sensitivity->add_option("--max-positions", sensitivity_args.max_positions, "");
  sensitivity->add_option("--config", sensitivity_args.config_path, "");

  ExtractArgs extract_args;
  auto* extract = app.add_subcommand("extract", "dump last-layer embeddings");
  extract->add_option("--input", extract_args.input, "");
  extract->add_option("--checkpoint", extract_args.checkpoint, "");
  extract->add_option("--out", extract_args.out, "");
  extract->add_option("--source", extract_args.source, "token|char|sum|concat");
  extract_args.vocabs.add_options(extract);
  extract->add_option("--threads", extract_args.threads, "");
  extract->add_option("--config", extract_args.config_path, "");

  GradcheckArgs gradcheck_args;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--out", gradcheck_args.out, "");
  gradcheck->add_option("--d", gradcheck_args.d, "");
  gradcheck->add_option("--layers", gradcheck_args.layers, "");
  gradcheck->add_option("--seed", gradcheck_args.seed, "");
  gradcheck->add_option("--step", gradcheck_args.step, "");
  gradcheck->add_option("--tolerance", gradcheck_args.tolerance, "");
  gradcheck->add_flag("--ops-only", gradcheck_args.ops_only, "");
  gradcheck->add_option("--config", gradcheck_args.config_path, "");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse diagnostic
    return code == 0 ? 0 : 1;     // usage errors exit 1
  }

  try {
    if (build_vocab->parsed()) run_build_vocab(build_vocab_args);
    if (tokenize->parsed()) run_tokenize(tokenize_args);
    if (attack->parsed()) run_attack(attack_args);
    if (stats->parsed()) run_stats(stats_args);
    if (pretrain->parsed()) run_pretrain(pretrain_args);
    if (finetune->parsed()) run_finetune(finetune_args);
    if (eval->parsed()) run_eval(eval_args);
    if (sensitivity->parsed()) run_sensitivity(sensitivity_args);
    if (extract->parsed()) run_extract(extract_args);
    if (gradcheck->parsed()) run_gradcheck(gradcheck_args);
  } catch (const cf::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
