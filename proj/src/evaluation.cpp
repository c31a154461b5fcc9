#include "charfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"
#include "charfuse/parallel.hpp"

namespace charfuse {

namespace {

namespace op = ::charfuse::ops;
using json = nlohmann::ordered_json;

// Last-layer [T;H] rows (T only for token_only models).
Tensor last_hidden_rows(const Checkpoint& checkpoint, const TokenizedSequence& seq,
                        EmbeddingSource source) {
  Graph g;
  const ForwardResult fwd = forward(g, seq, checkpoint.params, checkpoint.config);
  const Tensor& token = fwd.last.token->value;
  if (checkpoint.config.token_only) {
    if (source == EmbeddingSource::Char) {
      fail(ErrorKind::Usage, "token_only model has no character channel");
    }
    return token;
  }
  const Tensor& chars = fwd.last.chars->value;
  const int m = token.shape[0], d = token.shape[1];
  switch (source) {
    case EmbeddingSource::Token:
      return token;
    case EmbeddingSource::Char:
      return chars;
    case EmbeddingSource::Sum: {
      Tensor out = token;
      for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += chars.data[i];
      return out;
    }
    case EmbeddingSource::Concat: {
      Tensor out = Tensor::zeros({m, 2 * d});
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < d; ++c) {
          out.at(r, c) = token.at(r, c);
          out.at(r, d + c) = chars.at(r, c);
        }
      }
      return out;
    }
  }
  fail(ErrorKind::Usage, "unknown embedding source");
}

void check_word_alignment(const std::vector<std::string>& original_lines,
                          const std::vector<std::string>& attacked_lines,
                          const AttackManifest& manifest) {
  if (original_lines.size() != attacked_lines.size()) {
    fail(ErrorKind::Data, "original and attacked corpora have different line counts (" +
                              std::to_string(original_lines.size()) + " vs " +
                              std::to_string(attacked_lines.size()) + ")");
  }
  for (size_t li = 0; li < original_lines.size(); ++li) {
    const auto original = split_whitespace(original_lines[li]);
    const auto attacked = split_whitespace(attacked_lines[li]);
    if (original.size() != attacked.size()) {
      fail(ErrorKind::Data,
           "line " + std::to_string(li) + ": word counts differ (" +
               std::to_string(original.size()) + " vs " +
               std::to_string(attacked.size()) + ")");
    }
    if (li < manifest.by_line.size()) {
      for (const AppliedAttack& attack : manifest.by_line[li]) {
        if (attack.word_index < 0 ||
            attack.word_index >= static_cast<int>(original.size()) ||
            original[attack.word_index] != attack.original ||
            attacked[attack.word_index] != attack.corrupted) {
          fail(ErrorKind::Data, "line " + std::to_string(li) +
                                    ": manifest does not match the corpora at word " +
                                    std::to_string(attack.word_index));
        }
      }
    }
  }
}

}  // namespace

double cosine_similarity(const double* a, const double* b, int n) {
  bool identical = true;
  for (int i = 0; i < n; ++i) {
    if (a[i] != b[i]) {
      identical = false;
      break;
    }
  }
  if (identical) return 1.0;  // avoids rounding drift; S stays exactly 0
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

AttackManifest AttackManifest::load(const std::string& path, size_t line_count) {
  AttackManifest manifest;
  manifest.by_line.resize(line_count);
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Data, "bad manifest line in " + path + ": " + e.what());
    }
    if (record.value("summary", false)) continue;
    const size_t li = record.at("line").get<size_t>();
    if (li >= line_count) {
      fail(ErrorKind::Data, "manifest line index " + std::to_string(li) +
                                " out of range in " + path);
    }
    AppliedAttack attack;
    attack.word_index = record.at("word_index").get<int>();
    attack.kind = attack_kind_from_name(record.at("kind").get<std::string>());
    attack.original = record.at("original").get<std::string>();
    attack.corrupted = record.at("corrupted").get<std::string>();
    manifest.by_line[li].push_back(attack);
  }
  return manifest;
}

SensitivityReport sensitivity(const Checkpoint& checkpoint, const Vocabs& vocabs,
                              const std::vector<std::string>& original_lines,
                              const std::vector<std::string>& attacked_lines,
                              const AttackManifest& manifest, int threads) {
  check_word_alignment(original_lines, attacked_lines, manifest);
  std::vector<std::vector<WordCosineRecord>> slots(original_lines.size());
  parallel_for(threads, original_lines.size(), [&](size_t li) {
    const TokenizedSequence orig = encode_sequence(
        original_lines[li], vocabs.subword, vocabs.chars, checkpoint.config.max_positions);
    if (orig.words.empty()) return;
    const TokenizedSequence att = encode_sequence(
        attacked_lines[li], vocabs.subword, vocabs.chars, checkpoint.config.max_positions);
    const Tensor orig_rows =
        last_hidden_rows(checkpoint, orig, EmbeddingSource::Concat);
    const Tensor att_rows = last_hidden_rows(checkpoint, att, EmbeddingSource::Concat);
    const int width = orig_rows.cols();
    for (size_t w = 0; w < orig.words.size(); ++w) {
      const double* a =
          &orig_rows.data[static_cast<size_t>(orig.word_to_first_token[w]) * width];
      const double* b =
          &att_rows.data[static_cast<size_t>(att.word_to_first_token[w]) * width];
      slots[li].push_back(
          {orig.words[w], att.words[w], cosine_similarity(a, b, width)});
    }
  });
  SensitivityReport report;
  double total = 0.0;
  for (const auto& slot : slots) {
    for (const WordCosineRecord& record : slot) {
      report.records.push_back(record);
      total += -0.5 * record.cosine + 0.5;
      ++report.word_count;
    }
  }
  report.s = report.word_count > 0 ? total / report.word_count : 0.0;
  return report;
}

RobustnessReport robustness_eval(const Checkpoint& checkpoint, const Vocabs& vocabs,
                                 const TaskDataset& original,
                                 const TaskDataset& attacked) {
  if (original.lines.size() != attacked.lines.size()) {
    fail(ErrorKind::Data, "robustness_eval: datasets are not line-aligned");
  }
  RobustnessReport report;
  report.original = evaluate_task(checkpoint, vocabs, original);
  report.attacked = evaluate_task(checkpoint, vocabs, attacked);
  report.drop = report.original.metric - report.attacked.metric;
  return report;
}

GroupedMetrics grouped_eval(const Checkpoint& checkpoint, const Vocabs& vocabs,
                            const TaskDataset& dataset) {
  if (dataset.kind != TaskKind::Token || checkpoint.config.head != HeadKind::Token) {
    fail(ErrorKind::Data, "grouped_eval requires a token task and token head");
  }
  // Dense label ids in the checkpoint's order.
  std::vector<std::string> names = checkpoint.labels;
  GroupedMetrics metrics;
  int64_t word_correct = 0, subword_correct = 0;
  for (size_t li = 0; li < dataset.lines.size(); ++li) {
    const std::vector<int> predicted =
        predict_token_labels(checkpoint, vocabs, dataset.lines[li]);
    const auto& labels = dataset.labels[li];
    if (labels.size() != predicted.size()) {
      fail(ErrorKind::Data, "line " + std::to_string(li) +
                                ": label count does not match word count");
    }
    const std::vector<std::string> words = split_whitespace(dataset.lines[li]);
    for (size_t w = 0; w < predicted.size(); ++w) {
      auto it = std::find(names.begin(), names.end(), labels[w]);
      if (it == names.end()) {
        fail(ErrorKind::Data, "unknown gold label " + labels[w]);
      }
      const int gold = static_cast<int>(it - names.begin());
      const bool multi =
          tokenize_word(to_lower(words[w]), vocabs.subword).size() > 1;
      if (multi) {
        ++metrics.subword_group_size;
        subword_correct += predicted[w] == gold;
      } else {
        ++metrics.word_group_size;
        word_correct += predicted[w] == gold;
      }
    }
  }
  if (metrics.word_group_size > 0) {
    metrics.word_group_metric =
        static_cast<double>(word_correct) / metrics.word_group_size;
  }
  if (metrics.subword_group_size > 0) {
    metrics.subword_group_metric =
        static_cast<double>(subword_correct) / metrics.subword_group_size;
  }
  return metrics;
}

EmbeddingSource embedding_source_from_name(const std::string& name) {
  if (name == "token") return EmbeddingSource::Token;
  if (name == "char") return EmbeddingSource::Char;
  if (name == "sum") return EmbeddingSource::Sum;
  if (name == "concat") return EmbeddingSource::Concat;
  fail(ErrorKind::Usage, "unknown embedding source: " + name);
}

const char* embedding_source_name(EmbeddingSource source) {
  switch (source) {
    case EmbeddingSource::Token:
      return "token";
    case EmbeddingSource::Char:
      return "char";
    case EmbeddingSource::Sum:
      return "sum";
    case EmbeddingSource::Concat:
      return "concat";
  }
  return "unknown";
}

EmbeddingDump extract_embeddings(const Checkpoint& checkpoint, const Vocabs& vocabs,
                                 const std::vector<std::string>& lines,
                                 EmbeddingSource source, int threads) {
  EmbeddingDump dump;
  dump.source = source;
  const int d = checkpoint.config.hidden_dim;
  dump.width = source == EmbeddingSource::Concat && !checkpoint.config.token_only
                   ? 2 * d
                   : d;
  std::string corpus_text;
  for (const std::string& line : lines) {
    corpus_text += line;
    corpus_text += '\n';
  }
  std::vector<Tensor> slots(lines.size());
  parallel_for(threads, lines.size(), [&](size_t li) {
    const TokenizedSequence seq = encode_sequence(
        lines[li], vocabs.subword, vocabs.chars, checkpoint.config.max_positions);
    slots[li] = last_hidden_rows(checkpoint, seq, source);
  });
  std::vector<double> rows;
  int total = 0;
  for (const Tensor& hidden : slots) {
    dump.line_offsets.push_back(total);
    dump.line_lengths.push_back(hidden.shape[0]);
    rows.insert(rows.end(), hidden.data.begin(), hidden.data.end());
    total += hidden.shape[0];
  }
  dump.rows = Tensor({total, dump.width}, std::move(rows));
  dump.corpus_hash = hash_hex(fnv1a64(corpus_text));
  return dump;
}

void save_embedding_dump(const EmbeddingDump& dump, const std::string& path) {
  json manifest;
  manifest["format"] = "charfuse-checkpoint";
  manifest["version"] = 1;
  manifest["kind"] = "embedding_dump";
  manifest["source"] = embedding_source_name(dump.source);
  manifest["width"] = dump.width;
  manifest["corpus_hash"] = dump.corpus_hash;
  manifest["line_offsets"] = dump.line_offsets;
  manifest["line_lengths"] = dump.line_lengths;
  write_container(path, manifest, dump.rows.data);
}

EmbeddingDump load_embedding_dump(const std::string& path) {
  Container container = read_container(path);
  const nlohmann::json& manifest = container.manifest;
  if (manifest.value("kind", "") != "embedding_dump") {
    fail(ErrorKind::Data, "container is not an embedding dump: " + path);
  }
  EmbeddingDump dump;
  dump.source = embedding_source_from_name(manifest.at("source").get<std::string>());
  dump.width = manifest.at("width").get<int>();
  dump.corpus_hash = manifest.at("corpus_hash").get<std::string>();
  dump.line_offsets = manifest.at("line_offsets").get<std::vector<int>>();
  dump.line_lengths = manifest.at("line_lengths").get<std::vector<int>>();
  const int total = static_cast<int>(container.payload.size()) / dump.width;
  if (static_cast<size_t>(total) * dump.width != container.payload.size()) {
    fail(ErrorKind::Data, "embedding dump payload is not a whole number of rows");
  }
  dump.rows = Tensor({total, dump.width}, std::move(container.payload));
  return dump;
}

SensitivityReport sensitivity_from_dumps(const EmbeddingDump& original_dump,
                                         const EmbeddingDump& attacked_dump,
                                         const Vocabs& vocabs,
                                         const std::vector<std::string>& original_lines,
                                         const std::vector<std::string>& attacked_lines,
                                         const AttackManifest& manifest,
                                         int max_positions) {
  check_word_alignment(original_lines, attacked_lines, manifest);
  if (original_dump.width != attacked_dump.width) {
    fail(ErrorKind::Data, "sensitivity_from_dumps: dump widths differ");
  }
  if (original_dump.line_offsets.size() != original_lines.size() ||
      attacked_dump.line_offsets.size() != attacked_lines.size()) {
    fail(ErrorKind::Data, "sensitivity_from_dumps: dump line counts differ from corpora");
  }
  SensitivityReport report;
  double total = 0.0;
  const int width = original_dump.width;
  for (size_t li = 0; li < original_lines.size(); ++li) {
    const TokenizedSequence orig =
        encode_sequence(original_lines[li], vocabs.subword, vocabs.chars, max_positions);
    if (orig.words.empty()) continue;
    const TokenizedSequence att =
        encode_sequence(attacked_lines[li], vocabs.subword, vocabs.chars, max_positions);
    for (size_t w = 0; w < orig.words.size(); ++w) {
      const int orow = original_dump.line_offsets[li] + orig.word_to_first_token[w];
      const int arow = attacked_dump.line_offsets[li] + att.word_to_first_token[w];
      const double cos = cosine_similarity(
          &original_dump.rows.data[static_cast<size_t>(orow) * width],
          &attacked_dump.rows.data[static_cast<size_t>(arow) * width], width);
      report.records.push_back({orig.words[w], att.words[w], cos});
      total += -0.5 * cos + 0.5;
      ++report.word_count;
    }
  }
  report.s = report.word_count > 0 ? total / report.word_count : 0.0;
  return report;
}

double probe_embeddings(const EmbeddingDump& dump, const TaskDataset& dataset,
                        const Vocabs& vocabs, int max_positions,
                        const ProbeHyper& hyper, uint64_t seed) {
  if (dataset.kind != TaskKind::Token) {
    fail(ErrorKind::Usage, "probe_embeddings expects a token task");
  }
  if (dump.line_offsets.size() != dataset.lines.size()) {
    fail(ErrorKind::Data, "probe_embeddings: dump does not match the dataset");
  }
  std::set<std::string> label_set;
  for (const auto& labels : dataset.labels) {
    label_set.insert(labels.begin(), labels.end());
  }
  const std::vector<std::string> names(label_set.begin(), label_set.end());
  const int num_labels = static_cast<int>(names.size());
  const int w = dump.width;

  Rng rng(seed);
  auto init = [&rng](const std::vector<int>& shape) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = rng.truncated_normal(0.02);
    return make_leaf(std::move(t), true);
  };
  auto zeros = [](const std::vector<int>& shape) {
    return make_leaf(Tensor::zeros(shape), true);
  };
  // Probe: bi-directional GRU (hidden = dump width per direction) + linear.
  std::vector<NamedVar> params;
  GruDirectionParams fwd{init({w, w}), init({w, w}), zeros({w}),
                         init({w, w}), init({w, w}), zeros({w}),
                         init({w, w}), init({w, w}), zeros({w})};
  GruDirectionParams bwd{init({w, w}), init({w, w}), zeros({w}),
                         init({w, w}), init({w, w}), zeros({w}),
                         init({w, w}), init({w, w}), zeros({w})};
  Var out_w = init({2 * w, num_labels});
  Var out_b = zeros({num_labels});
  int index = 0;
  for (Var v : {fwd.w_r, fwd.u_r, fwd.b_r, fwd.w_z, fwd.u_z, fwd.b_z, fwd.w_n,
                fwd.u_n, fwd.b_n, bwd.w_r, bwd.u_r, bwd.b_r, bwd.w_z, bwd.u_z,
                bwd.b_z, bwd.w_n, bwd.u_n, bwd.b_n, out_w, out_b}) {
    params.push_back({"probe." + std::to_string(index++), v});
  }

  struct ProbeLine {
    Var features;  // leaf {m, w}
    std::vector<int> first_subword;
    std::vector<int> label_ids;
  };
  std::vector<ProbeLine> lines;
  for (size_t li = 0; li < dataset.lines.size(); ++li) {
    const TokenizedSequence seq =
        encode_sequence(dataset.lines[li], vocabs.subword, vocabs.chars, max_positions);
    ProbeLine line;
    const int m = dump.line_lengths[li];
    Tensor features = Tensor::zeros({m, w});
    std::copy(dump.rows.data.begin() +
                  static_cast<size_t>(dump.line_offsets[li]) * w,
              dump.rows.data.begin() +
                  static_cast<size_t>(dump.line_offsets[li] + m) * w,
              features.data.begin());
    line.features = make_leaf(std::move(features), false);
    line.first_subword = seq.word_to_first_token;
    for (const std::string& label : dataset.labels[li]) {
      auto it = std::lower_bound(names.begin(), names.end(), label);
      line.label_ids.push_back(static_cast<int>(it - names.begin()));
    }
    lines.push_back(std::move(line));
  }

  std::vector<size_t> order(lines.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  size_t eval_count = static_cast<size_t>(
      std::llround(hyper.eval_fraction * static_cast<double>(order.size())));
  eval_count = std::min(std::max<size_t>(eval_count, 1), order.size() - 1);
  const std::vector<size_t> eval_indices(order.end() - eval_count, order.end());
  std::vector<size_t> train_indices(order.begin(), order.end() - eval_count);

  auto line_logits = [&](Graph& g, const ProbeLine& line) {
    Var f = gru_sequence(g, line.features, fwd, false);
    Var b = gru_sequence(g, line.features, bwd, true);
    Var hidden = op::gather_rows(g, op::concat_cols(g, f, b), line.first_subword);
    return op::add(g, op::matmul(g, hidden, out_w), out_b);
  };

  AdamState adam = AdamState::make(params);
  int64_t opt_step = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (size_t i = train_indices.size(); i > 1; --i) {
      std::swap(train_indices[i - 1], train_indices[rng.uniform_index(i)]);
    }
    for (size_t start = 0; start < train_indices.size();
         start += static_cast<size_t>(hyper.batch)) {
      const size_t end =
          std::min(train_indices.size(), start + static_cast<size_t>(hyper.batch));
      for (const NamedVar& p : params) p.var->zero_grad();
      struct Slot {
        Graph graph;
        Var loss;
        int count = 0;
      };
      std::vector<Slot> slots(end - start);
      int64_t total_units = 0;
      for (size_t i = start; i < end; ++i) {
        const ProbeLine& line = lines[train_indices[i]];
        if (line.label_ids.empty()) continue;
        Slot& slot = slots[i - start];
        Var logits = line_logits(slot.graph, line);
        slot.loss =
            op::cross_entropy(slot.graph, logits, line.label_ids, op::Reduction::Sum);
        slot.count = static_cast<int>(line.label_ids.size());
        total_units += slot.count;
      }
      if (total_units == 0) continue;
      for (Slot& slot : slots) {
        if (!slot.loss) continue;
        slot.graph.backward(op::scale(slot.graph, slot.loss, 1.0 / total_units));
      }
      ++opt_step;
      adam_step(params, adam,
                {hyper.lr, hyper.adam.beta1, hyper.adam.beta2, hyper.adam.epsilon},
                opt_step);
    }
  }

  // Held-out macro-F1.
  std::vector<int> gold, predicted;
  for (size_t idx : eval_indices) {
    const ProbeLine& line = lines[idx];
    if (line.label_ids.empty()) continue;
    Graph g;
    Var logits = line_logits(g, line);
    for (size_t r = 0; r < line.label_ids.size(); ++r) {
      gold.push_back(line.label_ids[r]);
      int best = 0;
      for (int c = 1; c < num_labels; ++c) {
        if (logits->value.at(static_cast<int>(r), c) >
            logits->value.at(static_cast<int>(r), best)) {
          best = c;
        }
      }
      predicted.push_back(best);
    }
  }
  if (gold.empty()) return 0.0;
  std::vector<int64_t> tp(num_labels, 0), fp(num_labels, 0), fn(num_labels, 0);
  for (size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] == gold[i]) {
      ++tp[gold[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[gold[i]];
    }
  }
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < num_labels; ++c) {
    if (tp[c] + fn[c] == 0) continue;
    ++classes;
    const double precision =
        tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    const double recall = static_cast<double>(tp[c]) / (tp[c] + fn[c]);
    if (precision + recall > 0.0) sum += 2.0 * precision * recall / (precision + recall);
  }
  return classes > 0 ? sum / classes : 0.0;
}

}  // namespace charfuse
