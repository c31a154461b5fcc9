#include "charfuse/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"
#include "charfuse/parallel.hpp"

namespace charfuse {

namespace {

namespace op = ::charfuse::ops;

int label_id_of(const std::vector<std::string>& names, const std::string& label) {
  auto it = std::lower_bound(names.begin(), names.end(), label);
  if (it == names.end() || *it != label) {
    fail(ErrorKind::Data, "label \"" + label + "\" not in the trained label set");
  }
  return static_cast<int>(it - names.begin());
}

// Macro F1 over classes with gold support.
double macro_f1(const std::vector<int>& gold, const std::vector<int>& predicted,
                int num_labels) {
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
    if (tp[c] + fn[c] == 0) continue;  // no gold support
    ++classes;
    const double precision =
        tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    const double recall = static_cast<double>(tp[c]) / (tp[c] + fn[c]);
    if (precision + recall > 0.0) {
      sum += 2.0 * precision * recall / (precision + recall);
    }
  }
  return classes > 0 ? sum / classes : 0.0;
}

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.cols(); ++c) {
    if (t.at(row, c) > t.at(row, best)) best = c;
  }
  return best;
}

struct PreparedLine {
  TokenizedSequence seq;
  std::vector<int> first_subword;  // token task: per word
  std::vector<int> label_ids;      // per word (token) or single (sequence)
};

PreparedLine prepare_line(const TaskDataset& dataset, size_t index,
                          const std::vector<std::string>& label_names,
                          const Vocabs& vocabs, const ModelConfig& config) {
  PreparedLine out;
  out.seq = encode_sequence(dataset.lines[index], vocabs.subword, vocabs.chars,
                            config.max_positions);
  const auto& labels = dataset.labels[index];
  if (dataset.kind == TaskKind::Token) {
    if (labels.size() != out.seq.words.size()) {
      fail(ErrorKind::Data,
           "line " + std::to_string(index) + ": " + std::to_string(labels.size()) +
               " labels for " + std::to_string(out.seq.words.size()) + " words");
    }
    out.first_subword = out.seq.word_to_first_token;
  } else if (labels.size() != 1) {
    fail(ErrorKind::Data,
         "line " + std::to_string(index) + ": sequence task expects one label");
  }
  for (const std::string& label : labels) {
    out.label_ids.push_back(label_id_of(label_names, label));
  }
  return out;
}

Var line_logits(Graph& g, const PreparedLine& line, const Parameters& params,
                const ModelConfig& config, Rng* dropout_rng) {
  const ForwardResult fwd = forward(g, line.seq, params, config, dropout_rng);
  if (config.head == HeadKind::Token) {
    return token_classify(g, fwd.last, line.first_subword, params, config);
  }
  return sequence_classify(g, fwd.last, params, config);
}

TaskMetrics evaluate_prepared(const std::vector<PreparedLine>& lines,
                              const std::vector<size_t>& indices,
                              const Parameters& params, const ModelConfig& config,
                              int threads = 1) {
  std::vector<std::vector<int>> slots(indices.size());
  parallel_for(threads, indices.size(), [&](size_t i) {
    const PreparedLine& line = lines[indices[i]];
    if (line.label_ids.empty()) return;
    Graph g;
    Var logits = line_logits(g, line, params, config, nullptr);
    for (size_t r = 0; r < line.label_ids.size(); ++r) {
      slots[i].push_back(argmax_row(logits->value, static_cast<int>(r)));
    }
  });
  std::vector<int> gold, predicted;
  for (size_t i = 0; i < indices.size(); ++i) {
    const PreparedLine& line = lines[indices[i]];
    for (size_t r = 0; r < line.label_ids.size(); ++r) {
      gold.push_back(line.label_ids[r]);
      predicted.push_back(slots[i][r]);
    }
  }
  TaskMetrics metrics;
  metrics.units = static_cast<int64_t>(gold.size());
  if (gold.empty()) return metrics;
  int64_t correct = 0;
  for (size_t i = 0; i < gold.size(); ++i) correct += gold[i] == predicted[i];
  metrics.accuracy = static_cast<double>(correct) / gold.size();
  metrics.metric = config.head == HeadKind::Token
                       ? macro_f1(gold, predicted, config.num_labels)
                       : metrics.accuracy;
  return metrics;
}

}  // namespace

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "token") return TaskKind::Token;
  if (name == "sequence") return TaskKind::Sequence;
  fail(ErrorKind::Usage, "unknown task kind: " + name);
}

const char* task_kind_name(TaskKind kind) {
  return kind == TaskKind::Token ? "token" : "sequence";
}

TaskDataset TaskDataset::load(TaskKind kind, const std::string& corpus_path,
                              const std::string& labels_path) {
  return from_lines(kind, read_lines(corpus_path), read_lines(labels_path));
}

TaskDataset TaskDataset::from_lines(TaskKind kind, std::vector<std::string> lines,
                                    const std::vector<std::string>& label_lines) {
  if (lines.size() != label_lines.size()) {
    fail(ErrorKind::Data, "dataset has " + std::to_string(lines.size()) +
                              " lines but " + std::to_string(label_lines.size()) +
                              " label lines");
  }
  TaskDataset dataset;
  dataset.kind = kind;
  dataset.lines = std::move(lines);
  dataset.labels.reserve(label_lines.size());
  for (size_t i = 0; i < label_lines.size(); ++i) {
    std::vector<std::string> labels = split_whitespace(label_lines[i]);
    if (kind == TaskKind::Sequence && labels.size() != 1) {
      fail(ErrorKind::Data, "line " + std::to_string(i) +
                                ": sequence task expects exactly one label");
    }
    if (kind == TaskKind::Token) {
      const size_t words = split_whitespace(dataset.lines[i]).size();
      if (labels.size() != words) {
        fail(ErrorKind::Data, "line " + std::to_string(i) + ": " +
                                  std::to_string(labels.size()) + " labels for " +
                                  std::to_string(words) + " words");
      }
    }
    dataset.labels.push_back(std::move(labels));
  }
  return dataset;
}

FinetuneResult finetune(const TaskDataset& dataset, const Checkpoint& base,
                        const Vocabs& vocabs, const FinetuneHyper& hyper,
                        uint64_t seed) {
  if (dataset.lines.empty()) fail(ErrorKind::Data, "finetune: empty dataset");
  if (hyper.epochs < 0) fail(ErrorKind::Usage, "finetune: epochs must be >= 0");

  // Dense sorted label set.
  std::set<std::string> label_set;
  for (const auto& labels : dataset.labels) {
    label_set.insert(labels.begin(), labels.end());
  }
  FinetuneResult result;
  result.label_names.assign(label_set.begin(), label_set.end());

  ModelConfig config = base.config;
  config.head = dataset.kind == TaskKind::Token ? HeadKind::Token : HeadKind::Sequence;
  config.num_labels = static_cast<int>(result.label_names.size());
  config.validate();

  Rng rng(seed);
  Parameters params = Parameters::build(config, rng);
  for (const NamedVar& item : params.items()) {
    if (base.params.has(item.name)) {
      item.var->value = base.params.get(item.name)->value;
    }
  }

  std::vector<PreparedLine> prepared;
  prepared.reserve(dataset.lines.size());
  for (size_t i = 0; i < dataset.lines.size(); ++i) {
    prepared.push_back(prepare_line(dataset, i, result.label_names, vocabs, config));
  }

  // Seeded shuffle, then the tail becomes the held-out split.
  std::vector<size_t> order(prepared.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  size_t eval_count = static_cast<size_t>(
      std::llround(hyper.eval_fraction * static_cast<double>(order.size())));
  eval_count = std::min(std::max<size_t>(eval_count, 1), order.size() - 1);
  std::vector<size_t> eval_indices(order.end() - eval_count, order.end());
  std::vector<size_t> train_indices(order.begin(), order.end() - eval_count);

  AdamState adam = AdamState::make(params.items());
  Rng* dropout_rng = config.dropout > 0.0 ? &rng : nullptr;

  EpochMetrics initial;
  initial.epoch = 0;
  const TaskMetrics before = evaluate_prepared(prepared, eval_indices, params, config);
  initial.eval_metric = before.metric;
  initial.eval_accuracy = before.accuracy;
  result.epochs.push_back(initial);

  int64_t opt_step = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (size_t i = train_indices.size(); i > 1; --i) {
      std::swap(train_indices[i - 1], train_indices[rng.uniform_index(i)]);
    }
    double epoch_loss = 0.0;
    int64_t epoch_units = 0;
    for (size_t start = 0; start < train_indices.size();
         start += static_cast<size_t>(hyper.batch)) {
      const size_t end =
          std::min(train_indices.size(), start + static_cast<size_t>(hyper.batch));
      params.zero_grads();
      struct Slot {
        Graph graph;
        Var loss;
        int count = 0;
      };
      std::vector<Slot> slots(end - start);
      int64_t total_units = 0;
      for (size_t i = start; i < end; ++i) {
        const PreparedLine& line = prepared[train_indices[i]];
        if (line.label_ids.empty()) continue;
        Slot& slot = slots[i - start];
        Var logits = line_logits(slot.graph, line, params, config, dropout_rng);
        slot.loss = op::cross_entropy(slot.graph, logits, line.label_ids,
                                      op::Reduction::Sum);
        slot.count = static_cast<int>(line.label_ids.size());
        total_units += slot.count;
        if (!std::isfinite(slot.loss->value.data[0])) {
          fail(ErrorKind::Numerical,
               "finetune: non-finite loss on line " +
                   std::to_string(train_indices[i]));
        }
      }
      if (total_units == 0) continue;
      for (Slot& slot : slots) {
        if (!slot.loss) continue;
        epoch_loss += slot.loss->value.data[0];
        slot.graph.backward(op::scale(slot.graph, slot.loss, 1.0 / total_units));
      }
      epoch_units += total_units;
      ++opt_step;
      adam_step(params.items(), adam,
                {hyper.lr, hyper.adam.beta1, hyper.adam.beta2, hyper.adam.epsilon},
                opt_step);
    }
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train_loss = epoch_units > 0 ? epoch_loss / epoch_units : 0.0;
    const TaskMetrics eval = evaluate_prepared(prepared, eval_indices, params, config);
    metrics.eval_metric = eval.metric;
    metrics.eval_accuracy = eval.accuracy;
    result.epochs.push_back(metrics);
  }

  result.checkpoint.config = config;
  result.checkpoint.params = std::move(params);
  result.checkpoint.step = base.step;
  result.checkpoint.rng_state = rng.serialize();
  result.checkpoint.subword_hash = base.subword_hash;
  result.checkpoint.char_hash = base.char_hash;
  result.checkpoint.word_hash = base.word_hash;
  result.checkpoint.labels = result.label_names;
  return result;
}

TaskMetrics evaluate_task(const Checkpoint& checkpoint, const Vocabs& vocabs,
                          const TaskDataset& dataset, int threads) {
  if (checkpoint.config.head == HeadKind::None) {
    fail(ErrorKind::Data, "evaluate_task: checkpoint has no classification head");
  }
  const TaskKind expected = checkpoint.config.head == HeadKind::Token
                                ? TaskKind::Token
                                : TaskKind::Sequence;
  if (dataset.kind != expected) {
    fail(ErrorKind::Data, std::string("evaluate_task: checkpoint head is for ") +
                              task_kind_name(expected) + " tasks, dataset is " +
                              task_kind_name(dataset.kind));
  }
  std::vector<PreparedLine> prepared;
  std::vector<size_t> indices;
  for (size_t i = 0; i < dataset.lines.size(); ++i) {
    prepared.push_back(
        prepare_line(dataset, i, checkpoint.labels, vocabs, checkpoint.config));
    indices.push_back(i);
  }
  return evaluate_prepared(prepared, indices, checkpoint.params, checkpoint.config,
                           threads);
}

std::vector<int> predict_token_labels(const Checkpoint& checkpoint,
                                      const Vocabs& vocabs,
                                      const std::string& line) {
  if (checkpoint.config.head != HeadKind::Token) {
    fail(ErrorKind::Data, "predict_token_labels requires a token-task checkpoint");
  }
  const TokenizedSequence seq = encode_sequence(
      line, vocabs.subword, vocabs.chars, checkpoint.config.max_positions);
  std::vector<int> out;
  if (seq.words.empty()) return out;
  Graph g;
  const ForwardResult fwd = forward(g, seq, checkpoint.params, checkpoint.config);
  Var logits = token_classify(g, fwd.last, seq.word_to_first_token,
                              checkpoint.params, checkpoint.config);
  for (size_t w = 0; w < seq.words.size(); ++w) {
    out.push_back(argmax_row(logits->value, static_cast<int>(w)));
  }
  return out;
}

}  // namespace charfuse
