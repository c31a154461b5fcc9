#ifndef CHARFUSE_FINETUNE_HPP
#define CHARFUSE_FINETUNE_HPP

#include <string>
#include <vector>

#include "charfuse/checkpoint.hpp"
#include "charfuse/model.hpp"
#include "charfuse/pretrain.hpp"

namespace charfuse {

enum class TaskKind { Token, Sequence };

TaskKind task_kind_from_name(const std::string& name);
const char* task_kind_name(TaskKind kind);

// Line-aligned text + labels. Token tasks carry one whitespace-separated tag
// per word; sequence tasks one label per line.
struct TaskDataset {
  TaskKind kind = TaskKind::Sequence;
  std::vector<std::string> lines;
  std::vector<std::vector<std::string>> labels;  // per line

  static TaskDataset load(TaskKind kind, const std::string& corpus_path,
                          const std::string& labels_path);
  static TaskDataset from_lines(TaskKind kind, std::vector<std::string> lines,
                                const std::vector<std::string>& label_lines);
};

struct FinetuneHyper {
  double lr = 1e-3;
  int epochs = 3;
  int batch = 16;
  double eval_fraction = 0.2;
  AdamConfig adam;
};

struct EpochMetrics {
  int epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  double eval_metric = 0.0;  // accuracy (sequence) or macro-F1 (token)
  double eval_accuracy = 0.0;
};

struct FinetuneResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> epochs;
  std::vector<std::string> label_names;
};

// Joint head + encoder fine-tuning from a pre-trained checkpoint. The label
// set is collected from the dataset (sorted, dense ids); a held-out split is
// drawn once by seeded shuffle and evaluated after each epoch.
FinetuneResult finetune(const TaskDataset& dataset, const Checkpoint& base,
                        const Vocabs& vocabs, const FinetuneHyper& hyper,
                        uint64_t seed);

struct TaskMetrics {
  double metric = 0.0;  // accuracy (sequence) or macro-F1 (token)
  double accuracy = 0.0;
  int64_t units = 0;  // words or sequences evaluated
};

// Evaluates a fine-tuned checkpoint on a dataset with the checkpoint's label
// set. Unknown gold labels are an error.
TaskMetrics evaluate_task(const Checkpoint& checkpoint, const Vocabs& vocabs,
                          const TaskDataset& dataset, int threads = 1);

// Per-word predicted label ids for one line (token task).
std::vector<int> predict_token_labels(const Checkpoint& checkpoint,
                                      const Vocabs& vocabs,
                                      const std::string& line);

}  // namespace charfuse

#endif  // CHARFUSE_FINETUNE_HPP
