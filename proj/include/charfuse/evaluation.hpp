#ifndef CHARFUSE_EVALUATION_HPP
#define CHARFUSE_EVALUATION_HPP

#include <string>
#include <vector>

#include "charfuse/checkpoint.hpp"
#include "charfuse/finetune.hpp"

namespace charfuse {

// Per-line attack records parsed back from an attack_dataset manifest.
struct AttackManifest {
  std::vector<std::vector<AppliedAttack>> by_line;

  static AttackManifest load(const std::string& path, size_t line_count);
};

struct WordCosineRecord {
  std::string word;
  std::string attacked_word;
  double cosine = 0.0;
};

// Eq-style sensitivity: S = mean over words of (-cos/2 + 0.5), each word
// represented by the hidden at its first subword in the last layer.
struct SensitivityReport {
  double s = 0.0;
  int64_t word_count = 0;
  std::vector<WordCosineRecord> records;
};

SensitivityReport sensitivity(const Checkpoint& checkpoint, const Vocabs& vocabs,
                              const std::vector<std::string>& original_lines,
                              const std::vector<std::string>& attacked_lines,
                              const AttackManifest& manifest, int threads = 1);

struct RobustnessReport {
  TaskMetrics original;
  TaskMetrics attacked;
  double drop = 0.0;  // original metric - attacked metric
};

// Same metric on the original and the attacked copy of a task dataset.
RobustnessReport robustness_eval(const Checkpoint& checkpoint, const Vocabs& vocabs,
                                 const TaskDataset& original,
                                 const TaskDataset& attacked);

struct GroupedMetrics {
  double word_group_metric = 0.0;     // single-subword words, per-word accuracy
  double subword_group_metric = 0.0;  // multi-subword words
  int64_t word_group_size = 0;
  int64_t subword_group_size = 0;
};

// Per-word correctness on a token task, split by whether the word tokenizes
// into more than one subword.
GroupedMetrics grouped_eval(const Checkpoint& checkpoint, const Vocabs& vocabs,
                            const TaskDataset& dataset);

enum class EmbeddingSource { Token, Char, Sum, Concat };

EmbeddingSource embedding_source_from_name(const std::string& name);
const char* embedding_source_name(EmbeddingSource source);

// Last-layer per-position embeddings for a whole corpus.
struct EmbeddingDump {
  EmbeddingSource source = EmbeddingSource::Concat;
  int width = 0;
  std::vector<int> line_offsets;  // starting row per line
  std::vector<int> line_lengths;  // m per line
  Tensor rows;                    // {total positions, width}
  std::string corpus_hash;
};

EmbeddingDump extract_embeddings(const Checkpoint& checkpoint, const Vocabs& vocabs,
                                 const std::vector<std::string>& lines,
                                 EmbeddingSource source, int threads = 1);

// Same container format as checkpoints (manifest + float64 payload).
void save_embedding_dump(const EmbeddingDump& dump, const std::string& path);
EmbeddingDump load_embedding_dump(const std::string& path);

// Recomputes the sensitivity score from two embedding dumps; used to
// cross-check the in-process value.
SensitivityReport sensitivity_from_dumps(const EmbeddingDump& original_dump,
                                         const EmbeddingDump& attacked_dump,
                                         const Vocabs& vocabs,
                                         const std::vector<std::string>& original_lines,
                                         const std::vector<std::string>& attacked_lines,
                                         const AttackManifest& manifest,
                                         int max_positions);

struct ProbeHyper {
  double lr = 1e-3;
  int epochs = 5;
  int batch = 16;
  double eval_fraction = 0.2;
  AdamConfig adam;
};

// Feature-based probe: a single bi-directional recurrent layer (hidden width
// = dump width per direction) plus a linear classifier trained on frozen
// dumped embeddings of a token task. Returns the held-out macro-F1.
double probe_embeddings(const EmbeddingDump& dump, const TaskDataset& dataset,
                        const Vocabs& vocabs, int max_positions,
                        const ProbeHyper& hyper, uint64_t seed);

double cosine_similarity(const double* a, const double* b, int n);

}  // namespace charfuse

#endif  // CHARFUSE_EVALUATION_HPP
