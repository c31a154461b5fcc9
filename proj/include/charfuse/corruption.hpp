#ifndef CHARFUSE_CORRUPTION_HPP
#define CHARFUSE_CORRUPTION_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "charfuse/rng.hpp"

namespace charfuse {

enum class AttackKind { Drop, Add, Swap, Keyboard };

const char* attack_kind_name(AttackKind kind);
AttackKind attack_kind_from_name(const std::string& name);

// QWERTY row-and-diagonal neighbors, lowercase a-z. The table is also shipped
// as a data file (lines of the form "a:qwsz"); load_adjacency_table parses
// that format and must agree with the built-in default.
using AdjacencyTable = std::array<std::string, 26>;
const AdjacencyTable& default_adjacency_table();
AdjacencyTable load_adjacency_table(const std::string& path);
std::string adjacency_table_text(const AdjacencyTable& table);

struct CorruptionPolicy {
  double rate = 0.15;
  std::vector<AttackKind> kinds = {AttackKind::Drop, AttackKind::Add,
                                   AttackKind::Swap};
  int min_len = 4;

  static CorruptionPolicy pretrain(double rate = 0.15);
  static CorruptionPolicy evaluation(double rate = 1.0);
};

struct AppliedAttack {
  int word_index = 0;
  AttackKind kind = AttackKind::Drop;
  std::string original;
  std::string corrupted;
};

struct NoisySample {
  std::vector<std::string> original_words;
  std::vector<std::string> corrupted_words;
  std::vector<std::optional<AttackKind>> applied;  // per word
  uint64_t seed = 0;

  std::vector<AppliedAttack> attacks() const;
};

// Applies one attack to an internal position of `word` (first and last
// characters are never touched). Throws Policy if the word is shorter than 4
// characters and Degenerate after 16 draws that cannot change the word.
std::string corrupt_word(const std::string& word, AttackKind kind, Rng& rng,
                         const AdjacencyTable& table = default_adjacency_table());

// Each eligible word is independently attacked with probability policy.rate,
// the kind drawn uniformly from policy.kinds. Degenerate words are left
// unchanged. Deterministic for a fixed word list and rng state.
NoisySample corrupt_sequence(const std::vector<std::string>& words,
                             const CorruptionPolicy& policy, Rng& rng,
                             const AdjacencyTable& table = default_adjacency_table());

struct AttackDatasetResult {
  int64_t total_words = 0;
  int64_t eligible_words = 0;
  int64_t modified_words = 0;
  double modified_fraction = 0.0;  // over all words, as reported in manifests
};

// Line-aligned attacked copy of a corpus plus a JSON-lines manifest with one
// record per attacked word and a trailing summary record. Per-line seeds are
// seed ^ line-index, so output does not depend on processing order.
AttackDatasetResult attack_dataset(const std::string& corpus_path,
                                   const std::string& out_corpus_path,
                                   const std::string& out_manifest_path,
                                   const CorruptionPolicy& policy, uint64_t seed,
                                   const AdjacencyTable& table = default_adjacency_table());

}  // namespace charfuse

#endif  // CHARFUSE_CORRUPTION_HPP
