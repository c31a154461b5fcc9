#ifndef CHARFUSE_TOKENIZE_HPP
#define CHARFUSE_TOKENIZE_HPP

#include <string>
#include <utility>
#include <vector>

#include "charfuse/corruption.hpp"
#include "charfuse/vocab.hpp"

namespace charfuse {

// One encoded input line: subword tokens framed as [CLS] ... [SEP], the flat
// character sequence, and the word/subword/character alignment.
struct TokenizedSequence {
  std::vector<std::string> words;         // lowercased input words
  std::vector<int> tokens;                // subword ids, length m
  std::vector<std::string> token_texts;   // aligned piece strings
  std::vector<int> char_ids;              // length N
  std::vector<std::pair<int, int>> spans; // per token: (start, len) into char_ids
  std::vector<int> word_to_first_token;   // per word
  std::vector<int> token_to_word;         // -1 for [CLS]/[SEP]

  int length() const { return static_cast<int>(tokens.size()); }
  int char_length() const { return static_cast<int>(char_ids.size()); }
};

// Greedy longest-match subword split; continuation pieces carry "##". Falls
// back to the single piece [UNK] when some position cannot be matched.
std::vector<std::string> tokenize_word(const std::string& word,
                                       const SubwordVocab& vocab);

// Whitespace-splits and lowercases `line`, tokenizes each word, and frames
// the result with [CLS]/[SEP]. Special tokens receive one synthetic
// character; [UNK] words keep their real characters so the character channel
// always sees the surface form.
TokenizedSequence encode_sequence(const std::string& line, const SubwordVocab& subword,
                                  const CharVocab& chars, int max_positions);

struct FragilityStats {
  double multi_subword_rate = 0.0;          // over all corpus words
  double changed_decomposition_rate = 0.0;  // over attacked words
  double changed_count_rate = 0.0;          // over attacked words
  int64_t total_words = 0;
  int64_t attacked_words = 0;
};

// Subword fragility under character attacks: how often attacked words
// re-tokenize into disjoint pieces or a different piece count.
FragilityStats fragility_stats(const std::vector<std::string>& corpus_lines,
                               const SubwordVocab& vocab,
                               const CorruptionPolicy& policy, uint64_t seed);

}  // namespace charfuse

#endif  // CHARFUSE_TOKENIZE_HPP
