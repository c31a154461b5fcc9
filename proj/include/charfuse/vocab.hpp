#ifndef CHARFUSE_VOCAB_HPP
#define CHARFUSE_VOCAB_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace charfuse {

// Subword vocabulary. Continuation pieces carry a "##" prefix; special
// tokens occupy the first five ids.
struct SubwordVocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecial = 5;

  std::vector<std::string> entries;
  std::unordered_map<std::string, int> lookup;

  static SubwordVocab from_entries(std::vector<std::string> entries);
  static SubwordVocab load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(entries.size()); }
  bool contains(const std::string& piece) const { return lookup.count(piece) > 0; }
  // -1 when absent.
  int id(const std::string& piece) const;
  uint64_t hash() const;
};

// Character vocabulary over single bytes. Ids 0..4 are reserved: padding,
// unknown, and one synthetic character per special token so the character
// channel is defined at every position.
struct CharVocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kClsChar = 2;
  static constexpr int kSepChar = 3;
  static constexpr int kMaskChar = 4;
  static constexpr int kNumReserved = 5;

  std::vector<std::string> entries;
  std::unordered_map<char, int> lookup;

  static CharVocab from_entries(std::vector<std::string> entries);
  static CharVocab load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(entries.size()); }
  int id(char c) const;  // kUnk when absent
  uint64_t hash() const;
};

// Whole-word vocabulary, the NLM prediction space. Keys are lowercased;
// [UNK] takes id 0.
struct WordVocab {
  static constexpr int kUnk = 0;

  std::vector<std::string> entries;
  std::unordered_map<std::string, int> lookup;

  static WordVocab from_entries(std::vector<std::string> entries);
  static WordVocab load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(entries.size()); }
  int id(const std::string& word) const;  // kUnk when absent
  uint64_t hash() const;
};

struct Vocabs {
  SubwordVocab subword;
  CharVocab chars;
  WordVocab words;
};

// Builds all three vocabularies from a corpus. Subword entries come from
// iterative highest-frequency pair merges seeded with every corpus character
// in both plain and "##" form; char/word entries are ranked by frequency,
// ties broken lexicographically.
Vocabs build_vocabs(const std::vector<std::string>& corpus_lines,
                    int subword_size, int char_size, int word_size);

}  // namespace charfuse

#endif  // CHARFUSE_VOCAB_HPP
