#include "charfuse/vocab.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"

namespace charfuse {

namespace {

const char* kSpecialNames[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

std::string join_lines(const std::vector<std::string>& entries) {
  std::ostringstream out;
  for (const std::string& e : entries) out << e << '\n';
  return out.str();
}

// Frequency-ranked selection, ties broken lexicographically.
template <typename Map>
std::vector<std::string> rank_by_frequency(const Map& counts, size_t limit) {
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > limit) ranked.resize(limit);
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (auto& [key, count] : ranked) out.push_back(key);
  return out;
}

}  // namespace

SubwordVocab SubwordVocab::from_entries(std::vector<std::string> entries) {
  if (entries.size() < kNumSpecial) {
    fail(ErrorKind::Data, "subword vocab must start with the five special tokens");
  }
  for (int i = 0; i < kNumSpecial; ++i) {
    if (entries[i] != kSpecialNames[i]) {
      fail(ErrorKind::Data, "subword vocab entry " + std::to_string(i) +
                                " must be " + kSpecialNames[i] + ", got " + entries[i]);
    }
  }
  SubwordVocab vocab;
  vocab.entries = std::move(entries);
  for (size_t i = 0; i < vocab.entries.size(); ++i) {
    if (!vocab.lookup.emplace(vocab.entries[i], static_cast<int>(i)).second) {
      fail(ErrorKind::Data, "duplicate subword vocab entry: " + vocab.entries[i]);
    }
  }
  return vocab;
}

SubwordVocab SubwordVocab::load(const std::string& path) {
  return from_entries(read_lines(path));
}

void SubwordVocab::save(const std::string& path) const {
  write_text_file(path, join_lines(entries));
}

int SubwordVocab::id(const std::string& piece) const {
  auto it = lookup.find(piece);
  return it == lookup.end() ? -1 : it->second;
}

uint64_t SubwordVocab::hash() const { return fnv1a64(join_lines(entries)); }

CharVocab CharVocab::from_entries(std::vector<std::string> entries) {
  if (entries.size() < kNumReserved) {
    fail(ErrorKind::Data, "char vocab must start with the five reserved entries");
  }
  CharVocab vocab;
  vocab.entries = std::move(entries);
  for (size_t i = kNumReserved; i < vocab.entries.size(); ++i) {
    const std::string& e = vocab.entries[i];
    if (e.size() != 1) {
      fail(ErrorKind::Data, "char vocab entry " + std::to_string(i) +
                                " must be a single character, got \"" + e + "\"");
    }
    if (!vocab.lookup.emplace(e[0], static_cast<int>(i)).second) {
      fail(ErrorKind::Data, "duplicate char vocab entry: " + e);
    }
  }
  return vocab;
}

CharVocab CharVocab::load(const std::string& path) {
  return from_entries(read_lines(path));
}

void CharVocab::save(const std::string& path) const {
  write_text_file(path, join_lines(entries));
}

int CharVocab::id(char c) const {
  auto it = lookup.find(c);
  return it == lookup.end() ? kUnk : it->second;
}

uint64_t CharVocab::hash() const { return fnv1a64(join_lines(entries)); }

WordVocab WordVocab::from_entries(std::vector<std::string> entries) {
  if (entries.empty() || entries[0] != "[UNK]") {
    fail(ErrorKind::Data, "word vocab entry 0 must be [UNK]");
  }
  WordVocab vocab;
  vocab.entries = std::move(entries);
  for (size_t i = 0; i < vocab.entries.size(); ++i) {
    if (!vocab.lookup.emplace(vocab.entries[i], static_cast<int>(i)).second) {
      fail(ErrorKind::Data, "duplicate word vocab entry: " + vocab.entries[i]);
    }
  }
  return vocab;
}

WordVocab WordVocab::load(const std::string& path) {
  return from_entries(read_lines(path));
}

void WordVocab::save(const std::string& path) const {
  write_text_file(path, join_lines(entries));
}

int WordVocab::id(const std::string& word) const {
  auto it = lookup.find(word);
  return it == lookup.end() ? kUnk : it->second;
}

uint64_t WordVocab::hash() const { return fnv1a64(join_lines(entries)); }

namespace {

// Merge two adjacent symbols; the right-hand "##" marker disappears.
std::string merge_symbols(const std::string& left, const std::string& right) {
  return left + (right.rfind("##", 0) == 0 ? right.substr(2) : right);
}

}  // namespace

Vocabs build_vocabs(const std::vector<std::string>& corpus_lines,
                    int subword_size, int char_size, int word_size) {
  std::map<std::string, int64_t> word_counts;
  std::map<std::string, int64_t> char_counts;
  for (const std::string& line : corpus_lines) {
    for (const std::string& raw : split_whitespace(line)) {
      const std::string word = to_lower(raw);
      ++word_counts[word];
      for (char c : word) ++char_counts[std::string(1, c)];
    }
  }
  if (word_counts.empty()) fail(ErrorKind::Data, "build_vocabs: empty corpus");

  // Character vocab: reserved entries then frequency-ranked characters.
  if (char_size < CharVocab::kNumReserved) {
    fail(ErrorKind::Usage, "char vocab size must be at least " +
                               std::to_string(CharVocab::kNumReserved));
  }
  std::vector<std::string> char_entries = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (std::string& c :
       rank_by_frequency(char_counts, char_size - CharVocab::kNumReserved)) {
    char_entries.push_back(std::move(c));
  }

  // Word vocab: [UNK] then frequency-ranked words.
  if (word_size < 1) fail(ErrorKind::Usage, "word vocab size must be at least 1");
  std::vector<std::string> word_entries = {"[UNK]"};
  for (std::string& w : rank_by_frequency(word_counts, word_size - 1)) {
    word_entries.push_back(std::move(w));
  }

  // Subword vocab: seed with every character in plain and continuation form
  // so greedy matching can always fall back to single characters.
  std::set<std::string> seen_chars;
  for (const auto& [c, count] : char_counts) seen_chars.insert(c);
  const int seed_count =
      SubwordVocab::kNumSpecial + 2 * static_cast<int>(seen_chars.size());
  if (subword_size < seed_count) {
    fail(ErrorKind::Data, "subword vocab size " + std::to_string(subword_size) +
                              " too small for " + std::to_string(seen_chars.size()) +
                              " corpus characters (need " +
                              std::to_string(seed_count) + ")");
  }
  std::vector<std::string> subword_entries = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                              "[MASK]"};
  for (const std::string& c : seen_chars) subword_entries.push_back(c);
  for (const std::string& c : seen_chars) subword_entries.push_back("##" + c);

  // BPE-style merges over the word frequency table.
  std::vector<std::pair<std::vector<std::string>, int64_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [word, count] : word_counts) {
    std::vector<std::string> symbols;
    for (size_t i = 0; i < word.size(); ++i) {
      symbols.push_back(i == 0 ? std::string(1, word[i])
                               : "##" + std::string(1, word[i]));
    }
    words.emplace_back(std::move(symbols), count);
  }
  std::set<std::string> have(subword_entries.begin(), subword_entries.end());
  while (static_cast<int>(subword_entries.size()) < subword_size) {
    std::map<std::pair<std::string, std::string>, int64_t> pair_counts;
    for (const auto& [symbols, count] : words) {
      for (size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_counts[{symbols[i], symbols[i + 1]}] += count;
      }
    }
    // Highest count wins; the ordered map makes ties lexicographic.
    std::pair<std::string, std::string> best;
    int64_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count && !have.count(merge_symbols(pair.first, pair.second))) {
        best = pair;
        best_count = count;
      }
    }
    if (best_count == 0) break;
    const std::string merged = merge_symbols(best.first, best.second);
    subword_entries.push_back(merged);
    have.insert(merged);
    for (auto& [symbols, count] : words) {
      for (size_t i = 0; i + 1 < symbols.size();) {
        if (symbols[i] == best.first && symbols[i + 1] == best.second) {
          symbols[i] = merged;
          symbols.erase(symbols.begin() + i + 1);
        } else {
          ++i;
        }
      }
    }
  }

  Vocabs vocabs;
  vocabs.subword = SubwordVocab::from_entries(std::move(subword_entries));
  vocabs.chars = CharVocab::from_entries(std::move(char_entries));
  vocabs.words = WordVocab::from_entries(std::move(word_entries));
  return vocabs;
}

}  // namespace charfuse
