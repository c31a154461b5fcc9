#include "charfuse/tokenize.hpp"

#include <set>
#include <string>

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"

namespace charfuse {

std::vector<std::string> tokenize_word(const std::string& word,
                                       const SubwordVocab& vocab) {
  if (word.empty()) fail(ErrorKind::Usage, "tokenize_word: empty word");
  std::vector<std::string> pieces;
  size_t start = 0;
  while (start < word.size()) {
    size_t end = word.size();
    std::string match;
    while (end > start) {
      std::string candidate = word.substr(start, end - start);
      if (start > 0) candidate = "##" + candidate;
      if (vocab.contains(candidate)) {
        match = std::move(candidate);
        break;
      }
      --end;
    }
    if (match.empty()) return {"[UNK]"};
    pieces.push_back(std::move(match));
    start = end;
  }
  return pieces;
}

TokenizedSequence encode_sequence(const std::string& line, const SubwordVocab& subword,
                                  const CharVocab& chars, int max_positions) {
  TokenizedSequence seq;
  auto push_special = [&seq](int token_id, const std::string& text, int char_id) {
    seq.tokens.push_back(token_id);
    seq.token_texts.push_back(text);
    seq.spans.emplace_back(static_cast<int>(seq.char_ids.size()), 1);
    seq.char_ids.push_back(char_id);
    seq.token_to_word.push_back(-1);
  };

  push_special(SubwordVocab::kCls, "[CLS]", CharVocab::kClsChar);
  for (const std::string& raw : split_whitespace(line)) {
    const std::string word = to_lower(raw);
    seq.words.push_back(word);
    const int word_index = static_cast<int>(seq.words.size()) - 1;
    seq.word_to_first_token.push_back(static_cast<int>(seq.tokens.size()));
    const std::vector<std::string> pieces = tokenize_word(word, subword);
    if (pieces.size() == 1 && pieces[0] == "[UNK]") {
      // The token channel sees [UNK]; the character channel still sees the
      // real characters of the word.
      seq.tokens.push_back(SubwordVocab::kUnk);
      seq.token_texts.push_back("[UNK]");
      seq.spans.emplace_back(static_cast<int>(seq.char_ids.size()),
                             static_cast<int>(word.size()));
      for (char c : word) seq.char_ids.push_back(chars.id(c));
      seq.token_to_word.push_back(word_index);
      continue;
    }
    for (const std::string& piece : pieces) {
      const std::string surface =
          piece.rfind("##", 0) == 0 ? piece.substr(2) : piece;
      seq.tokens.push_back(subword.id(piece));
      seq.token_texts.push_back(piece);
      seq.spans.emplace_back(static_cast<int>(seq.char_ids.size()),
                             static_cast<int>(surface.size()));
      for (char c : surface) seq.char_ids.push_back(chars.id(c));
      seq.token_to_word.push_back(word_index);
    }
  }
  push_special(SubwordVocab::kSep, "[SEP]", CharVocab::kSepChar);

  if (seq.length() > max_positions) {
    fail(ErrorKind::Data, "sequence of " + std::to_string(seq.length()) +
                              " tokens exceeds max positions " +
                              std::to_string(max_positions));
  }
  return seq;
}

FragilityStats fragility_stats(const std::vector<std::string>& corpus_lines,
                               const SubwordVocab& vocab,
                               const CorruptionPolicy& policy, uint64_t seed) {
  FragilityStats stats;
  Rng rng(seed);
  int64_t multi = 0, changed_decomp = 0, changed_count = 0;
  bool any_word = false;
  for (const std::string& line : corpus_lines) {
    for (const std::string& raw : split_whitespace(line)) {
      any_word = true;
      const std::string word = to_lower(raw);
      ++stats.total_words;
      const std::vector<std::string> original = tokenize_word(word, vocab);
      if (original.size() > 1) ++multi;

      if (word.size() < static_cast<size_t>(policy.min_len)) continue;
      if (rng.uniform() >= policy.rate) continue;
      const AttackKind kind = policy.kinds[rng.uniform_index(policy.kinds.size())];
      std::string attacked;
      try {
        attacked = corrupt_word(word, kind, rng);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Degenerate) throw;
        continue;
      }
      ++stats.attacked_words;
      const std::vector<std::string> after = tokenize_word(attacked, vocab);
      const std::set<std::string> before_set(original.begin(), original.end());
      bool shares = false;
      for (const std::string& piece : after) {
        if (before_set.count(piece)) {
          shares = true;
          break;
        }
      }
      if (!shares) ++changed_decomp;
      if (after.size() != original.size()) ++changed_count;
    }
  }
  if (!any_word) fail(ErrorKind::Data, "fragility_stats: empty corpus");
  stats.multi_subword_rate = static_cast<double>(multi) / stats.total_words;
  if (stats.attacked_words > 0) {
    stats.changed_decomposition_rate =
        static_cast<double>(changed_decomp) / stats.attacked_words;
    stats.changed_count_rate =
        static_cast<double>(changed_count) / stats.attacked_words;
  }
  return stats;
}

}  // namespace charfuse
