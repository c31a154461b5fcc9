#include "charfuse/corruption.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"

namespace charfuse {

namespace {

using json = nlohmann::ordered_json;

constexpr int kMaxRetries = 16;

// Row-and-diagonal neighbors on the staggered qwerty/asdf/zxcv layout.
const AdjacencyTable kDefaultAdjacency = {
    "qwsz",    // a
    "ghvn",    // b
    "dfxv",    // c
    "ersfxc",  // d
    "wrsd",    // e
    "rtdgcv",  // f
    "tyfhvb",  // g
    "yugjbn",  // h
    "uojk",    // i
    "uihknm",  // j
    "iojlm",   // k
    "opk",     // l
    "jkn",     // m
    "hjbm",    // n
    "ipkl",    // o
    "ol",      // p
    "wa",      // q
    "etdf",    // r
    "weadzx",  // s
    "ryfg",    // t
    "yihj",    // u
    "fgcb",    // v
    "qeas",    // w
    "sdzc",    // x
    "tugh",    // y
    "asx",     // z
};

}  // namespace

const char* attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::Drop:
      return "drop";
    case AttackKind::Add:
      return "add";
    case AttackKind::Swap:
      return "swap";
    case AttackKind::Keyboard:
      return "keyboard";
  }
  return "unknown";
}

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "drop") return AttackKind::Drop;
  if (name == "add") return AttackKind::Add;
  if (name == "swap") return AttackKind::Swap;
  if (name == "keyboard") return AttackKind::Keyboard;
  fail(ErrorKind::Usage, "unknown attack kind: " + name);
}

const AdjacencyTable& default_adjacency_table() { return kDefaultAdjacency; }

AdjacencyTable load_adjacency_table(const std::string& path) {
  AdjacencyTable table{};
  std::array<bool, 26> seen{};
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    if (line.size() < 2 || line[1] != ':' || line[0] < 'a' || line[0] > 'z') {
      fail(ErrorKind::Data, "bad adjacency line in " + path + ": " + line);
    }
    const int idx = line[0] - 'a';
    if (seen[idx]) fail(ErrorKind::Data, "duplicate adjacency key: " + line);
    seen[idx] = true;
    for (char c : line.substr(2)) {
      if (c < 'a' || c > 'z') {
        fail(ErrorKind::Data, "non a-z neighbor in adjacency line: " + line);
      }
    }
    table[idx] = line.substr(2);
  }
  for (int i = 0; i < 26; ++i) {
    if (!seen[i]) {
      fail(ErrorKind::Data,
           "adjacency table missing key: " + std::string(1, static_cast<char>('a' + i)));
    }
  }
  return table;
}

std::string adjacency_table_text(const AdjacencyTable& table) {
  std::ostringstream out;
  for (int i = 0; i < 26; ++i) {
    out << static_cast<char>('a' + i) << ':' << table[i] << '\n';
  }
  return out.str();
}

CorruptionPolicy CorruptionPolicy::pretrain(double rate) {
  CorruptionPolicy policy;
  policy.rate = rate;
  policy.kinds = {AttackKind::Drop, AttackKind::Add, AttackKind::Swap};
  return policy;
}

CorruptionPolicy CorruptionPolicy::evaluation(double rate) {
  CorruptionPolicy policy;
  policy.rate = rate;
  policy.kinds = {AttackKind::Drop, AttackKind::Add, AttackKind::Swap,
                  AttackKind::Keyboard};
  return policy;
}

std::vector<AppliedAttack> NoisySample::attacks() const {
  std::vector<AppliedAttack> out;
  for (size_t i = 0; i < applied.size(); ++i) {
    if (applied[i]) {
      out.push_back({static_cast<int>(i), *applied[i], original_words[i],
                     corrupted_words[i]});
    }
  }
  return out;
}

std::string corrupt_word(const std::string& word, AttackKind kind, Rng& rng,
                         const AdjacencyTable& table) {
  const size_t len = word.size();
  if (len < 4) {
    fail(ErrorKind::Policy,
         "corrupt_word: word shorter than 4 characters: \"" + word + "\"");
  }
  // Internal positions are 1..len-2; first and last characters stay put.
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    std::string out = word;
    switch (kind) {
      case AttackKind::Drop: {
        const size_t pos = 1 + rng.uniform_index(len - 2);
        out.erase(pos, 1);
        break;
      }
      case AttackKind::Add: {
        const size_t boundary = 1 + rng.uniform_index(len - 1);
        const char c = static_cast<char>('a' + rng.uniform_index(26));
        out.insert(out.begin() + boundary, c);
        break;
      }
      case AttackKind::Swap: {
        const size_t pos = 1 + rng.uniform_index(len - 3);
        std::swap(out[pos], out[pos + 1]);
        break;
      }
      case AttackKind::Keyboard: {
        const size_t pos = 1 + rng.uniform_index(len - 2);
        const char c = out[pos];
        if (c < 'a' || c > 'z') break;  // retry; only a-z keys have neighbors
        const std::string& neighbors = table[c - 'a'];
        if (neighbors.empty()) break;
        out[pos] = neighbors[rng.uniform_index(neighbors.size())];
        break;
      }
    }
    if (out != word) return out;
  }
  fail(ErrorKind::Degenerate, "corrupt_word: no changing draw after " +
                                  std::to_string(kMaxRetries) +
                                  " attempts on \"" + word + "\"");
}

NoisySample corrupt_sequence(const std::vector<std::string>& words,
                             const CorruptionPolicy& policy, Rng& rng,
                             const AdjacencyTable& table) {
  if (policy.rate < 0.0 || policy.rate > 1.0) {
    fail(ErrorKind::Usage, "corruption rate must be in [0,1]");
  }
  if (policy.kinds.empty()) {
    fail(ErrorKind::Usage, "corruption policy has no attack kinds");
  }
  NoisySample sample;
  sample.original_words = words;
  sample.corrupted_words = words;
  sample.applied.assign(words.size(), std::nullopt);
  for (size_t i = 0; i < words.size(); ++i) {
    if (words[i].size() < static_cast<size_t>(policy.min_len)) continue;
    if (rng.uniform() >= policy.rate) continue;
    const AttackKind kind = policy.kinds[rng.uniform_index(policy.kinds.size())];
    try {
      sample.corrupted_words[i] = corrupt_word(words[i], kind, rng, table);
      sample.applied[i] = kind;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate) throw;
      // Words like "aaaa" under Swap cannot change; leave them verbatim.
    }
  }
  return sample;
}

AttackDatasetResult attack_dataset(const std::string& corpus_path,
                                   const std::string& out_corpus_path,
                                   const std::string& out_manifest_path,
                                   const CorruptionPolicy& policy, uint64_t seed,
                                   const AdjacencyTable& table) {
  const std::vector<std::string> lines = read_lines(corpus_path);
  std::ostringstream corpus_out;
  std::ostringstream manifest_out;
  AttackDatasetResult result;
  for (size_t li = 0; li < lines.size(); ++li) {
    const std::vector<std::string> words = split_whitespace(lines[li]);
    Rng line_rng(derive_seed(seed, li));
    const NoisySample sample = corrupt_sequence(words, policy, line_rng, table);
    for (size_t w = 0; w < words.size(); ++w) {
      if (w) corpus_out << ' ';
      corpus_out << sample.corrupted_words[w];
    }
    corpus_out << '\n';
    result.total_words += static_cast<int64_t>(words.size());
    for (const std::string& word : words) {
      if (word.size() >= static_cast<size_t>(policy.min_len)) ++result.eligible_words;
    }
    for (const AppliedAttack& attack : sample.attacks()) {
      ++result.modified_words;
      json record;
      record["line"] = li;
      record["word_index"] = attack.word_index;
      record["kind"] = attack_kind_name(attack.kind);
      record["original"] = attack.original;
      record["corrupted"] = attack.corrupted;
      manifest_out << record.dump() << '\n';
    }
  }
  result.modified_fraction =
      result.total_words > 0
          ? static_cast<double>(result.modified_words) / result.total_words
          : 0.0;
  json summary;
  summary["summary"] = true;
  summary["seed"] = seed;
  summary["lines"] = lines.size();
  summary["total_words"] = result.total_words;
  summary["eligible_words"] = result.eligible_words;
  summary["modified_words"] = result.modified_words;
  summary["modified_fraction"] = result.modified_fraction;
  manifest_out << summary.dump() << '\n';
  write_text_file(out_corpus_path, corpus_out.str());
  write_text_file(out_manifest_path, manifest_out.str());
  return result;
}

}  // namespace charfuse
