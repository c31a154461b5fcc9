// Regenerates the bundled toy datasets under data/toy/ plus the shipped
// qwerty adjacency table and the tokenizer test vocab. Everything is seeded,
// so reruns are byte-identical.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "charfuse/corruption.hpp"
#include "charfuse/io.hpp"
#include "charfuse/rng.hpp"

namespace fs = std::filesystem;
using charfuse::Rng;

namespace {

// Two topic lexicons plus filler; 190 distinct words overall, most of length
// >= 4 so they are attackable.
const std::vector<std::string> kAnimals = {
    "tiger",  "horse",  "eagle",  "shark",  "whale",  "rabbit", "falcon",
    "badger", "weasel", "donkey", "monkey", "turtle", "spider", "salmon",
    "beaver", "ferret", "lizard", "parrot", "pigeon", "python", "walrus",
    "osprey", "marten", "heron",  "moose",  "bison",  "otter",  "crane",
    "raven",  "stork"};

const std::vector<std::string> kTools = {
    "hammer",  "wrench", "chisel", "pliers", "shovel", "ladder", "anvil",
    "blade",   "lathe",  "gauge",  "clamp",  "rivet",  "pulley", "socket",
    "spanner", "trowel", "mallet", "crowbar", "sander", "router", "planer",
    "washer",  "gasket", "piston", "filter", "funnel", "nozzle", "bucket",
    "tongs",   "awl"};

const std::vector<std::string> kFiller = {
    "the",     "a",       "and",    "with",   "near",   "under",  "over",
    "very",    "quite",   "often",  "never",  "always", "small",  "large",
    "quick",   "slow",    "bright", "dark",   "heavy",  "light",  "clean",
    "dirty",   "quiet",   "loud",   "sharp",  "blunt",  "fresh",  "stale",
    "warm",    "cold",    "found",  "lost",   "keeps",  "holds",  "moves",
    "turns",   "walks",   "runs",   "jumps",  "sleeps", "waits",
    "watches", "follows", "leads",  "brings", "takes",  "gives",  "sends",
    "builds",  "breaks",  "fixes",  "opens",  "closes", "lifts",  "drops",
    "pulls",   "pushes",  "rolls",  "slides", "stands", "falls",  "rises",
    "rests",   "stays",   "leaves", "early",  "late",   "today",  "soon",
    "again",   "still",   "almost", "nearly", "barely", "mostly", "partly",
    "fully",   "calm",    "wild",   "tame",   "free",   "busy",   "idle",
    "plain",   "fancy",   "rough",  "smooth", "thick",  "thin",   "wide",
    "narrow",  "deep",    "tall",   "short",  "long",   "round",  "flat",
    "solid",   "hollow",  "gentle", "fierce", "happy",  "tired",  "eager",
    "wary",    "proud",   "humble", "brave",  "timid",  "clever", "simple",
    "field",   "river",   "forest", "meadow", "garden", "valley", "bridge",
    "market",  "corner",  "street", "cabin",  "barn",   "shed",   "yard",
    "bench",   "table",   "window", "door",   "floor",  "roof",   "wall",
    "fence",   "gate",    "path",   "trail",  "road",   "hill",   "stone"};

// Zipf-flavored pick: low ranks come up more often.
const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  const size_t a = rng.uniform_index(pool.size());
  const size_t b = rng.uniform_index(pool.size());
  return pool[std::min(a, b)];
}

std::string make_line(Rng& rng, const std::vector<std::string>& topic,
                      int topic_words, int total_words) {
  std::vector<std::string> words;
  for (int i = 0; i < topic_words; ++i) {
    words.push_back(topic[rng.uniform_index(topic.size())]);
  }
  while (static_cast<int>(words.size()) < total_words) {
    words.push_back(pick(kFiller, rng));
  }
  // Seeded shuffle so topic words sit at random positions.
  for (size_t i = words.size(); i > 1; --i) {
    std::swap(words[i - 1], words[rng.uniform_index(i)]);
  }
  std::string line;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) line += ' ';
    line += words[i];
  }
  return line;
}

void write_pretrain_corpus(const fs::path& dir, Rng& rng) {
  std::ostringstream out;
  for (int i = 0; i < 3000; ++i) {
    const int total = 5 + static_cast<int>(rng.uniform_index(6));  // 5..10 words
    const double topic_draw = rng.uniform();
    if (topic_draw < 0.35) {
      out << make_line(rng, kAnimals, 1 + rng.uniform_index(3), total);
    } else if (topic_draw < 0.70) {
      out << make_line(rng, kTools, 1 + rng.uniform_index(3), total);
    } else {
      out << make_line(rng, kFiller, 0, total);
    }
    out << '\n';
  }
  charfuse::write_text_file((dir / "pretrain.txt").string(), out.str());
}

void write_seqcls(const fs::path& dir, Rng& rng, const std::string& stem, int lines) {
  std::ostringstream text, labels;
  for (int i = 0; i < lines; ++i) {
    const bool animal = rng.uniform() < 0.5;
    const int total = 6 + static_cast<int>(rng.uniform_index(4));  // 6..9 words
    const int topical = 2 + static_cast<int>(rng.uniform_index(2));  // 2..3 words
    text << make_line(rng, animal ? kAnimals : kTools, topical, total) << '\n';
    labels << (animal ? "animal" : "tool") << '\n';
  }
  charfuse::write_text_file((dir / (stem + ".txt")).string(), text.str());
  charfuse::write_text_file((dir / (stem + ".labels")).string(), labels.str());
}

void write_tagging(const fs::path& dir, Rng& rng, const std::string& stem, int lines) {
  std::ostringstream text, labels;
  for (int i = 0; i < lines; ++i) {
    const int total = 5 + static_cast<int>(rng.uniform_index(5));  // 5..9 words
    std::vector<std::string> words;
    for (int w = 0; w < total; ++w) {
      const double draw = rng.uniform();
      if (draw < 0.25) {
        words.push_back(kAnimals[rng.uniform_index(kAnimals.size())]);
      } else if (draw < 0.50) {
        words.push_back(kTools[rng.uniform_index(kTools.size())]);
      } else {
        words.push_back(pick(kFiller, rng));
      }
    }
    for (size_t w = 0; w < words.size(); ++w) {
      if (w) {
        text << ' ';
        labels << ' ';
      }
      text << words[w];
      const bool is_animal =
          std::find(kAnimals.begin(), kAnimals.end(), words[w]) != kAnimals.end();
      const bool is_tool =
          std::find(kTools.begin(), kTools.end(), words[w]) != kTools.end();
      labels << (is_animal ? "ANIM" : is_tool ? "TOOL" : "OTH");
    }
    text << '\n';
    labels << '\n';
  }
  charfuse::write_text_file((dir / (stem + ".txt")).string(), text.str());
  charfuse::write_text_file((dir / (stem + ".labels")).string(), labels.str());
}

// Test vocab reproducing the backhand example: greedy matching gives
// [back, ##hand] for "backhand" and [b, ##ach, ##and] for "bachand".
void write_test_vocab(const fs::path& dir) {
  std::ostringstream out;
  for (const char* e : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) out << e << '\n';
  for (const char* e : {"back", "hand", "ach", "and"}) out << e << '\n';
  for (const char* e : {"##hand", "##ach", "##and"}) out << e << '\n';
  for (char c : std::string("abcdhkn")) out << c << '\n';
  for (char c : std::string("abcdhkn")) out << "##" << c << '\n';
  charfuse::write_text_file((dir / "backhand_vocab.txt").string(), out.str());
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("data");
  fs::create_directories(root / "toy");
  fs::create_directories(root / "testdata");

  charfuse::write_text_file(
      (root / "qwerty_adjacency.txt").string(),
      charfuse::adjacency_table_text(charfuse::default_adjacency_table()));
  write_test_vocab(root / "testdata");

  Rng rng(1234);
  write_pretrain_corpus(root / "toy", rng);
  write_seqcls(root / "toy", rng, "seqcls_train", 400);
  write_seqcls(root / "toy", rng, "seqcls_test", 200);
  write_tagging(root / "toy", rng, "tagging_train", 300);
  write_tagging(root / "toy", rng, "tagging_test", 100);

  std::cout << "wrote toy data under " << root.string() << std::endl;
  return 0;
}
