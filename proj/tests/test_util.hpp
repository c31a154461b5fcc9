#ifndef CHARFUSE_TESTS_TEST_UTIL_HPP
#define CHARFUSE_TESTS_TEST_UTIL_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "charfuse/rng.hpp"
#include "charfuse/tensor.hpp"
#include "charfuse/vocab.hpp"

namespace testutil {

inline std::filesystem::path data_dir() {
  return std::filesystem::path(CHARFUSE_DATA_DIR);
}

// Fresh unique directory under the system temp root.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("charfuse_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

inline charfuse::Tensor random_tensor(const std::vector<int>& shape,
                                      charfuse::Rng& rng, double scale = 1.0) {
  charfuse::Tensor t = charfuse::Tensor::zeros(shape);
  for (double& v : t.data) v = scale * (rng.uniform() * 2.0 - 1.0);
  return t;
}

// Small deterministic corpus + vocabs shared by model-level tests.
inline const std::vector<std::string>& tiny_corpus() {
  static const std::vector<std::string> corpus = {
      "the cat sat on the mat",  "a dog ran fast",      "the bird flew high",
      "cats and dogs play",      "a fast red cat runs", "the mat was flat",
      "dogs bark at birds",      "the red dog sat"};
  return corpus;
}

inline const charfuse::Vocabs& tiny_vocabs() {
  static const charfuse::Vocabs vocabs = charfuse::build_vocabs(tiny_corpus(), 96, 40, 32);
  return vocabs;
}

}  // namespace testutil

#endif  // CHARFUSE_TESTS_TEST_UTIL_HPP
