#ifndef CHARFUSE_CHECKPOINT_HPP
#define CHARFUSE_CHECKPOINT_HPP

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "charfuse/adam.hpp"
#include "charfuse/parameters.hpp"

namespace charfuse {

// Everything needed to resume or evaluate a model: parameters, config, the
// training cursor (step, optimizer moments, RNG state), vocab fingerprints,
// and the task label set for fine-tuned heads.
struct Checkpoint {
  ModelConfig config;
  Parameters params;
  int64_t step = 0;
  std::string rng_state;
  std::string subword_hash;
  std::string char_hash;
  std::string word_hash;
  std::vector<std::string> labels;
  std::vector<double> loss_history;
  std::optional<AdamState> adam;
};

// Container layout: 8-byte magic "CHFUSE01", little-endian u64 manifest
// length, manifest JSON, then a flat little-endian float64 payload. The
// manifest records tensor names/shapes/offsets and an FNV-1a payload hash
// verified on load.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);

// If `expected` is given, the stored config must match it exactly; the error
// lists every tensor whose shape would differ.
Checkpoint load_checkpoint(const std::string& path,
                           const ModelConfig* expected = nullptr);

// Shared low-level container reader/writer (also used by embedding dumps).
void write_container(const std::string& path, const nlohmann::ordered_json& manifest,
                     const std::vector<double>& payload);
struct Container {
  nlohmann::json manifest;
  std::vector<double> payload;
};
Container read_container(const std::string& path);

}  // namespace charfuse

#endif  // CHARFUSE_CHECKPOINT_HPP
