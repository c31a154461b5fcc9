#include "charfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "charfuse/error.hpp"
#include "charfuse/io.hpp"

namespace charfuse {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'C', 'H', 'F', 'U', 'S', 'E', '0', '1'};

void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(v & 0xFF));
    v >>= 8;
  }
}

uint64_t read_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string payload_bytes(const std::vector<double>& payload) {
  std::string bytes;
  bytes.reserve(payload.size() * 8);
  for (double d : payload) {
    append_u64_le(bytes, std::bit_cast<uint64_t>(d));
  }
  return bytes;
}

}  // namespace

void write_container(const std::string& path, const json& manifest,
                     const std::vector<double>& payload) {
  const std::string body = payload_bytes(payload);
  json full = manifest;
  full["payload_doubles"] = payload.size();
  full["payload_hash"] = hash_hex(fnv1a64(body.data(), body.size()));
  const std::string manifest_text = full.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u64_le(out, manifest_text.size());
  out += manifest_text;
  out += body;
  write_text_file(path, out);
}

Container read_container(const std::string& path) {
  const std::string raw = read_text_file(path);
  if (raw.size() < sizeof(kMagic) + 8 ||
      std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::Data, "not a charfuse container (bad magic): " + path);
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  const uint64_t manifest_len = read_u64_le(bytes + sizeof(kMagic));
  const size_t manifest_start = sizeof(kMagic) + 8;
  if (manifest_start + manifest_len > raw.size()) {
    fail(ErrorKind::Data, "truncated container manifest: " + path);
  }
  Container container;
  try {
    container.manifest =
        nlohmann::json::parse(raw.substr(manifest_start, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, "bad container manifest in " + path + ": " + e.what());
  }
  const size_t body_start = manifest_start + manifest_len;
  const std::string body = raw.substr(body_start);
  const uint64_t count = container.manifest.at("payload_doubles").get<uint64_t>();
  if (body.size() != count * 8) {
    fail(ErrorKind::Data, "payload size mismatch in " + path);
  }
  const std::string expected_hash =
      container.manifest.at("payload_hash").get<std::string>();
  if (hash_hex(fnv1a64(body.data(), body.size())) != expected_hash) {
    fail(ErrorKind::Data, "payload hash mismatch in " + path +
                              " (file corrupted or manifest tampered)");
  }
  container.payload.resize(count);
  const auto* body_bytes = reinterpret_cast<const unsigned char*>(body.data());
  for (uint64_t i = 0; i < count; ++i) {
    container.payload[i] = std::bit_cast<double>(read_u64_le(body_bytes + i * 8));
  }
  return container;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  json manifest;
  manifest["format"] = "charfuse-checkpoint";
  manifest["version"] = 1;
  manifest["kind"] = "checkpoint";
  manifest["config"] = checkpoint.config.to_json();
  manifest["step"] = checkpoint.step;
  manifest["rng_state"] = checkpoint.rng_state;
  manifest["vocab_hashes"] = {{"subword", checkpoint.subword_hash},
                              {"char", checkpoint.char_hash},
                              {"word", checkpoint.word_hash}};
  manifest["labels"] = checkpoint.labels;
  manifest["loss_history"] = checkpoint.loss_history;
  manifest["has_adam"] = checkpoint.adam.has_value();

  std::vector<double> payload;
  json tensors = json::array();
  auto append_tensor = [&](const std::string& name, const Tensor& t) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    entry["offset"] = payload.size();
    tensors.push_back(entry);
    payload.insert(payload.end(), t.data.begin(), t.data.end());
  };
  for (const NamedVar& item : checkpoint.params.items()) {
    append_tensor(item.name, item.var->value);
  }
  if (checkpoint.adam) {
    const auto& items = checkpoint.params.items();
    for (size_t i = 0; i < items.size(); ++i) {
      append_tensor("adam.m." + items[i].name, checkpoint.adam->m[i]);
      append_tensor("adam.v." + items[i].name, checkpoint.adam->v[i]);
    }
  }
  manifest["tensors"] = tensors;
  write_container(path, manifest, payload);
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected) {
  Container container = read_container(path);
  const nlohmann::json& manifest = container.manifest;
  if (manifest.value("format", "") != "charfuse-checkpoint" ||
      manifest.value("kind", "") != "checkpoint") {
    fail(ErrorKind::Data, "container is not a checkpoint: " + path);
  }
  if (manifest.value("version", 0) != 1) {
    fail(ErrorKind::Data, "unsupported checkpoint version in " + path);
  }

  Checkpoint checkpoint;
  checkpoint.config = ModelConfig::from_json(manifest.at("config"));
  checkpoint.config.validate();
  checkpoint.params = Parameters::build_zero(checkpoint.config);
  checkpoint.step = manifest.at("step").get<int64_t>();
  checkpoint.rng_state = manifest.at("rng_state").get<std::string>();
  const auto& hashes = manifest.at("vocab_hashes");
  checkpoint.subword_hash = hashes.at("subword").get<std::string>();
  checkpoint.char_hash = hashes.at("char").get<std::string>();
  checkpoint.word_hash = hashes.at("word").get<std::string>();
  checkpoint.labels = manifest.at("labels").get<std::vector<std::string>>();
  checkpoint.loss_history = manifest.at("loss_history").get<std::vector<double>>();

  if (expected != nullptr && !(checkpoint.config == *expected)) {
    // Spell out which tensors the mismatch touches.
    Parameters wanted = Parameters::build_zero(*expected);
    std::string offending;
    for (const NamedVar& item : wanted.items()) {
      if (!checkpoint.params.has(item.name) ||
          !checkpoint.params.get(item.name)->value.same_shape(item.var->value)) {
        offending += (offending.empty() ? "" : ", ") + item.name;
      }
    }
    for (const NamedVar& item : checkpoint.params.items()) {
      if (!wanted.has(item.name)) {
        offending += (offending.empty() ? "" : ", ") + item.name;
      }
    }
    if (offending.empty()) offending = "(config fields only)";
    fail(ErrorKind::Data,
         "checkpoint config mismatch in " + path + "; offending tensors: " + offending);
  }

  const bool has_adam = manifest.value("has_adam", false);
  if (has_adam) checkpoint.adam = AdamState::make(checkpoint.params.items());

  std::string missing;
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    Tensor* target = nullptr;
    if (name.rfind("adam.m.", 0) == 0 || name.rfind("adam.v.", 0) == 0) {
      if (!checkpoint.adam) {
        fail(ErrorKind::Data, "unexpected optimizer tensor " + name + " in " + path);
      }
      const bool is_m = name[5] == 'm';
      const std::string param_name = name.substr(7);
      const auto& items = checkpoint.params.items();
      for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].name == param_name) {
          target = is_m ? &checkpoint.adam->m[i] : &checkpoint.adam->v[i];
          break;
        }
      }
    } else if (checkpoint.params.has(name)) {
      target = &checkpoint.params.get(name)->value;
    }
    if (target == nullptr) {
      fail(ErrorKind::Data, "checkpoint tensor " + name +
                                " does not belong to the stored config in " + path);
    }
    if (target->shape != shape) {
      fail(ErrorKind::Data, "checkpoint tensor " + name + " has shape " +
                                shape_to_string(shape) + ", expected " +
                                target->shape_str() + " in " + path);
    }
    const uint64_t count = static_cast<uint64_t>(target->numel());
    if (offset + count > container.payload.size()) {
      fail(ErrorKind::Data, "checkpoint tensor " + name + " overruns payload");
    }
    std::copy(container.payload.begin() + offset,
              container.payload.begin() + offset + count, target->data.begin());
  }

  // Every parameter must have been filled.
  for (const NamedVar& item : checkpoint.params.items()) {
    bool found = false;
    for (const auto& entry : manifest.at("tensors")) {
      if (entry.at("name").get<std::string>() == item.name) {
        found = true;
        break;
      }
    }
    if (!found) missing += (missing.empty() ? "" : ", ") + item.name;
  }
  if (!missing.empty()) {
    fail(ErrorKind::Data, "checkpoint missing tensors: " + missing + " in " + path);
  }
  return checkpoint;
}

}  // namespace charfuse
