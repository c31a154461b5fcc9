#ifndef CHARFUSE_IO_HPP
#define CHARFUSE_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace charfuse {

// Whole-file text helpers; both throw Error(Io) with the path on failure.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// One string per line; trailing '\r' stripped, final empty line dropped.
std::vector<std::string> read_lines(const std::string& path);

std::vector<std::string> split_whitespace(const std::string& line);
std::string to_lower(const std::string& text);

// FNV-1a 64-bit, used for vocab/corpus fingerprints in manifests.
uint64_t fnv1a64(const void* bytes, size_t size);
uint64_t fnv1a64(const std::string& text);
std::string hash_hex(uint64_t hash);

}  // namespace charfuse

#endif  // CHARFUSE_IO_HPP
