#ifndef CHARFUSE_RNG_HPP
#define CHARFUSE_RNG_HPP

#include <cstdint>
#include <random>
#include <string>

namespace charfuse {

// Deterministic RNG. All distributions are implemented by hand on top of
// std::mt19937_64 (whose sequence is pinned by the standard) so that seeded
// runs are byte-identical across compilers and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n);

  // Box-Muller, no cached spare (keeps the engine the whole serializable
  // state).
  double normal(double mean, double stddev);

  // Normal(0, sigma) resampled until |x| <= 2 sigma.
  double truncated_normal(double sigma);

  std::string serialize() const;
  void deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

// Per-line / per-example derived seed for order-independent parallel work.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
  return seed ^ index;
}

}  // namespace charfuse

#endif  // CHARFUSE_RNG_HPP
