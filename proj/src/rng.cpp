#include "charfuse/rng.hpp"

#include <cmath>
#include <sstream>

#include "charfuse/error.hpp"

namespace charfuse {

uint64_t Rng::uniform_index(uint64_t n) {
  if (n == 0) fail(ErrorKind::Usage, "uniform_index over empty range");
  if (n == 1) return 0;
  // Rejection sampling over a multiple of n to avoid modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal(double mean, double stddev) {
  // Draw u in (0, 1] so log(u) is finite.
  double u = 1.0 - uniform();
  double v = uniform();
  double r = std::sqrt(-2.0 * std::log(u));
  return mean + stddev * r * std::cos(2.0 * M_PI * v);
}

double Rng::truncated_normal(double sigma) {
  for (;;) {
    double x = normal(0.0, sigma);
    if (std::fabs(x) <= 2.0 * sigma) return x;
  }
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::deserialize(const std::string& text) {
  std::istringstream in(text);
  in >> engine_;
  if (in.fail()) fail(ErrorKind::Data, "invalid RNG state string");
}

}  // namespace charfuse
