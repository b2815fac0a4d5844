#pragma once

#include <cstddef>
#include <cstdint>

namespace capstext {

// Deterministic splitmix64 generator. Streams are identical across platforms
// and compilers for a fixed seed, which the reproducibility guarantees rely on.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n).
  size_t next_below(size_t n) { return static_cast<size_t>(next_unit() * static_cast<double>(n)); }

 private:
  uint64_t state_;
};

}  // namespace capstext
