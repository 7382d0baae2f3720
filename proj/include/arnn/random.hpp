#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace arnn {

// Seeded generator with platform-independent output: the engine is
// mt19937_64 and the distributions are implemented here rather than taken
// from the standard library, whose distributions vary between vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Order-sensitive splitmix64 combination of seed components.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

}  // namespace arnn
