#pragma once

#include <cstdint>
#include <string_view>

namespace dietgraph {

// Deterministic PRNG stream. Every source of randomness in a run is a named
// stream derived from the single master seed, so two runs with the same seed
// replay the same draws regardless of which subsystems are enabled.
//
// The generator is xoshiro256** seeded through splitmix64; the uniform/normal
// helpers avoid <random> distributions, whose output is not pinned by the
// standard and varies across library implementations.
class RngStream {
 public:
  RngStream(uint64_t master_seed, std::string_view tag);
  explicit RngStream(uint64_t raw_seed);

  uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Integer uniform on [0, n). n must be > 0.
  uint64_t uniform_index(uint64_t n);
  // Standard normal via Box-Muller (one spare cached).
  double normal();
  double normal(double mean, double stddev);
  // Bernoulli with success probability p.
  bool bernoulli(double p);

  // Fisher-Yates shuffle of [first, first + n).
  template <typename T>
  void shuffle(T* first, size_t n) {
    for (size_t i = n; i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_index(i));
      T tmp = first[i - 1];
      first[i - 1] = first[j];
      first[j] = tmp;
    }
  }

 private:
  uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

uint64_t hash_tag(std::string_view tag);
uint64_t splitmix64(uint64_t x);

}  // namespace dietgraph
