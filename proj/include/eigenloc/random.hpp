#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace eigenloc {

// Portable random stream: std::mt19937_64 (output sequence fixed by the C++
// standard) with hand-written variate transforms, since the standard library
// distributions are implementation defined. Any reimplementation of the same
// transforms reproduces our streams bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) built from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Poisson variate by sequential inversion. Intended for small means
  // (mean <= 100); larger means are rejected by callers.
  std::uint32_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finaliser, used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x);

// Child seed for a path of integer keys below a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

}  // namespace eigenloc
