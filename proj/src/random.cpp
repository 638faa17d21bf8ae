#include "eigenloc/random.hpp"

#include <cmath>

namespace eigenloc {

std::size_t Rng::index(std::size_t n) {
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % range);
}

std::uint32_t Rng::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  double p = std::exp(-mean);
  double cdf = p;
  const double u = uniform();
  std::uint32_t k = 0;
  while (u >= cdf && k < 10000) {
    ++k;
    p *= mean / k;
    cdf += p;
    if (p == 0.0 && cdf < u) break;  // tail exhausted by rounding
  }
  return k;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(master);
  for (std::uint64_t key : path) s = mix_seed(s ^ mix_seed(key + 0x632BE59BD9B4E019ull));
  return s;
}

}  // namespace eigenloc
