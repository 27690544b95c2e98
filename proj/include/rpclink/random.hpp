#pragma once

#include <cstdint>
#include <random>

namespace rpclink {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds from a base
/// seed so that results do not depend on evaluation order or worker count.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x51ed270b27a3c3f1ULL));
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

/// Normal(mean, stddev) truncated to [lo, hi] by rejection; falls back to
/// clamping when the admissible interval carries negligible mass.
double truncated_normal(Rng& rng, double mean, double stddev, double lo, double hi);

}  // namespace rpclink
