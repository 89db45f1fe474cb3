#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace handdi {

using Rng = std::mt19937_64;

/// Independent RNG streams derived from one run seed. Each purpose draws from
/// its own generator so enabling one stochastic feature never shifts the
/// numbers another one sees.
enum class Stream : std::uint64_t {
  Split = 1,
  Negatives = 2,
  Init = 3,
  Dropout = 4,
  FixedAttention = 5,
  Synthetic = 6,
  GradCheck = 7,
};

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return mix64(mix64(seed ^ mix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace handdi
