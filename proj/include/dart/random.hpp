#pragma once

#include <cstdint>
#include <random>

#include "dart/tensor.hpp"

namespace dart {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds from (seed, salt).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Matrix randn(Index rows, Index cols, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  // Fill in row-major order so the draw sequence does not depend on storage order.
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline Index uniform_index(Rng& rng, Index lo, Index hi_inclusive) {
  return std::uniform_int_distribution<Index>(lo, hi_inclusive)(rng);
}

}  // namespace dart
