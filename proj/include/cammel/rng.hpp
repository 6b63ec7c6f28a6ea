#pragma once

#include <cstdint>
#include <random>

#include "cammel/linalg.hpp"

namespace cammel {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for (seed, counter); replicate i of a run always sees
/// the same draws regardless of scheduling.
inline Rng make_stream(std::uint64_t seed, std::uint64_t counter = 0) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(counter + 0x5851f42d4c957f2dULL)));
}

inline Vec randn(Index n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

inline Mat randn(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

inline double randn(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double runif(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace cammel
