#ifndef COMHE_NUMKIT_RANDOM_HPP
#define COMHE_NUMKIT_RANDOM_HPP

#include <cstdint>
#include <random>

#include "comhe/numkit/matrix.hpp"

namespace comhe {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; mixes a base seed with a stream index so that
/// per-trial / per-redraw generators are independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  if (rows == 0 || cols == 0) throw InvalidArgument("gaussian_matrix needs rows, cols >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * normal(rng);
  return m;
}

/// Entries i.i.d. N(0, scale^2); identical output for identical seed.
inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                              double scale = 1.0) {
  Rng rng(seed);
  return gaussian_matrix(rows, cols, rng, scale);
}

/// Rows drawn uniformly from the unit sphere.
inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  return rowwise_normalize(gaussian_matrix(rows, cols, rng));
}

inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return random_unit_rows(rows, cols, rng);
}

}  // namespace comhe

#endif  // COMHE_NUMKIT_RANDOM_HPP
