#pragma once

#include "lorid/tensor.hpp"

#include <cstdint>
#include <random>

namespace lorid {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent per-stream seeds from a base
/// seed so that per-sample work does not depend on evaluation order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

inline Vectord standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vectord v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Tensord standard_normal(const Shape& shape, Rng& rng) {
  return Tensord(shape, standard_normal(static_cast<Eigen::Index>(shape_size(shape)), rng));
}

}  // namespace lorid
