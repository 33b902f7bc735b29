#pragma once

#include <cstdint>
#include <random>

#include "nimc/so3.hpp"

namespace nimc {

/// Every stochastic component takes one of these by reference; nothing in
/// the library owns a global generator.
using Rng = std::mt19937_64;

inline double gaussian(Rng& rng, double stddev = 1.0) {
  return std::normal_distribution<double>(0.0, stddev)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 gaussian_vec3(Rng& rng, double stddev) {
  const double x = gaussian(rng, stddev);
  const double y = gaussian(rng, stddev);
  const double z = gaussian(rng, stddev);
  return {x, y, z};
}

/// Independent, reproducible stream for (seed, stream index).
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x4e494d43u};
  return Rng(seq);
}

}  // namespace nimc
