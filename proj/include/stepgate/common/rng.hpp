#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "stepgate/common/hash.hpp"

namespace stepgate {

// Counter-style generator: the stream is a pure function of the key, so any
// component can draw reproducibly without carrying mutable RNG state.
inline std::mt19937_64 keyed_engine(std::uint64_t seed, std::uint64_t key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

inline std::mt19937_64 keyed_engine(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  return keyed_engine(seed, Hasher{}.add(label).add(index).digest());
}

inline double uniform01(std::mt19937_64& engine) {
  // 53 random mantissa bits; libstdc++'s generate_canonical is fine too but
  // this keeps the sequence identical across standard libraries.
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

// Beta(a, b) via two gamma draws.
inline double beta_draw(std::mt19937_64& engine, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(engine);
  const double y = gb(engine);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

}  // namespace stepgate
