#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mptp::rng {

// SplitMix64 finaliser; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) { return mix64(h ^ mix64(v)); }

// Child seed addressed by a tuple of indices, e.g. (master, N, replicate).
template <typename... Ts>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Ts... idx) {
  std::uint64_t h = mix64(seed);
  ((h = combine(h, static_cast<std::uint64_t>(idx))), ...);
  return h;
}

// Stream tags keep initial-condition draws apart from increment draws.
enum class Purpose : std::uint64_t { kInitial = 1, kIncrement = 2, kProbe = 3 };

inline double to_unit_open(std::uint64_t bits) {
  // (0, 1): 53 random bits offset by half an ulp.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal addressed by (seed, purpose, stream, counter, component).
/// Each value is a pure function of its address, so ensembles are independent
/// of evaluation order and a particle's noise does not depend on N.
inline double normal(std::uint64_t seed, Purpose purpose, std::uint64_t stream,
                     std::uint64_t counter, std::uint64_t component) {
  const std::uint64_t key = derive_seed(seed, static_cast<std::uint64_t>(purpose), stream, counter,
                                        component);
  const double u1 = to_unit_open(mix64(key));
  const double u2 = to_unit_open(mix64(key ^ 0xD1B54A32D192ED03ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double uniform(std::uint64_t seed, Purpose purpose, std::uint64_t stream,
                      std::uint64_t counter) {
  return to_unit_open(mix64(derive_seed(seed, static_cast<std::uint64_t>(purpose), stream, counter)));
}

}  // namespace mptp::rng
