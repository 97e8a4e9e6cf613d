#ifndef SPDELAB_RNG_HPP
#define SPDELAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace spdelab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hash of a (seed, a, b, c) counter tuple. Every draw is a pure function
/// of its key, so streams can be consumed in any order or in parallel.
inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                  std::uint64_t c) {
  std::uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b * 0x13198a2e03707344ULL + 1));
  return splitmix64(h ^ (c * 0xa4093822299f31d0ULL + 2));
}

/// Uniform on (0, 1].
inline double to_unit_open(std::uint64_t x) { return double((x >> 11) + 1) * 0x1.0p-53; }

/// Standard normal for a counter key (Box-Muller on two sub-keys).
inline double keyed_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                           std::uint64_t c) {
  const std::uint64_t h = counter_hash(seed, a, b, c);
  const double u1 = to_unit_open(splitmix64(h ^ 0x1ULL));
  const double u2 = to_unit_open(splitmix64(h ^ 0x2ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double keyed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                            std::uint64_t c) {
  return to_unit_open(counter_hash(seed, a, b, c));
}

} // namespace spdelab

#endif
