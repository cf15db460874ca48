#pragma once

#include <cstdint>

namespace nhtl {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based draws: every value is a pure function of (seed, counter), so
// a realization does not depend on the order in which bonds or sites are
// visited, including under parallel assembly.
inline double counter_uniform01(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t x = mix64(mix64(seed) ^ mix64(counter + 0x243f6a8885a308d3ULL));
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t counter, double lo, double hi) {
  return lo + (hi - lo) * counter_uniform01(seed, counter);
}

}  // namespace nhtl
