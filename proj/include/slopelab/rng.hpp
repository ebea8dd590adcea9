#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace slopelab::rng {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent child seed from a parent seed and a path of keys,
/// e.g. derive_seed(master, setting, replicate). Distinct paths give
/// unrelated streams, so results never depend on iteration order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (auto key : path) h = mix64(h ^ mix64(key + 0x632be59bd9b4e019ULL));
  return h;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

// Stream tags keep the per-purpose substreams of one seed apart.
inline constexpr std::uint64_t kSubjectStream = 0x5355424aULL;
inline constexpr std::uint64_t kCensorStream = 0x43454e53ULL;
inline constexpr std::uint64_t kRestartStream = 0x52535452ULL;

}  // namespace slopelab::rng
