#pragma once

#include <cstdint>

namespace crowdlabel {

// Counter-based randomness: every draw is a pure hash of (seed, coordinates),
// so the value of a cell never depends on how many cells were drawn before it
// or on which thread drew it.

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream id from a seed and up to three indices.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

/// Uniform double in [0, 1) addressed by (seed, i, j).
inline double cell_uniform(std::uint64_t seed, std::uint64_t i, std::uint64_t j) {
  return static_cast<double>(derive_seed(seed, i, j) >> 11) * 0x1.0p-53;
}

// Stream salts keeping distinct uses of one user seed independent.
inline constexpr std::uint64_t kSaltLabels = 0x6c61626c73ULL;
inline constexpr std::uint64_t kSaltTruth = 0x7472757468ULL;
inline constexpr std::uint64_t kSaltPool = 0x706f6f6cULL;

}  // namespace crowdlabel
