#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace parex {

// Counter-style hashing RNG. Draws are keyed by stable identifiers
// (seed, cluster id, edge endpoints, ...) instead of consuming a shared
// stream, so results do not depend on iteration order and the restored
// edge set at probability p is a subset of the set at p' > p.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

template <typename... Keys>
std::uint64_t mix_keys(std::uint64_t seed, Keys... keys) {
  std::uint64_t h = splitmix64(seed);
  ((h = hash_combine(h, static_cast<std::uint64_t>(keys))), ...);
  return h;
}

// Uniform draw in [0, 1) from a hashed key.
template <typename... Keys>
double unit_draw(std::uint64_t seed, Keys... keys) {
  return static_cast<double>(mix_keys(seed, keys...) >> 11) * 0x1.0p-53;
}

// Standard normal from a hashed key (Box-Muller, fixed second key).
template <typename... Keys>
double normal_draw(std::uint64_t seed, Keys... keys) {
  const std::uint64_t h = mix_keys(seed, keys...);
  double u1 = static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
  double u2 = static_cast<double>(splitmix64(h + 1) >> 11) * 0x1.0p-53;
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Seeded engine for code that wants a sequential stream.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(mix_keys(seed, stream));
}

}  // namespace parex
