#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace balkit {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable seed derivation for independent sub-streams (per round, per mask, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(base ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1), 53-bit resolution.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n) via rejection sampling.
inline int uniform_index(Rng& rng, int n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t rem = std::numeric_limits<std::uint64_t>::max() % bound;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return static_cast<int>(x % bound);
}

inline double sample_gumbel(Rng& rng) {
  const double u = std::max(uniform_unit(rng), 0x1.0p-64);
  return -std::log(-std::log(u));
}

inline double sample_normal(Rng& rng) {
  const double u1 = std::max(uniform_unit(rng), 0x1.0p-64);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Draw a class from a probability row (need not be exactly normalized).
inline int sample_categorical(Rng& rng, const double* probs, int count) {
  double total = 0.0;
  for (int i = 0; i < count; ++i) total += probs[i];
  double u = uniform_unit(rng) * total;
  for (int i = 0; i < count; ++i) {
    u -= probs[i];
    if (u < 0.0) return i;
  }
  return count - 1;
}

}  // namespace balkit
