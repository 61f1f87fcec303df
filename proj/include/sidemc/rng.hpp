#pragma once
//
// Counter-based keyed random number generation.
//
// Every variate in the library is a pure function of a small tuple of
// 64-bit key words (seed, stream id, family, channel, step, counter, ...).
// This gives:
//   * bit-identical output for identical keys, independent of thread count
//     and evaluation order;
//   * independent streams by construction: distinct stream ids never share
//     counter blocks;
//   * the ability to hold the observed noise family fixed while the latent
//     family is resampled, which the conditional-expectation estimator
//     requires.
//
// The generator is a chained splitmix64-style finalizer over the key words.
// Sequential standard-library engines are deliberately not used: they cannot
// provide order-independent streams, and distributions such as
// std::poisson_distribution are implementation-defined, which would break
// cross-run determinism guarantees.
//

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include "sidemc/common.hpp"

namespace sidemc {

namespace rng {

/// Stream identifiers. Each distinct consumer of randomness owns one id,
/// so keys from different subsystems can never collide.
enum Stream : std::uint64_t {
  wiener_step = 1,     ///< per-step root Wiener increment
  wiener_bridge = 2,   ///< dyadic midpoint refinement inside one step
  event_count = 3,     ///< Poisson event count per measure
  event_time = 4,      ///< uniform order-statistics event times
  event_mark = 5,      ///< mark draws from the normalized restricted measure
  replica_seed = 6,    ///< derivation of per-replica latent seeds
  scenario_seed = 7,   ///< derivation of per-scenario observed seeds
  spec_draw = 8,       ///< randomized test-problem generation
};

/// splitmix64 finalizer: a bijective 64-bit mixer with good avalanche.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hash a key tuple into one 64-bit word by absorbing each word through the
/// mixer (sponge-like chaining; word order matters).
inline constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;  // arbitrary nonzero start
  for (std::uint64_t w : words) h = mix64(h ^ w);
  return h;
}

/// Map hashed bits to a double uniform on (0,1]: 53 mantissa bits, never 0
/// (so logarithms in Box-Muller are safe).
inline constexpr double bits_to_unit(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 1.0) * 0x1p-53;
}

inline double uniform(std::initializer_list<std::uint64_t> words) {
  return bits_to_unit(hash_key(words));
}

/// Standard normal variate for one key: Box-Muller from two derived
/// uniforms (two extra mixer rounds off the key hash).
inline double normal(std::initializer_list<std::uint64_t> words) {
  const std::uint64_t h = hash_key(words);
  const double u1 = bits_to_unit(mix64(h ^ 0x01ULL));
  const double u2 = bits_to_unit(mix64(h ^ 0x02ULL));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

/// Poisson variate with the given mean, consuming a counter stream derived
/// from the key. Knuth's product method, with additive chunking for large
/// means so the running product never underflows.
inline std::uint64_t poisson(double mean, std::initializer_list<std::uint64_t> words) {
  if (!(mean >= 0.0)) {
    throw ConfigurationError("poisson: mean must be nonnegative");
  }
  const std::uint64_t base = hash_key(words);
  std::uint64_t total = 0;
  std::uint64_t ctr = 0;
  double remaining = mean;
  while (remaining > 0.0) {
    const double chunk = remaining > 30.0 ? 30.0 : remaining;
    remaining -= chunk;
    const double limit = std::exp(-chunk);
    double prod = 1.0;
    std::uint64_t n = 0;
    for (;;) {
      prod *= bits_to_unit(mix64(base ^ (0x5bull << 56) ^ ctr++));
      if (prod <= limit) break;
      ++n;
    }
    total += n;
  }
  return total;
}

}  // namespace rng

}  // namespace sidemc
