#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace dabm {

/// splitmix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (v + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2)));
}

/// Uniform in the open interval (0, 1) from the top 53 bits.
inline double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/**
 * Counter-based noise. Every draw is a pure function of the stream seed and
 * the coordinates it is keyed by, so a forward pass can be replayed exactly
 * (frozen noise) and perturbed passes see the same draws wherever their
 * coordinates agree (common random numbers).
 */
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream.
  NoiseStream derive(std::uint64_t tag) const { return NoiseStream(hash_combine(mix64(seed_), tag)); }

  /// Key for a coordinate tuple; draws under a key are indexed by `at`.
  std::uint64_t key(std::initializer_list<std::uint64_t> coords) const {
    std::uint64_t h = mix64(seed_ ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t c : coords) h = hash_combine(h, c);
    return h;
  }

  static double uniform_at(std::uint64_t key, std::uint64_t index) {
    return to_unit_open(mix64(key ^ (index * 0xd1b54a32d192ed03ULL)));
  }
  static double gumbel_at(std::uint64_t key, std::uint64_t index) {
    return -std::log(-std::log(uniform_at(key, index)));
  }
  /// Standard exponential; exp(gumbel) == 1 / exponential for the same draw.
  static double exponential_at(std::uint64_t key, std::uint64_t index) {
    return -std::log(uniform_at(key, index));
  }

 private:
  std::uint64_t seed_;
};

/// Stream tags separating the independent noise sources of a simulation.
enum class NoiseTag : std::uint64_t {
  Departures = 1,
  Durations = 2,
  Choices = 3,
  DemandField = 4,
  Policy = 5,
  Replica = 6,
  Optimizer = 7,
};

inline std::uint64_t tag(NoiseTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace dabm
