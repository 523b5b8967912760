#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace seqint {

// splitmix64 step; used both as a mixer for substream keys and to expand a
// seed into engine state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives a 64-bit substream key from a parent key and a component. Chaining
// calls gives hierarchical keys: (seed, rep, method), (seed, step, m, b), ...
inline std::uint64_t derive_key(std::uint64_t parent, std::uint64_t component) {
  std::uint64_t s = parent ^ (component + 0x9E3779B97F4A7C15ULL +
                              (parent << 6) + (parent >> 2));
  return splitmix64(s);
}

inline std::uint64_t derive_key(std::uint64_t parent,
                                std::initializer_list<std::uint64_t> parts) {
  std::uint64_t k = parent;
  for (std::uint64_t p : parts) k = derive_key(k, p);
  return k;
}

// xoshiro256++ with explicit, portable distributions. Results depend only on
// the seed key, never on the platform's <random> implementation or on how
// work is scheduled across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  static Rng from_key(std::uint64_t base,
                      std::initializer_list<std::uint64_t> parts) {
    return Rng(derive_key(base, parts));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, bound) via multiply-shift with rejection.
  std::uint64_t uniform_below(std::uint64_t bound) {
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t threshold = (-bound) % bound;
      while (lo < threshold) {
        m = static_cast<__uint128_t>(next_u64()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace seqint
