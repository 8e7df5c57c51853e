#pragma once

/**
 * Self-contained PRNG (xoshiro256** seeded through splitmix64) plus the
 * few distributions the library needs. The standard <random> engines are
 * avoided on purpose: their distributions differ across standard library
 * implementations, and runs here must be bit-reproducible from a seed.
 *
 * Derived streams: derive_rng(seed, key, index) hashes its inputs into an
 * independent stream, so concurrent callers keyed by (problem id, call
 * index) never contend on shared state.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace evoroute {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be > 0.
  uint64_t below(uint64_t n) {
    // Rejection-free modulo bias is negligible for the n used here, but
    // keep the standard threshold rejection anyway.
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; consumes two uniforms per pair, caches the spare.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  std::array<uint64_t, 4> save_state() const { return state_; }

  void restore_state(const std::array<uint64_t, 4>& s) {
    state_ = s;
    has_spare_ = false;
    spare_ = 0.0;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Independent stream for (seed, key, index); used by the simulator so every
// (problem, call) pair gets its own deterministic randomness.
inline Rng derive_rng(uint64_t seed, std::string_view key, uint64_t index) {
  uint64_t h = fnv1a64(key);
  uint64_t mix = seed ^ (h + 0x9e3779b97f4a7c15ULL + (index << 1) + 1);
  mix = mix * 0xff51afd7ed558ccdULL + index;
  return Rng(mix);
}

}  // namespace evoroute
