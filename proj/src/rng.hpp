// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace neurotrails {

inline std::uint64_t splitmix64(std::uint64_t &state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** (Blackman & Vigna). Seeded through splitmix64 so that any
/// 64-bit seed, including 0, yields a valid nonzero state.
class Rng {
public:
  using result_type = std::uint64_t;
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t sm = seed;
    for (auto &w : s_)
      w = splitmix64(sm);
  }

  /// Substream for a (purpose, a, b) triple derived from a master seed.
  static Rng stream(std::uint64_t master, std::uint64_t purpose,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t sm = master;
    std::uint64_t key = splitmix64(sm);
    for (std::uint64_t part : {purpose, a, b}) {
      std::uint64_t mix = key ^ (part + 0x632BE59BD9B4E019ULL);
      key = splitmix64(mix);
    }
    return Rng(key);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1); safe to take log of.
  double uniform_open() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1)
      return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  const State &state() const { return s_; }
  void set_state(const State &s) { s_ = s; }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  State s_{};
};

/// Purpose tags for substreams. Never renumber: checkpoints and frozen test
/// values depend on them.
namespace stream {
inline constexpr std::uint64_t weight_init = 1;
inline constexpr std::uint64_t mask_init = 2;
inline constexpr std::uint64_t topology = 3;
inline constexpr std::uint64_t shuffle = 4;
inline constexpr std::uint64_t synthetic = 5;
inline constexpr std::uint64_t split = 6;
inline constexpr std::uint64_t member = 7;
} // namespace stream

} // namespace neurotrails
