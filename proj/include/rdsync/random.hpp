#pragma once

// Seedable, platform-independent random source.
//
// Engine: xoshiro256** 1.0 (Blackman & Vigna), state filled from the seed by
// four successive splitmix64 outputs. Doubles are (next() >> 11) * 2^-53, so
// every draw lies in [0, 1) and is bit-identical across compilers.

#include <array>
#include <cstdint>
#include <span>

namespace rdsync {

inline constexpr const char* kPrngId = "xoshiro256**-1.0/splitmix64-seed/substream-v1";

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of the independent substream `index` under `master`.
inline constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) noexcept {
  std::uint64_t s = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  return splitmix64(s);
}

class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Xoshiro256(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

/// Inverse-CDF pick over a cumulative table: smallest k with u < cdf[k].
/// When rounding leaves cdf.back() slightly below u, returns the last index
/// carrying positive mass.
inline std::size_t sample_index(std::span<const double> cdf, double u) noexcept {
  std::size_t last_positive = 0;
  double prev = 0.0;
  for (std::size_t k = 0; k < cdf.size(); ++k) {
    if (u < cdf[k]) return k;
    if (cdf[k] > prev) last_positive = k;
    prev = cdf[k];
  }
  return last_positive;
}

}  // namespace rdsync
