#pragma once

// Counter-based random numbers: every draw is a pure function of (key, counter),
// so results never depend on evaluation order or thread count.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace teusqa {

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t child) noexcept {
  return mix64(parent ^ mix64(child + 0x632be59bd9b4e019ULL));
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Sequential generator over a counter; the n-th output equals mix64 of (key + n * gamma).
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t key) noexcept : state_(key) {}

  constexpr std::uint64_t next() noexcept {
    const std::uint64_t out = mix64(state_);
    state_ += 0x9e3779b97f4a7c15ULL;
    return out;
  }

  /// Unbiased integer in [0, bound).
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
    for (;;) {
      const std::uint64_t v = next();
      if (v < limit) return v % bound;
    }
  }

  constexpr double uniform() noexcept { return to_unit(next()); }

 private:
  std::uint64_t state_;
};

/// Pair of independent standard normals at a counter position (Box-Muller).
inline std::pair<double, double> normal_pair(std::uint64_t key, std::uint64_t counter) noexcept {
  const std::uint64_t a = mix64(key ^ mix64(2 * counter));
  const std::uint64_t b = mix64(key ^ mix64(2 * counter + 1));
  const double u1 = 1.0 - to_unit(a);  // (0, 1]
  const double u2 = to_unit(b);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace teusqa
