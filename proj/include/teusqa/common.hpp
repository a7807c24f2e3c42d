#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace teusqa {

using Complex = std::complex<double>;

// Error taxonomy. Every failure the library reports is one of these.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct SpecError : Error {
  using Error::Error;
};
struct CapacityError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

/// Two-dimensional grid extent (phase encode 1 x phase encode 2).
struct Grid {
  std::size_t n1 = 0;
  std::size_t n2 = 0;

  [[nodiscard]] constexpr std::size_t size() const noexcept { return n1 * n2; }
  [[nodiscard]] constexpr std::size_t index(std::size_t i1, std::size_t i2) const noexcept {
    return i1 * n2 + i2;
  }
  friend constexpr bool operator==(const Grid&, const Grid&) = default;
};

inline std::string to_string(const Grid& g) {
  return std::to_string(g.n1) + "x" + std::to_string(g.n2);
}

inline void require(bool cond, const char* what) {
  if (!cond) throw DomainError(what);
}

}  // namespace teusqa
