#pragma once

// Synthetic tube phantoms, circular-array coil sensitivities and nearest-neighbour
// downsampling.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "teusqa/encoding.hpp"
#include "teusqa/rng.hpp"

namespace teusqa {

struct Tube {
  double center1 = 0.0;  // voxel coordinates; voxel (i, j) has its centre at (i + 0.5, j + 0.5)
  double center2 = 0.0;
  double radius = 1.0;
  double t1_ms = 1000.0;
  double t2_ms = 100.0;
  Complex m0{1.0, 0.0};
  friend bool operator==(const Tube&, const Tube&) = default;
};

struct PhantomSpec {
  Grid grid{};
  std::vector<Tube> tubes;
  TissueParams background{0.0, 0.0, std::log(1000.0), std::log(70.0)};

  void validate() const {
    if (grid.size() == 0) throw DomainError("phantom grid must be non-empty");
    for (const auto& t : tubes) {
      if (!(t.t1_ms > 0.0) || !(t.t2_ms > 0.0) || !std::isfinite(t.t1_ms) || !std::isfinite(t.t2_ms))
        throw DomainError("tube relaxation times must be positive and finite");
      if (!(t.radius > 0.0)) throw DomainError("tube radius must be positive");
      if (!std::isfinite(t.m0.real()) || !std::isfinite(t.m0.imag()))
        throw DomainError("non-finite tube proton density");
    }
    if (!background.finite()) throw DomainError("non-finite background parameters");
  }
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

/// Relaxation pairs (T1, T2) in ms of the default 3 x 4 tube layout.
inline constexpr std::array<std::pair<double, double>, 12> kDeskTubes = {{
    {200.0, 50.0}, {300.0, 60.0}, {400.0, 80.0}, {500.0, 100.0},
    {600.0, 110.0}, {700.0, 120.0}, {800.0, 140.0}, {900.0, 160.0},
    {1000.0, 200.0}, {1200.0, 250.0}, {1400.0, 300.0}, {1600.0, 400.0},
}};

/// Doped-water fill around the tubes; every voxel then carries signal.
inline TissueParams fluid_background() { return TissueParams::from_relaxation({3.0, 0.0}, 1100.0, 180.0); }

/// 3 rows x 4 columns of tubes filling the field of view. Without fluid the
/// background has zero proton density and prior-mean relaxation times.
inline PhantomSpec desk_phantom(Grid grid, bool fluid = false) {
  PhantomSpec spec;
  spec.grid = grid;
  if (fluid) spec.background = fluid_background();
  constexpr std::size_t rows = 3, cols = 4;
  const double cell1 = static_cast<double>(grid.n1) / rows;
  const double cell2 = static_cast<double>(grid.n2) / cols;
  const double radius = 0.35 * std::min(cell1, cell2);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t t = i * cols + j;
      Tube tube;
      tube.center1 = (static_cast<double>(i) + 0.5) * cell1;
      tube.center2 = (static_cast<double>(j) + 0.5) * cell2;
      tube.radius = radius;
      tube.t1_ms = kDeskTubes[t].first;
      tube.t2_ms = kDeskTubes[t].second;
      tube.m0 = std::polar(7.0, 0.25 * static_cast<double>(t));
      spec.tubes.push_back(tube);
    }
  return spec;
}

inline bool tube_contains(const Tube& t, double c1, double c2) {
  const double d1 = c1 - t.center1, d2 = c2 - t.center2;
  return d1 * d1 + d2 * d2 <= t.radius * t.radius;
}

/// Index pairs of tubes that share at least one voxel; the first listed tube wins there.
inline std::vector<std::pair<std::size_t, std::size_t>> overlapping_tubes(const PhantomSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < spec.tubes.size(); ++a)
    for (std::size_t b = a + 1; b < spec.tubes.size(); ++b) {
      bool shared = false;
      for (std::size_t i = 0; i < spec.grid.n1 && !shared; ++i)
        for (std::size_t j = 0; j < spec.grid.n2 && !shared; ++j) {
          const double c1 = static_cast<double>(i) + 0.5, c2 = static_cast<double>(j) + 0.5;
          shared = tube_contains(spec.tubes[a], c1, c2) && tube_contains(spec.tubes[b], c1, c2);
        }
      if (shared) out.emplace_back(a, b);
    }
  return out;
}

inline ParameterMap make_phantom(const PhantomSpec& spec) {
  spec.validate();
  ParameterMap map(spec.grid, spec.background);
  for (std::size_t i = 0; i < spec.grid.n1; ++i)
    for (std::size_t j = 0; j < spec.grid.n2; ++j) {
      const double c1 = static_cast<double>(i) + 0.5, c2 = static_cast<double>(j) + 0.5;
      for (const auto& t : spec.tubes)
        if (tube_contains(t, c1, c2)) {
          map.at(i, j) = TissueParams::from_relaxation(t.m0, t.t1_ms, t.t2_ms);
          break;
        }
    }
  return map;
}

struct CoilSpec {
  std::size_t coil_count = 4;
  std::uint64_t seed = 0;
  // Gaussian profile width relative to the larger grid extent; infinity gives flat profiles.
  double width = 0.6;
  // Linear phase across the field of view, in cycles.
  double phase_ramp = 0.25;
};

inline CoilMaps make_coils(const CoilSpec& spec, Grid grid) {
  if (spec.coil_count < 1) throw DomainError("coil_count must be >= 1");
  if (grid.size() == 0) throw DomainError("coil grid must be non-empty");
  if (!(spec.width > 0.0)) throw DomainError("coil profile width must be positive");
  CoilMaps coils(spec.coil_count, grid);
  const double extent = static_cast<double>(std::max(grid.n1, grid.n2));
  const double mid1 = static_cast<double>(grid.n1) / 2.0, mid2 = static_cast<double>(grid.n2) / 2.0;
  const double ring = 0.75 * extent;
  const double sigma = spec.width * extent;
  SplitMix64 rng(derive_key(spec.seed, 0xC011));
  const double rotation = 2.0 * std::numbers::pi * rng.uniform();
  for (std::size_t c = 0; c < spec.coil_count; ++c) {
    const double angle = rotation + 2.0 * std::numbers::pi * static_cast<double>(c) /
                                        static_cast<double>(spec.coil_count);
    const double offset = 2.0 * std::numbers::pi * rng.uniform();
    const double p1 = mid1 + ring * std::cos(angle), p2 = mid2 + ring * std::sin(angle);
    for (std::size_t i = 0; i < grid.n1; ++i)
      for (std::size_t j = 0; j < grid.n2; ++j) {
        const double c1 = static_cast<double>(i) + 0.5, c2 = static_cast<double>(j) + 0.5;
        const double d2 = (c1 - p1) * (c1 - p1) + (c2 - p2) * (c2 - p2);
        const double mag = std::isinf(sigma) ? 1.0 : std::exp(-d2 / (2.0 * sigma * sigma));
        const double ramp = 2.0 * std::numbers::pi * spec.phase_ramp *
                            ((c1 - mid1) * std::cos(angle) + (c2 - mid2) * std::sin(angle)) / extent;
        coils.at(c, grid.index(i, j)) = std::polar(mag, offset + ramp);
      }
  }
  double mean_rss = 0.0;
  for (std::size_t x = 0; x < grid.size(); ++x) {
    double ss = 0.0;
    for (std::size_t c = 0; c < spec.coil_count; ++c) ss += std::norm(coils.at(c, x));
    mean_rss += std::sqrt(ss);
  }
  mean_rss /= static_cast<double>(grid.size());
  for (auto& v : coils.values) v /= mean_rss;
  return coils;
}

inline CoilMaps make_coils(std::size_t coil_count, Grid grid, std::uint64_t seed) {
  CoilSpec spec;
  spec.coil_count = coil_count;
  spec.seed = seed;
  return make_coils(spec, grid);
}

namespace detail {
inline std::size_t nearest_source(std::size_t i, std::size_t n_src, std::size_t n_tgt) {
  return ((2 * i + 1) * n_src) / (2 * n_tgt);
}

inline void check_downsample(Grid src, Grid tgt) {
  if (tgt.n1 < 1 || tgt.n2 < 1) throw DomainError("target grid must be non-empty");
  if (tgt.n1 > src.n1 || tgt.n2 > src.n2)
    throw DomainError("downsampling cannot enlarge " + to_string(src) + " to " + to_string(tgt));
}
}  // namespace detail

inline ParameterMap downsample_nearest(const ParameterMap& map, Grid target) {
  detail::check_downsample(map.grid, target);
  ParameterMap out(target, TissueParams{});
  for (std::size_t i = 0; i < target.n1; ++i)
    for (std::size_t j = 0; j < target.n2; ++j)
      out.at(i, j) = map.at(detail::nearest_source(i, map.grid.n1, target.n1),
                            detail::nearest_source(j, map.grid.n2, target.n2));
  return out;
}

inline CoilMaps downsample_nearest(const CoilMaps& coils, Grid target) {
  detail::check_downsample(coils.grid, target);
  CoilMaps out(coils.coil_count, target);
  for (std::size_t c = 0; c < coils.coil_count; ++c)
    for (std::size_t i = 0; i < target.n1; ++i)
      for (std::size_t j = 0; j < target.n2; ++j)
        out.at(c, target.index(i, j)) =
            coils.at(c, coils.grid.index(detail::nearest_source(i, coils.grid.n1, target.n1),
                                         detail::nearest_source(j, coils.grid.n2, target.n2)));
  return out;
}

}  // namespace teusqa
