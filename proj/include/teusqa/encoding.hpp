#pragma once

// Coil-weighted Fourier forward model over an undersampling pattern.
//
// Kernel: F[k, x] = exp(-2 pi i (x1 k1 / n1 + x2 k2 / n2)) / sqrt(n1 n2).

#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

#include "teusqa/common.hpp"
#include "teusqa/parallel.hpp"
#include "teusqa/patterns.hpp"
#include "teusqa/signal_model.hpp"

namespace teusqa {

struct ParameterMap {
  Grid grid{};
  std::vector<TissueParams> values;  // row-major over (x1, x2)

  ParameterMap() = default;
  ParameterMap(Grid g, TissueParams fill) : grid(g), values(g.size(), fill) {}

  [[nodiscard]] std::size_t parameter_count() const noexcept { return kParamCount * grid.size(); }
  TissueParams& at(std::size_t x1, std::size_t x2) { return values[grid.index(x1, x2)]; }
  [[nodiscard]] const TissueParams& at(std::size_t x1, std::size_t x2) const {
    return values[grid.index(x1, x2)];
  }
  void validate() const {
    if (values.size() != grid.size()) throw ShapeError("parameter map size differs from grid");
    for (const auto& v : values)
      if (!v.finite()) throw DomainError("non-finite parameter map entry");
  }
  friend bool operator==(const ParameterMap&, const ParameterMap&) = default;
};

struct CoilMaps {
  std::size_t coil_count = 0;
  Grid grid{};
  std::vector<Complex> values;  // coil-major: values[c * n + x]

  CoilMaps() = default;
  CoilMaps(std::size_t coils, Grid g, Complex fill = {1.0, 0.0})
      : coil_count(coils), grid(g), values(coils * g.size(), fill) {}

  [[nodiscard]] Complex at(std::size_t c, std::size_t x) const { return values[c * grid.size() + x]; }
  Complex& at(std::size_t c, std::size_t x) { return values[c * grid.size() + x]; }
  void validate() const {
    if (coil_count < 1) throw ShapeError("at least one coil is required");
    if (values.size() != coil_count * grid.size()) throw ShapeError("coil map size mismatch");
    for (auto v : values)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw DomainError("non-finite coil sensitivity");
  }
  friend bool operator==(const CoilMaps&, const CoilMaps&) = default;
};

/// Measurements stacked (q-major, then k in pattern order, then coil).
struct KSpaceData {
  UndersamplingPattern pattern;
  std::size_t coil_count = 0;
  std::vector<Complex> values;

  [[nodiscard]] std::size_t offset(std::size_t q) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < q; ++i) off += pattern.samples[i].size() * coil_count;
    return off;
  }
  [[nodiscard]] std::size_t expected_size() const { return pattern.total_samples() * coil_count; }
  void validate() const {
    if (values.size() != expected_size()) throw ShapeError("k-space value count mismatch");
  }
};

/// Per-axis twiddle tables for the unitary DFT.
class DftPlan {
 public:
  explicit DftPlan(Grid g) : grid_(g), tw1_(g.n1), tw2_(g.n2) {
    for (std::size_t m = 0; m < g.n1; ++m)
      tw1_[m] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(g.n1));
    for (std::size_t m = 0; m < g.n2; ++m)
      tw2_[m] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(g.n2));
    scale_ = 1.0 / std::sqrt(static_cast<double>(g.size()));
  }

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }

  /// F[k, x] for a single pair.
  [[nodiscard]] Complex kernel(std::size_t k1, std::size_t k2, std::size_t x1, std::size_t x2) const {
    return tw1_[(k1 * x1) % grid_.n1] * tw2_[(k2 * x2) % grid_.n2] * scale_;
  }

  /// Forward transform of an image, evaluated at the given positions only.
  void forward(const Complex* image, const std::vector<KPos>& positions, Complex* out,
               std::size_t stride) const {
    const std::size_t n1 = grid_.n1, n2 = grid_.n2;
    std::vector<Complex> partial(n1 * n2);  // [x1][k2]
    for (std::size_t x1 = 0; x1 < n1; ++x1) {
      const Complex* row = image + x1 * n2;
      for (std::size_t k2 = 0; k2 < n2; ++k2) {
        Complex acc{};
        std::size_t idx = 0;
        for (std::size_t x2 = 0; x2 < n2; ++x2) {
          acc += row[x2] * tw2_[idx];
          idx += k2;
          if (idx >= n2) idx %= n2;
        }
        partial[x1 * n2 + k2] = acc;
      }
    }
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const std::size_t k1 = positions[i].k1, k2 = positions[i].k2;
      Complex acc{};
      std::size_t idx = 0;
      for (std::size_t x1 = 0; x1 < n1; ++x1) {
        acc += partial[x1 * n2 + k2] * tw1_[idx];
        idx += k1;
        if (idx >= n1) idx %= n1;
      }
      out[i * stride] = acc * scale_;
    }
  }

  /// Adjoint: image[x] = sum_k conj(F[k, x]) data[k] over the given positions.
  void adjoint(const Complex* data, std::size_t stride, const std::vector<KPos>& positions,
               Complex* image) const {
    const std::size_t n1 = grid_.n1, n2 = grid_.n2;
    std::vector<Complex> partial(n1 * n2, Complex{});  // [k1][x2]
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const std::size_t k1 = positions[i].k1, k2 = positions[i].k2;
      const Complex d = data[i * stride];
      std::size_t idx = 0;
      for (std::size_t x2 = 0; x2 < n2; ++x2) {
        partial[k1 * n2 + x2] += d * std::conj(tw2_[idx]);
        idx += k2;
        if (idx >= n2) idx %= n2;
      }
    }
    for (std::size_t x1 = 0; x1 < n1; ++x1)
      for (std::size_t x2 = 0; x2 < n2; ++x2) {
        Complex acc{};
        std::size_t idx = 0;
        for (std::size_t k1 = 0; k1 < n1; ++k1) {
          acc += partial[k1 * n2 + x2] * std::conj(tw1_[idx]);
          idx += x1;
          if (idx >= n1) idx %= n1;
        }
        image[x1 * n2 + x2] = acc * scale_;
      }
  }

 private:
  Grid grid_;
  std::vector<Complex> tw1_, tw2_;
  double scale_ = 1.0;
};

namespace detail {

using ParamKey = std::tuple<double, double, double, double>;

// Evaluates fn once per distinct parameter vector; phantoms repeat values heavily.
template <typename T, typename Fn>
std::vector<T> per_voxel_unique(const ParameterMap& map, Fn&& fn) {
  std::map<ParamKey, std::size_t> slot_of;
  std::vector<std::size_t> slot(map.values.size());
  std::vector<std::size_t> representative;
  for (std::size_t x = 0; x < map.values.size(); ++x) {
    const auto& v = map.values[x];
    auto [it, inserted] = slot_of.try_emplace({v.re_m0, v.im_m0, v.ln_t1, v.ln_t2}, representative.size());
    if (inserted) representative.push_back(x);
    slot[x] = it->second;
  }
  std::vector<T> unique(representative.size());
  parallel_for(representative.size(),
               [&](std::size_t u) { unique[u] = fn(map.values[representative[u]]); });
  std::vector<T> out(map.values.size());
  for (std::size_t x = 0; x < out.size(); ++x) out[x] = unique[slot[x]];
  return out;
}

inline void check_shapes(const ParameterMap& map, const CoilMaps& coils,
                         const UndersamplingPattern& pattern, const SequenceSettings& settings) {
  if (map.grid != coils.grid || map.grid != pattern.grid)
    throw ShapeError("map, coils and pattern must share a grid (" + to_string(map.grid) + ", " +
                     to_string(coils.grid) + ", " + to_string(pattern.grid) + ")");
  if (pattern.contrasts != settings.contrast_count())
    throw ShapeError("pattern contrast count differs from the sequence");
  if (map.values.size() != map.grid.size()) throw ShapeError("parameter map size differs from grid");
  if (coils.values.size() != coils.coil_count * coils.grid.size())
    throw ShapeError("coil map size mismatch");
}

}  // namespace detail

/// Contrast signals per voxel, voxel-major: out[x][q].
inline std::vector<std::vector<Complex>> voxel_signals(const ParameterMap& map,
                                                       const SequenceSettings& settings) {
  return detail::per_voxel_unique<std::vector<Complex>>(
      map, [&](const TissueParams& t) { return simulate(t, settings); });
}

/// Signal Jacobians per voxel: out[x][q][p].
inline std::vector<std::vector<ParamGradient>> voxel_jacobians(const ParameterMap& map,
                                                               const SequenceSettings& settings) {
  return detail::per_voxel_unique<std::vector<ParamGradient>>(
      map, [&](const TissueParams& t) { return simulate_jacobian(t, settings); });
}

/// Forward model from precomputed contrast images.
inline KSpaceData forward_from_signals(const std::vector<std::vector<Complex>>& signals,
                                       const CoilMaps& coils, const UndersamplingPattern& pattern) {
  const Grid g = pattern.grid;
  const std::size_t n = g.size();
  const std::size_t nc = coils.coil_count;
  KSpaceData data{pattern, nc, std::vector<Complex>(pattern.total_samples() * nc)};
  std::vector<std::size_t> offsets(pattern.contrasts);
  for (std::size_t q = 0; q < pattern.contrasts; ++q) offsets[q] = data.offset(q);
  const DftPlan plan(g);
  parallel_for(pattern.contrasts * nc, [&](std::size_t job) {
    const std::size_t q = job / nc, c = job % nc;
    std::vector<Complex> image(n);
    for (std::size_t x = 0; x < n; ++x) image[x] = coils.at(c, x) * signals[x][q];
    plan.forward(image.data(), pattern.samples[q], data.values.data() + offsets[q] + c, nc);
  });
  return data;
}

/// mu_{q,k,c}(theta) at every sampled position.
inline KSpaceData forward(const ParameterMap& map, const CoilMaps& coils,
                          const UndersamplingPattern& pattern, const SequenceSettings& settings) {
  settings.validate();
  detail::check_shapes(map, coils, pattern, settings);
  return forward_from_signals(voxel_signals(map, settings), coils, pattern);
}

/// d mu_{q,k,c} / d theta_x for one voxel, in KSpaceData order.
inline std::vector<ParamGradient> jacobian_block(const ParameterMap& map, const CoilMaps& coils,
                                                 const UndersamplingPattern& pattern,
                                                 const SequenceSettings& settings,
                                                 std::size_t voxel) {
  settings.validate();
  detail::check_shapes(map, coils, pattern, settings);
  if (voxel >= map.grid.size()) throw ShapeError("voxel index outside the grid");
  const auto g = simulate_jacobian(map.values[voxel], settings);
  const DftPlan plan(map.grid);
  const std::size_t x1 = voxel / map.grid.n2, x2 = voxel % map.grid.n2;
  std::vector<ParamGradient> out;
  out.reserve(pattern.total_samples() * coils.coil_count);
  for (std::size_t q = 0; q < pattern.contrasts; ++q)
    for (auto k : pattern.samples[q]) {
      const Complex f = plan.kernel(k.k1, k.k2, x1, x2);
      for (std::size_t c = 0; c < coils.coil_count; ++c) {
        const Complex w = f * coils.at(c, voxel);
        ParamGradient row;
        for (std::size_t p = 0; p < kParamCount; ++p) row[p] = w * g[q][p];
        out.push_back(row);
      }
    }
  return out;
}

}  // namespace teusqa
