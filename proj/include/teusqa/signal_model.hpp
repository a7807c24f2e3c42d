#pragma once

// Inversion-prepared fast-spin-echo signal via extended phase graphs.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "teusqa/common.hpp"

namespace teusqa {

/// Index of each entry of the per-voxel parameter vector.
enum Param : std::size_t { ReM0 = 0, ImM0 = 1, LnT1 = 2, LnT2 = 3 };
inline constexpr std::size_t kParamCount = 4;

using ParamGradient = std::array<Complex, kParamCount>;

struct SequenceSettings {
  std::vector<double> inversion_delays_ms;
  double repetition_time_ms = 0.0;
  std::size_t echo_train_length = 0;
  double echo_spacing_ms = 0.0;
  std::vector<double> refocus_flip_angles_deg;
  double excitation_flip_angle_deg = 90.0;
  // Iterate TR cycles to the steady state; off means a single shot from equilibrium.
  bool steady_state = true;

  [[nodiscard]] std::size_t contrast_count() const noexcept {
    return inversion_delays_ms.size() * echo_train_length;
  }
  [[nodiscard]] std::size_t block_of(std::size_t q) const noexcept { return q / echo_train_length; }
  [[nodiscard]] std::size_t echo_of(std::size_t q) const noexcept { return q % echo_train_length; }

  void validate() const {
    if (echo_train_length < 1) throw DomainError("echo_train_length must be >= 1");
    if (inversion_delays_ms.empty()) throw DomainError("at least one inversion delay is required");
    if (!(repetition_time_ms > 0.0) || !(echo_spacing_ms > 0.0))
      throw DomainError("durations must be strictly positive");
    for (double ti : inversion_delays_ms) {
      if (!(ti > 0.0)) throw DomainError("inversion delays must be strictly positive");
      if (ti + echo_spacing_ms * static_cast<double>(echo_train_length) > repetition_time_ms)
        throw DomainError("inversion delay plus echo train exceeds the repetition time");
    }
    if (refocus_flip_angles_deg.size() != echo_train_length)
      throw DomainError("refocus_flip_angles must have echo_train_length entries");
    for (double fa : refocus_flip_angles_deg)
      if (!std::isfinite(fa)) throw DomainError("non-finite flip angle");
    if (!std::isfinite(excitation_flip_angle_deg)) throw DomainError("non-finite flip angle");
  }
};

/// The acquisition protocol used throughout the evaluation (72 contrasts).
inline SequenceSettings table_one_settings() {
  SequenceSettings s;
  s.inversion_delays_ms = {2400.0, 1100.0, 50.0, 400.0};
  s.repetition_time_ms = 2552.0;
  s.echo_train_length = 18;
  s.echo_spacing_ms = 6.0;
  s.refocus_flip_angles_deg.assign(18, 180.0);
  s.excitation_flip_angle_deg = 90.0;
  return s;
}

struct TissueParams {
  double re_m0 = 0.0;
  double im_m0 = 0.0;
  double ln_t1 = 0.0;
  double ln_t2 = 0.0;

  [[nodiscard]] Complex m0() const noexcept { return {re_m0, im_m0}; }
  [[nodiscard]] double t1() const noexcept { return std::exp(ln_t1); }
  [[nodiscard]] double t2() const noexcept { return std::exp(ln_t2); }
  [[nodiscard]] double operator[](std::size_t p) const noexcept {
    switch (p) {
      case ReM0: return re_m0;
      case ImM0: return im_m0;
      case LnT1: return ln_t1;
      default: return ln_t2;
    }
  }
  double& operator[](std::size_t p) noexcept {
    switch (p) {
      case ReM0: return re_m0;
      case ImM0: return im_m0;
      case LnT1: return ln_t1;
      default: return ln_t2;
    }
  }
  [[nodiscard]] bool finite() const noexcept {
    return std::isfinite(re_m0) && std::isfinite(im_m0) && std::isfinite(ln_t1) &&
           std::isfinite(ln_t2);
  }
  friend bool operator==(const TissueParams&, const TissueParams&) = default;

  static TissueParams from_relaxation(Complex m0, double t1_ms, double t2_ms) {
    return {m0.real(), m0.imag(), std::log(t1_ms), std::log(t2_ms)};
  }
};

namespace detail {

// Right-handed rotation by alpha about the transverse axis at phase phi.
struct Rotation {
  Complex pp, pm, pz, mp, mm, mz, zp, zm;
  double zz = 1.0;

  Rotation(double alpha, double phi) {
    const double c2 = std::cos(alpha / 2.0) * std::cos(alpha / 2.0);
    const double s2 = std::sin(alpha / 2.0) * std::sin(alpha / 2.0);
    const double sa = std::sin(alpha);
    // Snap cos/sin of quarter-turn phases to exact zeros.
    const auto snap = [](double v) { return std::abs(v) < 1e-15 ? 0.0 : v; };
    const Complex e{snap(std::cos(phi)), snap(std::sin(phi))};
    const Complex i{0.0, 1.0};
    pp = c2;
    pm = e * e * s2;
    pz = -i * e * sa;
    mp = std::conj(e * e) * s2;
    mm = c2;
    mz = i * std::conj(e) * sa;
    zp = -0.5 * i * std::conj(e) * sa;
    zm = 0.5 * i * e * sa;
    zz = std::cos(alpha);
    real = pp.imag() == 0.0 && pm.imag() == 0.0 && pz.imag() == 0.0 && mp.imag() == 0.0 &&
           mm.imag() == 0.0 && mz.imag() == 0.0 && zp.imag() == 0.0 && zm.imag() == 0.0;
  }
  // All coefficients real (rotation axis along y); allows real arithmetic.
  bool real = false;
};

// Configuration-state vectors F+_k, F-_k, Z_k for k = 0..K. Only the first
// active_ orders can be non-zero, so loops stop there.
class PhaseGraph {
 public:
  explicit PhaseGraph(std::size_t orders)
      : fp_(orders + 1), fm_(orders + 1), z_(orders + 1) {}

  void reset(double mz) {
    std::fill(fp_.begin(), fp_.end(), Complex{});
    std::fill(fm_.begin(), fm_.end(), Complex{});
    std::fill(z_.begin(), z_.end(), Complex{});
    z_[0] = mz;
    active_ = 1;
  }

  void invert() { z_[0] = -z_[0]; }

  // recovery = false drops the (1 - e1) regrowth term (homogeneous part of the map).
  void relax(double e1, double e2, bool recovery = true) {
    for (std::size_t k = 0; k < active_; ++k) {
      fp_[k] *= e2;
      fm_[k] *= e2;
      z_[k] *= e1;
    }
    if (recovery) z_[0] += 1.0 - e1;
  }

  // Unit positive dephasing: F+ moves up one order, F- moves down.
  void shift() {
    const std::size_t n = fp_.size();
    if (active_ < n) ++active_;
    for (std::size_t k = active_ - 1; k > 0; --k) fp_[k] = fp_[k - 1];
    for (std::size_t k = 0; k + 1 < active_; ++k) fm_[k] = fm_[k + 1];
    fm_[active_ - 1] = Complex{};
    fp_[0] = std::conj(fm_[0]);
  }

  void rotate(const Rotation& r) {
    if (r.real) {
      const double pp = r.pp.real(), pm = r.pm.real(), pz = r.pz.real(), mp = r.mp.real(),
                   mm = r.mm.real(), mz = r.mz.real(), zp = r.zp.real(), zm = r.zm.real();
      for (std::size_t k = 0; k < active_; ++k) {
        const Complex p = fp_[k], m = fm_[k], z = z_[k];
        fp_[k] = pp * p + pm * m + pz * z;
        fm_[k] = mp * p + mm * m + mz * z;
        z_[k] = zp * p + zm * m + r.zz * z;
      }
      return;
    }
    for (std::size_t k = 0; k < active_; ++k) {
      const Complex p = fp_[k], m = fm_[k], z = z_[k];
      fp_[k] = r.pp * p + r.pm * m + r.pz * z;
      fm_[k] = r.mp * p + r.mm * m + r.mz * z;
      z_[k] = r.zp * p + r.zm * m + r.zz * z;
    }
  }

  void rotate(double alpha, double phi) { rotate(Rotation(alpha, phi)); }

  void spoil() {
    const double z0 = z_[0].real();
    reset(z0);
  }

  [[nodiscard]] Complex echo() const { return fp_[0]; }
  [[nodiscard]] double longitudinal() const { return z_[0].real(); }

 private:
  std::vector<Complex> fp_, fm_, z_;
  std::size_t active_ = 1;
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace detail

/// Signal of every contrast for unit equilibrium magnetization.
inline std::vector<Complex> unit_signal(double ln_t1, double ln_t2, const SequenceSettings& s) {
  if (!std::isfinite(ln_t1) || !std::isfinite(ln_t2))
    throw DomainError("non-finite relaxation parameter");
  const double t1 = std::exp(ln_t1);
  const double t2 = std::exp(ln_t2);
  const std::size_t etl = s.echo_train_length;
  const double half = s.echo_spacing_ms / 2.0;
  const double e1_half = std::exp(-half / t1);
  const double e2_half = std::exp(-half / t2);
  const double excitation = detail::deg2rad(s.excitation_flip_angle_deg);
  std::vector<double> refocus(etl);
  for (std::size_t j = 0; j < etl; ++j) refocus[j] = detail::deg2rad(s.refocus_flip_angles_deg[j]);

  constexpr std::size_t kMaxCycles = 50;
  constexpr double kSteadyTol = 1e-9;

  std::vector<Complex> out(s.contrast_count());
  detail::PhaseGraph graph(2 * etl + 1);
  const detail::Rotation excite(excitation, 0.0);
  std::vector<detail::Rotation> refocus_rot;
  refocus_rot.reserve(etl);
  for (double a : refocus) refocus_rot.emplace_back(a, std::numbers::pi / 2.0);
  std::vector<Complex> echoes(etl), echoes_lin(etl);

  for (std::size_t b = 0; b < s.inversion_delays_ms.size(); ++b) {
    const double ti = s.inversion_delays_ms[b];
    const double e1_ti = std::exp(-ti / t1);
    const double rest = s.repetition_time_ms - ti - s.echo_spacing_ms * static_cast<double>(etl);
    const double e1_rest = std::exp(-rest / t1);

    // One TR cycle from pre-inversion magnetization mz_pre. With recovery off it
    // returns the linear part of the (affine) cycle map instead.
    auto shot = [&](double mz_pre, bool recovery, std::vector<Complex>& echo_out) {
      graph.reset(mz_pre);
      graph.invert();
      graph.relax(e1_ti, 1.0, recovery);
      graph.rotate(excite);
      for (std::size_t j = 0; j < etl; ++j) {
        graph.relax(e1_half, e2_half, recovery);
        graph.shift();
        graph.rotate(refocus_rot[j]);
        graph.relax(e1_half, e2_half, recovery);
        graph.shift();
        echo_out[j] = graph.echo();
      }
      graph.spoil();
      return graph.longitudinal() * e1_rest + (recovery ? 1.0 - e1_rest : 0.0);
    };

    if (!s.steady_state) {
      shot(1.0, true, echoes);
    } else {
      // mz -> offset + slope * mz, echoes -> echoes + mz * echoes_lin. The fixed
      // point is the limit of repeated cycles.
      const double offset = shot(0.0, true, echoes);
      const double slope = shot(1.0, false, echoes_lin);
      double mz;
      if (std::abs(slope) < 1.0) {
        mz = offset / (1.0 - slope);
      } else {
        mz = 1.0;
        for (std::size_t cycle = 0; cycle < kMaxCycles; ++cycle) {
          const double next = offset + slope * mz;
          const bool settled = std::abs(next - mz) <= kSteadyTol * std::max(std::abs(mz), std::abs(next));
          mz = next;
          if (settled) break;
        }
      }
      for (std::size_t j = 0; j < etl; ++j) echoes[j] += mz * echoes_lin[j];
    }
    for (std::size_t j = 0; j < etl; ++j) out[b * etl + j] = echoes[j];
  }
  return out;
}

/// f_q(theta) for q = 0..Q-1 in block-major order.
inline std::vector<Complex> simulate(const TissueParams& theta, const SequenceSettings& settings) {
  if (!theta.finite()) throw DomainError("non-finite tissue parameter");
  auto signal = unit_signal(theta.ln_t1, theta.ln_t2, settings);
  const Complex m0 = theta.m0();
  for (auto& v : signal) v *= m0;
  return signal;
}

inline constexpr double kLogParamStep = 1e-4;

/// Q rows of d f_q / d theta. M0 columns are exact; log-relaxation columns use
/// central differences with step kLogParamStep.
inline std::vector<ParamGradient> simulate_jacobian(const TissueParams& theta,
                                                    const SequenceSettings& settings,
                                                    double step = kLogParamStep) {
  if (!theta.finite()) throw DomainError("non-finite tissue parameter");
  const auto unit = unit_signal(theta.ln_t1, theta.ln_t2, settings);
  const auto t1_hi = unit_signal(theta.ln_t1 + step, theta.ln_t2, settings);
  const auto t1_lo = unit_signal(theta.ln_t1 - step, theta.ln_t2, settings);
  const auto t2_hi = unit_signal(theta.ln_t1, theta.ln_t2 + step, settings);
  const auto t2_lo = unit_signal(theta.ln_t1, theta.ln_t2 - step, settings);
  const Complex m0 = theta.m0();
  const Complex i{0.0, 1.0};
  std::vector<ParamGradient> jac(unit.size());
  for (std::size_t q = 0; q < unit.size(); ++q) {
    jac[q][ReM0] = unit[q];
    jac[q][ImM0] = i * unit[q];
    jac[q][LnT1] = m0 * (t1_hi[q] - t1_lo[q]) / (2.0 * step);
    jac[q][LnT2] = m0 * (t2_hi[q] - t2_lo[q]) / (2.0 * step);
  }
  return jac;
}

}  // namespace teusqa
