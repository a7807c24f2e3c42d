#pragma once

// Fisher information, Gaussian-prior posterior covariance and the time-efficiency
// metric eta_p = 1 / (CV_p^2 T).

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "teusqa/common.hpp"
#include "teusqa/encoding.hpp"
#include "teusqa/parallel.hpp"

namespace teusqa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct PriorSpec {
  std::array<double, kParamCount> mean{};
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();

  /// Inverse covariance; throws when the covariance is not SPD.
  [[nodiscard]] Eigen::Matrix4d precision() const {
    if (!covariance.isApprox(covariance.transpose(), 1e-12))
      throw DomainError("prior covariance is not symmetric");
    Eigen::LLT<Eigen::Matrix4d> llt(covariance);
    if (llt.info() != Eigen::Success) throw DomainError("prior covariance is not positive definite");
    return llt.solve(Eigen::Matrix4d::Identity());
  }
  [[nodiscard]] TissueParams mean_params() const { return {mean[0], mean[1], mean[2], mean[3]}; }
};

/// Weak prior: M0 ~ N(0, 20^2) per component, T1 centred at 1000 ms (one decade),
/// T2 centred at 70 ms (factor 7).
inline PriorSpec table_one_prior() {
  PriorSpec p;
  p.mean = {0.0, 0.0, std::log(1000.0), std::log(70.0)};
  p.covariance.setZero();
  p.covariance(0, 0) = 400.0;
  p.covariance(1, 1) = 400.0;
  p.covariance(2, 2) = std::log(10.0) * std::log(10.0);
  p.covariance(3, 3) = std::log(7.0) * std::log(7.0);
  return p;
}

struct FisherMatrix {
  std::size_t dimension = 0;
  Matrix info;
  double noise_sigma = 1.0;
  double compensation = 1.0;
};

struct FisherOptions {
  // Symmetry is exact by construction; this adds the PSD check (one Cholesky).
  bool verify_psd = true;
};

/// |Omega^k| / |Omega^{k,D}| for a downsized analysis.
inline double compensation_factor(Grid full, Grid downsized) {
  if (downsized.size() == 0 || downsized.size() > full.size())
    throw DomainError("downsized grid must be non-empty and not larger than the full grid");
  return static_cast<double>(full.size()) / static_cast<double>(downsized.size());
}

/// Noise level of the full acquisition expressed per unitary k-space sample of a
/// smaller analysis grid. Pair with compensation_factor().
inline double sigma_on_grid(double sigma_full, Grid full, Grid downsized) {
  return sigma_full * std::sqrt(compensation_factor(full, downsized));
}

namespace detail {

// Kernel of the restricted Gram operator: m_q(d) = (1/n) sum_{k in Omega_q} e^{2 pi i k.d / n}.
struct SamplingKernel {
  std::size_t contrasts = 0;
  // per displacement d: nonzero (q, m_q(d)) pairs, ascending q
  std::vector<std::vector<std::pair<std::uint32_t, Complex>>> entries;
};

inline SamplingKernel sampling_kernel(const UndersamplingPattern& pattern) {
  const Grid g = pattern.grid;
  const std::size_t n = g.size();
  const DftPlan plan(g);
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<Complex> kernel(pattern.contrasts * n);  // [q][d]
  parallel_for(pattern.contrasts, [&](std::size_t q) {
    const auto& pos = pattern.samples[q];
    std::vector<Complex> ones(pos.size(), Complex{1.0, 0.0});
    plan.adjoint(ones.data(), 1, pos, kernel.data() + q * n);
    for (std::size_t d = 0; d < n; ++d) kernel[q * n + d] *= inv_sqrt_n;
  });
  SamplingKernel out;
  out.contrasts = pattern.contrasts;
  out.entries.resize(n);
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t q = 0; q < pattern.contrasts; ++q) {
      const double scale = static_cast<double>(pattern.samples[q].size()) / static_cast<double>(n);
      const Complex m = kernel[q * n + d];
      if (std::abs(m) > 1e-13 * std::max(scale, 1e-300))
        out.entries[d].emplace_back(static_cast<std::uint32_t>(q), m);
    }
  return out;
}

}  // namespace detail

/// (compensation / sigma^2) Re(J^H J) from per-voxel signal Jacobians jac[x][q][p].
/// The kernel depends on the pattern only; callers iterating on one pattern pass it in.
inline Matrix fisher_from_jacobians(const std::vector<std::vector<ParamGradient>>& jac,
                                    const CoilMaps& coils, const UndersamplingPattern& pattern,
                                    const detail::SamplingKernel& kernel, double sigma,
                                    double compensation = 1.0) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("noise sigma must be positive");
  if (!(compensation > 0.0)) throw DomainError("compensation must be positive");
  const Grid g = pattern.grid;
  const std::size_t n = g.size();
  const std::size_t nq = pattern.contrasts;
  const std::size_t nc = coils.coil_count;
  if (kernel.entries.size() != n || kernel.contrasts != nq)
    throw ShapeError("sampling kernel does not belong to this pattern");

  // flat [x][q][p]
  std::vector<Complex> gflat(n * nq * kParamCount);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t q = 0; q < nq; ++q)
      for (std::size_t p = 0; p < kParamCount; ++p)
        gflat[(x * nq + q) * kParamCount + p] = jac[x][q][p];

  const double scale = compensation / (sigma * sigma);
  const std::size_t dim = kParamCount * n;
  Matrix info = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));

  parallel_for(n, [&](std::size_t x) {
    const std::size_t x1 = x / g.n2, x2 = x % g.n2;
    for (std::size_t y = x; y < n; ++y) {
      const std::size_t y1 = y / g.n2, y2 = y % g.n2;
      const std::size_t d = ((x1 + g.n1 - y1) % g.n1) * g.n2 + (x2 + g.n2 - y2) % g.n2;
      Complex coil{};
      for (std::size_t c = 0; c < nc; ++c) coil += std::conj(coils.at(c, x)) * coils.at(c, y);
      std::array<Complex, kParamCount * kParamCount> acc{};
      for (const auto& [q, m] : kernel.entries[d]) {
        const Complex* gx = &gflat[(x * nq + q) * kParamCount];
        const Complex* gy = &gflat[(y * nq + q) * kParamCount];
        for (std::size_t p = 0; p < kParamCount; ++p) {
          const Complex a = std::conj(gx[p]) * m;
          for (std::size_t r = 0; r < kParamCount; ++r) acc[p * kParamCount + r] += a * gy[r];
        }
      }
      for (std::size_t p = 0; p < kParamCount; ++p)
        for (std::size_t r = 0; r < kParamCount; ++r)
          info(static_cast<Eigen::Index>(x * kParamCount + p),
               static_cast<Eigen::Index>(y * kParamCount + r)) =
              scale * (coil * acc[p * kParamCount + r]).real();
    }
  });
  for (Eigen::Index j = 0; j < info.cols(); ++j)
    for (Eigen::Index i = j + 1; i < info.rows(); ++i) info(i, j) = info(j, i);
  return info;
}

inline Matrix fisher_from_jacobians(const std::vector<std::vector<ParamGradient>>& jac,
                                    const CoilMaps& coils, const UndersamplingPattern& pattern,
                                    double sigma, double compensation = 1.0) {
  return fisher_from_jacobians(jac, coils, pattern, detail::sampling_kernel(pattern), sigma,
                               compensation);
}

inline void verify_fisher(const Matrix& info) {
  const double norm = info.norm();
  if (!std::isfinite(norm)) throw NumericalError("non-finite Fisher information");
  if (norm == 0.0) return;
  Matrix shifted = info;
  shifted.diagonal().array() += 1e-10 * norm;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success)
    throw NumericalError("Fisher information is not positive semidefinite");
}

inline FisherMatrix assemble_fisher(const ParameterMap& map, const CoilMaps& coils,
                                    const UndersamplingPattern& pattern,
                                    const SequenceSettings& settings, double sigma,
                                    double compensation = 1.0, FisherOptions options = {}) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("noise sigma must be positive");
  settings.validate();
  detail::check_shapes(map, coils, pattern, settings);
  FisherMatrix f;
  f.dimension = map.parameter_count();
  f.noise_sigma = sigma;
  f.compensation = compensation;
  f.info = fisher_from_jacobians(voxel_jacobians(map, settings), coils, pattern, sigma, compensation);
  if (options.verify_psd) verify_fisher(f.info);
  return f;
}

/// Block-diagonal prior precision Gamma^{-1} for `voxels` voxels.
inline Matrix prior_precision(const PriorSpec& prior, std::size_t voxels) {
  const Eigen::Matrix4d p1 = prior.precision();
  const auto dim = static_cast<Eigen::Index>(kParamCount * voxels);
  Matrix out = Matrix::Zero(dim, dim);
  for (std::size_t v = 0; v < voxels; ++v)
    out.block<4, 4>(static_cast<Eigen::Index>(v * kParamCount), static_cast<Eigen::Index>(v * kParamCount)) = p1;
  return out;
}

struct PosteriorCovariance {
  std::size_t dimension = 0;
  Matrix covariance;
  Vector diagonal;
};

namespace detail {
inline Eigen::LLT<Matrix> posterior_factor(const FisherMatrix& fisher, const PriorSpec& prior) {
  if (fisher.dimension % kParamCount != 0) throw ShapeError("Fisher dimension is not a multiple of 4");
  Matrix a = fisher.info + prior_precision(prior, fisher.dimension / kParamCount);
  a = 0.5 * (a + a.transpose());
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericalError("posterior precision Gamma^-1 + I is not positive definite");
  return llt;
}
}  // namespace detail

/// (Gamma^{-1} + I)^{-1} and its diagonal.
inline PosteriorCovariance posterior_covariance(const FisherMatrix& fisher, const PriorSpec& prior) {
  const auto llt = detail::posterior_factor(fisher, prior);
  PosteriorCovariance out;
  out.dimension = fisher.dimension;
  out.covariance = llt.solve(Matrix::Identity(static_cast<Eigen::Index>(fisher.dimension),
                                              static_cast<Eigen::Index>(fisher.dimension)));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.diagonal = out.covariance.diagonal();
  return out;
}

/// Diagonal of the posterior covariance only (column norms of L^{-1}).
inline Vector posterior_variances(const FisherMatrix& fisher, const PriorSpec& prior) {
  const auto llt = detail::posterior_factor(fisher, prior);
  const auto dim = static_cast<Eigen::Index>(fisher.dimension);
  const Matrix linv = llt.matrixL().solve(Matrix::Identity(dim, dim));
  return linv.colwise().squaredNorm().transpose();
}

/// Scan time in seconds: one shot per (position, inversion block), TR each.
inline double scan_time(const UndersamplingPattern& pattern, const SequenceSettings& settings) {
  return static_cast<double>(pattern.samples_per_contrast()) *
         static_cast<double>(settings.inversion_delays_ms.size()) * settings.repetition_time_ms /
         1000.0;
}

enum class Relaxation : std::size_t { T1 = 0, T2 = 1 };

struct TimeEfficiencyReport {
  std::array<double, 2> cv{};   // T1, T2 averaged over the ROI
  std::array<double, 2> eta{};  // 1/s
  double scan_time_s = 0.0;
  std::vector<std::uint8_t> roi;
  // Per-voxel posterior variances of (re M0, im M0, ln T1, ln T2), voxel-major.
  std::vector<std::array<double, kParamCount>> variance;

  /// Delta method: the CV of T equals the standard deviation of ln T.
  [[nodiscard]] double voxel_cv(std::size_t voxel, Relaxation p) const {
    return std::sqrt(variance[voxel][p == Relaxation::T1 ? LnT1 : LnT2]);
  }
  [[nodiscard]] double voxel_eta(std::size_t voxel, Relaxation p) const {
    const double cv = voxel_cv(voxel, p);
    return 1.0 / (cv * cv * scan_time_s);
  }
};

inline double time_efficiency(double cv, double scan_time_s) { return 1.0 / (cv * cv * scan_time_s); }

/// Voxels with non-zero proton density.
inline std::vector<std::uint8_t> tissue_roi(const ParameterMap& map) {
  std::vector<std::uint8_t> roi(map.values.size(), 0);
  for (std::size_t x = 0; x < roi.size(); ++x) roi[x] = std::abs(map.values[x].m0()) > 0.0;
  return roi;
}

/// Report from a posterior diagonal (per-voxel-per-parameter variances).
inline TimeEfficiencyReport teusqa_from_variances(const Vector& diagonal,
                                                  std::vector<std::uint8_t> roi,
                                                  double scan_time_s) {
  const std::size_t n = static_cast<std::size_t>(diagonal.size()) / kParamCount;
  if (roi.size() != n) throw ShapeError("ROI mask size differs from the map");
  std::size_t count = 0;
  for (auto r : roi) count += r != 0;
  if (count == 0) throw DomainError("empty ROI");
  TimeEfficiencyReport rep;
  rep.scan_time_s = scan_time_s;
  rep.variance.resize(n);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t p = 0; p < kParamCount; ++p)
      rep.variance[x][p] = diagonal(static_cast<Eigen::Index>(x * kParamCount + p));
  rep.roi = std::move(roi);
  for (auto rel : {Relaxation::T1, Relaxation::T2}) {
    double sum = 0.0;
    for (std::size_t x = 0; x < n; ++x)
      if (rep.roi[x]) sum += rep.voxel_cv(x, rel);
    const auto i = static_cast<std::size_t>(rel);
    rep.cv[i] = sum / static_cast<double>(count);
    rep.eta[i] = time_efficiency(rep.cv[i], scan_time_s);
  }
  return rep;
}

inline TimeEfficiencyReport evaluate_teusqa(const ParameterMap& map, const CoilMaps& coils,
                                            const UndersamplingPattern& pattern,
                                            const SequenceSettings& settings,
                                            const PriorSpec& prior, double sigma,
                                            std::vector<std::uint8_t> roi, double scan_time_s,
                                            double compensation = 1.0) {
  if (roi.size() != map.values.size()) throw ShapeError("ROI mask size differs from the map");
  if (std::none_of(roi.begin(), roi.end(), [](auto r) { return r != 0; }))
    throw DomainError("empty ROI");
  const auto fisher = assemble_fisher(map, coils, pattern, settings, sigma, compensation);
  return teusqa_from_variances(posterior_variances(fisher, prior), std::move(roi), scan_time_s);
}

}  // namespace teusqa
