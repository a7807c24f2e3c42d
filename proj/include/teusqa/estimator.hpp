#pragma once

// MAP parameter estimation: Levenberg-Marquardt on
//   Phi(theta) = |Z - mu(theta)|^2 / (2 sigma^2) + (theta - mean)^T Gamma^{-1} (theta - mean) / 2.

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "teusqa/encoding.hpp"
#include "teusqa/fisher.hpp"

namespace teusqa {

enum class InitMode { PriorMean, GroundTruth, Custom };

struct EstimatorConfig {
  std::size_t max_iterations = 50;
  double gradient_tolerance = 1e-6;
  double step_damping = 1e-3;  // initial lambda
  InitMode init_mode = InitMode::PriorMean;
  // Starting map for GroundTruth and Custom.
  std::optional<ParameterMap> initial;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0)) throw ConfigError("gradient_tolerance must be positive");
    if (!(step_damping > 0.0)) throw ConfigError("step_damping must be positive");
    if (init_mode != InitMode::PriorMean && !initial)
      throw ConfigError("this init mode needs an initial map");
  }
};

struct IterationRecord {
  std::size_t iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double lambda = 0.0;
};

struct EstimatorResult {
  ParameterMap estimate;
  bool converged = false;
  std::size_t iterations = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  std::vector<IterationRecord> log;
};

/// Thrown when the objective becomes non-finite at an accepted iterate.
struct EstimationFailure : NumericalError {
  ParameterMap iterate;
  EstimationFailure(const std::string& what, ParameterMap at)
      : NumericalError(what), iterate(std::move(at)) {}
};

/// Objective and gradient pieces for one estimation problem.
class MapProblem {
 public:
  MapProblem(const KSpaceData& data, const CoilMaps& coils, const SequenceSettings& settings,
             const PriorSpec& prior, double sigma)
      : data_(data), coils_(coils), settings_(settings), prior_(prior), sigma_(sigma),
        plan_(data.pattern.grid), precision_(prior.precision()) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("noise sigma must be positive");
    settings.validate();
    data.validate();
    if (coils.grid != data.pattern.grid) throw ShapeError("coil grid differs from pattern grid");
    if (coils.coil_count != data.coil_count) throw ShapeError("coil count differs from data");
    if (data.pattern.contrasts != settings.contrast_count())
      throw ShapeError("pattern contrast count differs from the sequence");
    offsets_.resize(data.pattern.contrasts);
    for (std::size_t q = 0; q < offsets_.size(); ++q) offsets_[q] = data.offset(q);
  }

  [[nodiscard]] const UndersamplingPattern& pattern() const { return data_.pattern; }
  [[nodiscard]] Grid grid() const { return data_.pattern.grid; }
  [[nodiscard]] const Eigen::Matrix4d& prior_precision_block() const { return precision_; }

  [[nodiscard]] double prior_term(const ParameterMap& theta) const {
    double acc = 0.0;
    for (const auto& v : theta.values) {
      Eigen::Vector4d d;
      for (std::size_t p = 0; p < kParamCount; ++p) d(static_cast<Eigen::Index>(p)) = v[p] - prior_.mean[p];
      acc += 0.5 * d.dot(precision_ * d);
    }
    return acc;
  }

  /// Z - mu(theta).
  [[nodiscard]] std::vector<Complex> residual(const std::vector<std::vector<Complex>>& signals) const {
    auto mu = forward_from_signals(signals, coils_, data_.pattern);
    std::vector<Complex> r(mu.values.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = data_.values[i] - mu.values[i];
    return r;
  }

  [[nodiscard]] double objective(const ParameterMap& theta) const {
    const auto r = residual(voxel_signals(theta, settings_));
    return data_term(r) + prior_term(theta);
  }

  [[nodiscard]] double data_term(const std::vector<Complex>& r) const {
    double acc = 0.0;
    for (auto v : r) acc += std::norm(v);
    return acc / (2.0 * sigma_ * sigma_);
  }

  /// dPhi/dtheta, voxel-major.
  [[nodiscard]] Vector gradient(const ParameterMap& theta, const std::vector<Complex>& r,
                                const std::vector<std::vector<ParamGradient>>& jac) const {
    const Grid g = grid();
    const std::size_t n = g.size();
    const std::size_t nq = data_.pattern.contrasts;
    const auto back = back_project(r);
    Vector grad(static_cast<Eigen::Index>(kParamCount * n));
    const double inv_var = 1.0 / (sigma_ * sigma_);
    for (std::size_t x = 0; x < n; ++x) {
      Eigen::Vector4d d;
      for (std::size_t p = 0; p < kParamCount; ++p)
        d(static_cast<Eigen::Index>(p)) = theta.values[x][p] - prior_.mean[p];
      const Eigen::Vector4d pg = precision_ * d;
      for (std::size_t p = 0; p < kParamCount; ++p) {
        double acc = 0.0;
        for (std::size_t q = 0; q < nq; ++q) acc += (std::conj(jac[x][q][p]) * back[q * n + x]).real();
        grad(static_cast<Eigen::Index>(x * kParamCount + p)) = -inv_var * acc + pg(static_cast<Eigen::Index>(p));
      }
    }
    return grad;
  }

  /// sum_c conj(C_xc) (F^H r_qc)(x), laid out [q][x].
  [[nodiscard]] std::vector<Complex> back_project(const std::vector<Complex>& r) const {
    const std::size_t n = grid().size();
    const std::size_t nq = data_.pattern.contrasts;
    const std::size_t nc = coils_.coil_count;
    std::vector<Complex> back(nq * n);
    parallel_for(nq, [&](std::size_t q) {
      std::vector<Complex> image(n);
      for (std::size_t c = 0; c < nc; ++c) {
        plan_.adjoint(r.data() + offsets_[q] + c, nc, data_.pattern.samples[q], image.data());
        for (std::size_t x = 0; x < n; ++x) back[q * n + x] += std::conj(coils_.at(c, x)) * image[x];
      }
    });
    return back;
  }

  [[nodiscard]] Vector gradient(const ParameterMap& theta) const {
    return gradient(theta, residual(voxel_signals(theta, settings_)), voxel_jacobians(theta, settings_));
  }

  /// Prior mean everywhere, with M0 from a regularized linear fit of all data at the
  /// prior-mean relaxation times (mu is linear in M0).
  [[nodiscard]] ParameterMap standard_initialization(const detail::SamplingKernel& kernel) const {
    ParameterMap theta(grid(), prior_.mean_params());
    const auto jac = voxel_jacobians(theta, settings_);
    const auto r = residual(voxel_signals(theta, settings_));
    const Vector grad = gradient(theta, r, jac);
    const Matrix info = fisher_from_jacobians(jac, coils_, data_.pattern, kernel, sigma_);
    const std::size_t n = grid().size();
    std::vector<Eigen::Index> idx;
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t p : {std::size_t{ReM0}, std::size_t{ImM0}})
        idx.push_back(static_cast<Eigen::Index>(x * kParamCount + p));
    const auto m = static_cast<Eigen::Index>(idx.size());
    Matrix h(m, m);
    Vector b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      b(i) = -grad(idx[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < m; ++j)
        h(i, j) = info(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    for (std::size_t x = 0; x < n; ++x)
      for (Eigen::Index a = 0; a < 2; ++a)
        for (Eigen::Index c = 0; c < 2; ++c)
          h(static_cast<Eigen::Index>(2 * x) + a, static_cast<Eigen::Index>(2 * x) + c) += precision_(a, c);
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) return theta;
    const Vector step = llt.solve(b);
    for (std::size_t x = 0; x < n; ++x) {
      theta.values[x].re_m0 += step(static_cast<Eigen::Index>(2 * x));
      theta.values[x].im_m0 += step(static_cast<Eigen::Index>(2 * x + 1));
    }
    return theta;
  }

  [[nodiscard]] const SequenceSettings& settings() const { return settings_; }
  [[nodiscard]] const CoilMaps& coils() const { return coils_; }
  [[nodiscard]] double sigma() const { return sigma_; }

 private:
  const KSpaceData& data_;
  const CoilMaps& coils_;
  const SequenceSettings& settings_;
  const PriorSpec& prior_;
  double sigma_;
  DftPlan plan_;
  Eigen::Matrix4d precision_;
  std::vector<std::size_t> offsets_;
};

namespace detail {

inline std::string dump_iterate(const ParameterMap& theta) {
  std::ostringstream os;
  os.precision(17);
  const std::size_t shown = std::min<std::size_t>(theta.values.size(), 8);
  for (std::size_t x = 0; x < shown; ++x) {
    const auto& v = theta.values[x];
    os << "\n  voxel " << x << ": (" << v.re_m0 << ", " << v.im_m0 << ", " << v.ln_t1 << ", "
       << v.ln_t2 << ")";
  }
  if (shown < theta.values.size()) os << "\n  ...";
  return os.str();
}
}  // namespace detail

inline EstimatorResult map_estimate(const KSpaceData& data, const CoilMaps& coils,
                                    const SequenceSettings& settings, const PriorSpec& prior,
                                    double sigma, const EstimatorConfig& config = {}) {
  config.validate();
  const MapProblem problem(data, coils, settings, prior, sigma);
  const auto kernel = detail::sampling_kernel(data.pattern);
  const std::size_t n = problem.grid().size();

  ParameterMap theta;
  if (config.init_mode == InitMode::PriorMean) {
    theta = problem.standard_initialization(kernel);
  } else {
    theta = *config.initial;
    if (theta.grid != problem.grid()) throw ShapeError("initial map grid differs from the data");
    theta.validate();
  }

  auto r = problem.residual(voxel_signals(theta, settings));
  double phi = problem.data_term(r) + problem.prior_term(theta);
  if (!std::isfinite(phi))
    throw EstimationFailure("non-finite objective at the initial iterate" + detail::dump_iterate(theta), theta);

  const Matrix prior_block = prior_precision(prior, n);
  double lambda = config.step_damping;
  EstimatorResult result;

  for (std::size_t it = 0;; ++it) {
    const auto jac = voxel_jacobians(theta, settings);
    const Vector grad = problem.gradient(theta, r, jac);
    const double gnorm = grad.cwiseAbs().maxCoeff();
    result.log.push_back({it, phi, gnorm, lambda});
    result.gradient_norm = gnorm;
    result.iterations = it;
    if (gnorm < config.gradient_tolerance * (1.0 + std::abs(phi))) {
      result.converged = true;
      break;
    }
    if (it >= config.max_iterations) break;

    Matrix hess = fisher_from_jacobians(jac, coils, data.pattern, kernel, sigma) + prior_block;
    const Vector diag = hess.diagonal();
    bool accepted = false;
    while (lambda < 1e16) {
      Matrix damped = hess;
      damped.diagonal() += lambda * diag;
      Eigen::LLT<Matrix> llt(damped);
      if (llt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Vector step = llt.solve(-grad);
      ParameterMap trial = theta;
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t p = 0; p < kParamCount; ++p)
          trial.values[x][p] += step(static_cast<Eigen::Index>(x * kParamCount + p));
      if (!std::all_of(trial.values.begin(), trial.values.end(), [](const auto& v) { return v.finite(); })) {
        lambda *= 10.0;
        continue;
      }
      auto r_trial = problem.residual(voxel_signals(trial, settings));
      const double phi_trial = problem.data_term(r_trial) + problem.prior_term(trial);
      if (std::isfinite(phi_trial) && phi_trial <= phi) {
        theta = std::move(trial);
        r = std::move(r_trial);
        phi = phi_trial;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;  // no descent direction left at machine precision
  }
  result.estimate = std::move(theta);
  result.objective = phi;
  return result;
}

/// Convenience overload matching the forward-model argument order.
inline EstimatorResult map_estimate(const KSpaceData& data, const CoilMaps& coils,
                                    const UndersamplingPattern& pattern,
                                    const SequenceSettings& settings, const PriorSpec& prior,
                                    double sigma, const EstimatorConfig& config = {}) {
  if (!(pattern == data.pattern)) throw ShapeError("data was not acquired with this pattern");
  return map_estimate(data, coils, settings, prior, sigma, config);
}

}  // namespace teusqa
