#pragma once

// Monte-Carlo check of predicted time efficiency: repeated MAP estimation on
// noisy synthetic data, compared voxel by voxel against the posterior prediction.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "teusqa/estimator.hpp"
#include "teusqa/fisher.hpp"
#include "teusqa/rng.hpp"

namespace teusqa {

enum class CvDenominator { GroundTruth, RealizationMean };

struct McConfig {
  std::size_t realizations = 100;
  double snr = 50.0;
  std::uint64_t master_seed = 0;
  std::vector<std::pair<std::size_t, std::size_t>> acceleration_set;
  CvDenominator denominator = CvDenominator::GroundTruth;
  EstimatorConfig estimator;
  // Start every realization at the ground truth instead of the standard initialization.
  bool init_at_truth = false;

  void validate() const {
    if (realizations < 2) throw ConfigError("realizations must be >= 2");
    if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("snr must be positive");
    for (auto [a, b] : acceleration_set)
      if (a < 1 || b < 1) throw ConfigError("acceleration factors must be positive");
  }
};

/// sigma = RMS |mu_full| / snr over every contrast, coil and k-space position.
inline double sigma_from_snr(const ParameterMap& map, const CoilMaps& coils,
                             const SequenceSettings& settings, double snr) {
  if (!(snr > 0.0)) throw DomainError("snr must be positive");
  const auto full = forward(map, coils, full_sampling(map.grid, settings.contrast_count()), settings);
  double ss = 0.0;
  for (auto v : full.values) ss += std::norm(v);
  const double rms = std::sqrt(ss / static_cast<double>(full.values.size()));
  if (!(rms > 0.0)) throw DomainError("all-zero forward model; SNR is undefined");
  return rms / snr;
}

/// Key of one realization's noise stream.
inline std::uint64_t realization_key(std::uint64_t master_seed, std::uint64_t realization) {
  return derive_key(master_seed, realization);
}

/// Adds N(0, sigma^2) to the real and imaginary part of every sample. The draw for
/// sample i depends only on (key, i).
inline KSpaceData add_noise(const KSpaceData& mu, double sigma, std::uint64_t key) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("noise sigma must be >= 0");
  KSpaceData out = mu;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const auto [a, b] = normal_pair(key, i);
    out.values[i] += Complex{sigma * a, sigma * b};
  }
  return out;
}

struct Quartiles {
  double q25 = 0.0, q50 = 0.0, q75 = 0.0;
};

/// Sample quantile with linear interpolation between order statistics (R type 7).
inline double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline Quartiles quartiles(const std::vector<double>& values) {
  return {quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)};
}

struct McVoxel {
  std::size_t voxel = 0;
  std::array<double, 2> cv_pred{};
  std::array<double, 2> cv_mc{};
  std::array<double, 2> eta{};
  std::array<double, 2> eta_mc{};
  std::array<double, 2> ratio{};
};

struct McReport {
  PatternKind kind = PatternKind::Regular;
  std::size_t r1 = 1, r2 = 1;
  double sigma = 0.0;
  double scan_time_s = 0.0;
  std::size_t realizations = 0;
  std::size_t converged = 0;
  std::size_t failed = 0;  // threw during estimation; excluded from statistics
  bool flagged = false;    // more than 10 % of realizations did not converge
  std::vector<McVoxel> voxels;  // ROI voxels in raster order
  std::array<Quartiles, 2> ratio_quartiles{};
  double runtime_s = 0.0;
};

inline McReport run_mc(const ParameterMap& truth, const CoilMaps& coils,
                       const UndersamplingPattern& pattern, const SequenceSettings& settings,
                       const PriorSpec& prior, const McConfig& mc) {
  mc.validate();
  const auto start = std::chrono::steady_clock::now();
  const double sigma = sigma_from_snr(truth, coils, settings, mc.snr);
  const auto mu = forward(truth, coils, pattern, settings);
  const auto roi = tissue_roi(truth);
  const double t_scan = scan_time(pattern, settings);
  const auto predicted = evaluate_teusqa(truth, coils, pattern, settings, prior, sigma, roi, t_scan);

  EstimatorConfig est = mc.estimator;
  if (mc.init_at_truth) {
    est.init_mode = InitMode::GroundTruth;
    est.initial = truth;
  }

  const std::size_t n = truth.grid.size();
  // ln T1, ln T2 per (realization, voxel)
  std::vector<std::array<double, 2>> samples(mc.realizations * n);
  std::vector<std::uint8_t> status(mc.realizations, 0);  // 0 failed, 1 not converged, 2 converged
  parallel_for(mc.realizations, [&](std::size_t r) {
    const auto z = add_noise(mu, sigma, realization_key(mc.master_seed, r));
    try {
      const auto res = map_estimate(z, coils, settings, prior, sigma, est);
      for (std::size_t x = 0; x < n; ++x)
        samples[r * n + x] = {res.estimate.values[x].ln_t1, res.estimate.values[x].ln_t2};
      status[r] = res.converged ? 2 : 1;
    } catch (const NumericalError&) {
      status[r] = 0;
    }
  });

  McReport rep;
  rep.kind = pattern.kind;
  rep.r1 = pattern.r1;
  rep.r2 = pattern.r2;
  rep.sigma = sigma;
  rep.scan_time_s = t_scan;
  rep.realizations = mc.realizations;
  for (auto s : status) {
    rep.converged += s == 2;
    rep.failed += s == 0;
  }
  rep.flagged = 10 * (mc.realizations - rep.converged) > mc.realizations;
  const std::size_t used = mc.realizations - rep.failed;
  if (used < 2) throw NumericalError("fewer than two realizations produced an estimate");

  std::array<std::vector<double>, 2> ratios;
  for (std::size_t x = 0; x < n; ++x) {
    if (!roi[x]) continue;
    McVoxel v;
    v.voxel = x;
    for (std::size_t p = 0; p < 2; ++p) {
      double sum = 0.0;
      for (std::size_t r = 0; r < mc.realizations; ++r)
        if (status[r] != 0) sum += std::exp(samples[r * n + x][p]);
      const double mean = sum / static_cast<double>(used);
      double ss = 0.0;
      for (std::size_t r = 0; r < mc.realizations; ++r)
        if (status[r] != 0) {
          const double d = std::exp(samples[r * n + x][p]) - mean;
          ss += d * d;
        }
      const double sd = std::sqrt(ss / static_cast<double>(used - 1));
      const double truth_value = p == 0 ? truth.values[x].t1() : truth.values[x].t2();
      const double denom = mc.denominator == CvDenominator::GroundTruth ? truth_value : mean;
      v.cv_mc[p] = sd / denom;
      v.cv_pred[p] = predicted.voxel_cv(x, p == 0 ? Relaxation::T1 : Relaxation::T2);
      v.eta[p] = time_efficiency(v.cv_pred[p], t_scan);
      v.eta_mc[p] = time_efficiency(v.cv_mc[p], t_scan);
      v.ratio[p] = v.eta_mc[p] / v.eta[p];
      ratios[p].push_back(v.ratio[p]);
    }
    rep.voxels.push_back(v);
  }
  for (std::size_t p = 0; p < 2; ++p) rep.ratio_quartiles[p] = quartiles(ratios[p]);
  rep.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace teusqa
