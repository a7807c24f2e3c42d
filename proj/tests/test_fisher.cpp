#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"

using namespace teusqa;

namespace {

SequenceSettings small_sequence() {
  SequenceSettings s;
  s.inversion_delays_ms = {120.0, 800.0};
  s.repetition_time_ms = 1800.0;
  s.echo_train_length = 4;
  s.echo_spacing_ms = 9.0;
  s.refocus_flip_angles_deg.assign(4, 150.0);
  return s;
}

ParameterMap random_map(Grid g, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ParameterMap m(g, TissueParams{});
  for (auto& v : m.values)
    v = TissueParams::from_relaxation({1 + 3 * rng.uniform(), 2 * rng.uniform() - 1}, 300 + 1500 * rng.uniform(),
                                      30 + 200 * rng.uniform());
  return m;
}

double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(Fisher, SingleVoxelHandAssembledGram) {
  const Grid g{1, 1};
  const auto s = table_one_settings();
  const auto map = ParameterMap(g, TissueParams::from_relaxation({2.0, 1.0}, 800.0, 70.0));
  const CoilMaps coils(1, g);
  const auto f = assemble_fisher(map, coils, full_sampling(g, 72), s, 0.5);
  const auto jac = simulate_jacobian(map.values[0], s);
  Eigen::Matrix4d hand = Eigen::Matrix4d::Zero();
  for (std::size_t q = 0; q < 72; ++q)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) hand(a, b) += (std::conj(jac[q][a]) * jac[q][b]).real();
  hand /= 0.25;
  EXPECT_LT((f.info - Matrix(hand)).norm() / hand.norm(), 1e-13);
}

TEST(Fisher, MatchesDenseStackedOracle) {
  const Grid g{6, 6};
  const auto s = table_one_settings();
  const auto map = random_map(g, 1);
  const auto coils = make_coils(2, g, 4);
  const auto pat = generate({PatternKind::Treg, 2, 2, g, 72, 0});
  const auto f = assemble_fisher(map, coils, pat, s, 0.3);
  EXPECT_LT(rel_frobenius(f.info, oracle::dense_fisher(map, coils, pat, s, 0.3)), 1e-8);
}

TEST(Fisher, MatchesDenseOracleForIrregularPattern) {
  const Grid g{4, 6};
  const auto s = small_sequence();
  const auto map = random_map(g, 2);
  const auto coils = make_coils(3, g, 1);
  const auto pat = generate({PatternKind::Halton, 2, 1, g, s.contrast_count(), 5});
  const auto f = assemble_fisher(map, coils, pat, s, 1.3, 2.5);
  EXPECT_LT(rel_frobenius(f.info, 2.5 * oracle::dense_fisher(map, coils, pat, s, 1.3)), 1e-10);
}

TEST(Fisher, SymmetricAndThreadInvariant) {
  const Grid g{6, 6};
  const auto s = small_sequence();
  const auto map = random_map(g, 3);
  const auto coils = make_coils(4, g, 2);
  const auto pat = generate({PatternKind::Random, 2, 2, g, s.contrast_count(), 1});
  const auto a = assemble_fisher(map, coils, pat, s, 0.7);
  FisherMatrix b;
  {
    ScopedThreadCount t(4);
    b = assemble_fisher(map, coils, pat, s, 0.7);
  }
  EXPECT_TRUE((a.info - a.info.transpose()).norm() == 0.0);
  EXPECT_TRUE(a.info == b.info);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a.info);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10 * a.info.norm());
}

TEST(Fisher, RejectsBadSigma) {
  const Grid g{2, 2};
  const auto s = small_sequence();
  const auto map = random_map(g, 1);
  EXPECT_THROW(assemble_fisher(map, CoilMaps(1, g), full_sampling(g, 8), s, 0.0), DomainError);
  EXPECT_THROW(assemble_fisher(map, CoilMaps(1, g), full_sampling(g, 8), s, -1.0), DomainError);
}

TEST(Fisher, MonotoneInSampling) {
  const Grid g{4, 4};
  const auto s = small_sequence();
  const auto map = random_map(g, 5);
  const auto coils = make_coils(2, g, 5);
  auto small = generate({PatternKind::Random, 2, 2, g, s.contrast_count(), 3});
  auto large = small;
  // Add one position to contrast 2 (quota no longer equal, which the assembly allows).
  for (std::uint32_t k = 0; k < 16; ++k) {
    const KPos p{k / 4, k % 4};
    if (!std::binary_search(large.samples[2].begin(), large.samples[2].end(), p)) {
      large.samples[2].insert(std::lower_bound(large.samples[2].begin(), large.samples[2].end(), p), p);
      break;
    }
  }
  const auto fs = fisher_from_jacobians(voxel_jacobians(map, s), coils, small, 1.0);
  const auto fl = fisher_from_jacobians(voxel_jacobians(map, s), coils, large, 1.0);
  for (Eigen::Index i = 0; i < fs.rows(); ++i) EXPECT_GE(fl(i, i), fs(i, i) - 1e-12 * std::abs(fs(i, i)));
  const auto prior = table_one_prior();
  const auto vs = posterior_variances({64, fs, 1.0, 1.0}, prior);
  const auto vl = posterior_variances({64, fl, 1.0, 1.0}, prior);
  for (Eigen::Index i = 0; i < vs.size(); ++i) EXPECT_LE(vl(i), vs(i) * (1 + 1e-10));
}

TEST(Posterior, ZeroInformationGivesPrior) {
  const auto prior = table_one_prior();
  FisherMatrix f{8, Matrix::Zero(8, 8), 1.0, 1.0};
  const auto d = posterior_variances(f, prior);
  const double expected[4] = {400.0, 400.0, std::log(10.0) * std::log(10.0), std::log(7.0) * std::log(7.0)};
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(d(i), expected[i % 4], 1e-12 * expected[i % 4]);
}

TEST(Posterior, MatchesDirectInverse) {
  SplitMix64 rng(7);
  Matrix a(16, 16);
  for (Eigen::Index i = 0; i < 16; ++i)
    for (Eigen::Index j = 0; j < 16; ++j) a(i, j) = rng.uniform() - 0.5;
  FisherMatrix f{16, a * a.transpose() * 50.0, 1.0, 1.0};
  const auto prior = table_one_prior();
  const Matrix direct = (f.info + prior_precision(prior, 4)).inverse();
  const auto post = posterior_covariance(f, prior);
  EXPECT_LT(rel_frobenius(post.covariance, direct), 1e-10);
  const auto d = posterior_variances(f, prior);
  for (Eigen::Index i = 0; i < 16; ++i) EXPECT_NEAR(d(i), direct(i, i), 1e-10 * direct(i, i));
}

TEST(Posterior, HalvingSigmaDecreasesEveryVariance) {
  const Grid g{3, 3};
  const auto s = small_sequence();
  const auto map = random_map(g, 8);
  const auto coils = make_coils(2, g, 1);
  const auto pat = full_sampling(g, s.contrast_count());
  const auto prior = table_one_prior();
  const auto a = posterior_variances(assemble_fisher(map, coils, pat, s, 1.0), prior);
  const auto b = posterior_variances(assemble_fisher(map, coils, pat, s, 0.5), prior);
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_LT(b(i), a(i));
}

TEST(Posterior, ZeroProtonDensityVoxel) {
  // Relaxation columns vanish where M0 = 0, so those variances stay at the prior.
  // The M0 columns do not: the data still inform M0 there.
  const Grid g{4, 4};
  const auto s = table_one_settings();
  auto map = random_map(g, 9);
  map.values[5].re_m0 = map.values[5].im_m0 = 0.0;
  const auto coils = make_coils(2, g, 1);
  const auto pat = generate({PatternKind::Random, 2, 1, g, 72, 1});
  const auto d = posterior_variances(assemble_fisher(map, coils, pat, s, 0.2), table_one_prior());
  EXPECT_NEAR(d(5 * 4 + 2), std::log(10.0) * std::log(10.0), 1e-12);
  EXPECT_NEAR(d(5 * 4 + 3), std::log(7.0) * std::log(7.0), 1e-12);
  EXPECT_LT(d(5 * 4 + 0), 400.0);
  for (std::size_t x = 0; x < 16; ++x) {
    if (x == 5) continue;
    EXPECT_LT(d(static_cast<Eigen::Index>(4 * x + 2)), std::log(10.0) * std::log(10.0));
  }
}

TEST(Posterior, ZeroSensitivityVoxelGivesFullPrior) {
  const Grid g{3, 3};
  const auto s = small_sequence();
  auto map = random_map(g, 10);
  map.values[4].re_m0 = map.values[4].im_m0 = 0.0;
  CoilMaps coils(1, g);
  coils.at(0, 4) = 0.0;
  const auto d = posterior_variances(assemble_fisher(map, coils, full_sampling(g, s.contrast_count()), s, 0.1),
                                     table_one_prior());
  const double expected[4] = {400.0, 400.0, std::log(10.0) * std::log(10.0), std::log(7.0) * std::log(7.0)};
  for (int p = 0; p < 4; ++p) EXPECT_NEAR(d(16 + p), expected[p], 1e-9 * expected[p]);
}

TEST(Prior, RejectsNonSpd) {
  auto p = table_one_prior();
  p.covariance(0, 0) = -1.0;
  EXPECT_THROW(p.precision(), DomainError);
  p = table_one_prior();
  p.covariance(0, 1) = 3.0;
  EXPECT_THROW(p.precision(), DomainError);
}

TEST(ScanTime, TableThreeExample) {
  auto s = table_one_settings();
  const auto p = generate({PatternKind::Random, 32, 1, {64, 128}, 72, 0});
  EXPECT_EQ(p.samples_per_contrast(), 256u);
  EXPECT_NEAR(scan_time(p, s), 2613.248, 1e-9);
}

TEST(ScanTime, ProportionalToQuota) {
  const auto s = table_one_settings();
  const Grid g{24, 24};
  const double t1 = scan_time(generate({PatternKind::Regular, 1, 1, g, 72, 0}), s);
  const double t2 = scan_time(generate({PatternKind::Regular, 1, 2, g, 72, 0}), s);
  const double t4 = scan_time(generate({PatternKind::Regular, 2, 2, g, 72, 0}), s);
  EXPECT_DOUBLE_EQ(t1, 2 * t2);
  EXPECT_NEAR(t4, 144 * 10.208, 1e-9);
}

TEST(Compensation, Ratios) {
  EXPECT_NEAR(compensation_factor({64, 128}, {24, 24}), 8192.0 / 576.0, 1e-12);
  EXPECT_NEAR(compensation_factor({64, 64}, {24, 24}), 4096.0 / 576.0, 1e-12);
  EXPECT_THROW(compensation_factor({8, 8}, {16, 16}), DomainError);
}

TEST(Compensation, DownsizedAnalysisMatchesFullGrid) {
  RunConfig c;
  c.grid = {24, 24};
  auto s = make_scenario(c, false);
  s.truth = ParameterMap(c.grid, TissueParams::from_relaxation({5.0, 0.0}, 900.0, 90.0));
  s.coils = CoilMaps(1, c.grid);
  s.sigma = sigma_from_snr(s.truth, s.coils, s.settings, 50.0);
  for (auto kind : {PatternKind::Regular, PatternKind::Treg, PatternKind::Halton}) {
    s.analysis_grid.reset();
    const auto full = evaluate_pattern(s, kind, 2, 2);
    s.analysis_grid = Grid{12, 12};
    const auto small = evaluate_pattern(s, kind, 2, 2);
    for (int p = 0; p < 2; ++p) EXPECT_NEAR(small.report.cv[p] / full.report.cv[p], 1.0, 0.01) << to_string(kind);
    EXPECT_EQ(small.report.scan_time_s, full.report.scan_time_s);
  }
}

TEST(Teusqa, DeltaMethodAndEta) {
  EXPECT_DOUBLE_EQ(time_efficiency(0.1, 100.0), 1.0);
  Vector d(8);
  d << 1, 1, 0.01, 0.04, 1, 1, 0.01, 0.04;
  const auto rep = teusqa_from_variances(d, {1, 1}, 100.0);
  EXPECT_NEAR(rep.cv[0], 0.1, 1e-15);
  EXPECT_NEAR(rep.cv[1], 0.2, 1e-15);
  EXPECT_NEAR(rep.eta[0], 1.0, 1e-12);
  EXPECT_THROW(teusqa_from_variances(d, {0, 0}, 100.0), DomainError);
}

TEST(Sweep, RowCountAndDeclineFromFullSampling) {
  RunConfig c;
  const auto s = make_scenario(c, false);
  const auto rows = sweep(s, all_pattern_kinds(), default_acceleration_set());
  ASSERT_EQ(rows.size(), 66u);
  std::map<PatternKind, std::array<double, 2>> full;
  for (const auto& r : rows)
    if (r.r1 == 1 && r.r2 == 1) full[r.kind] = r.report.eta;
  for (const auto& r : rows) {
    if (!r.feasible || r.r1 * r.r2 == 1) continue;
    for (std::size_t p = 0; p < 2; ++p) EXPECT_LT(r.report.eta[p], full[r.kind][p]) << to_string(r.kind) << r.r1 << r.r2;
  }
  // Full sampling is the same pattern for every kind.
  for (const auto& [kind, eta] : full) EXPECT_EQ(eta, full[PatternKind::Regular]);
  // The randomised kinds are realisable at every pair.
  for (const auto& r : rows)
    if (r.kind == PatternKind::Halton || r.kind == PatternKind::Random) {
      EXPECT_TRUE(r.feasible);
    }
}
