#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "oracles.hpp"

using namespace teusqa;

namespace {

PatternSpec spec(PatternKind kind, std::size_t r1, std::size_t r2, Grid g, std::size_t q,
                 std::uint64_t seed = 3) {
  return {kind, r1, r2, g, q, seed};
}

std::size_t count_matches(const std::string& text, const std::string& re) {
  const std::regex r(re);
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(text.begin(), text.end(), r),
                                                std::sregex_iterator()));
}

}  // namespace

TEST(RadicalInverse, FirstTermsBase2And3) {
  EXPECT_DOUBLE_EQ(radical_inverse(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(radical_inverse(2, 2), 0.25);
  EXPECT_DOUBLE_EQ(radical_inverse(3, 2), 0.75);
  EXPECT_DOUBLE_EQ(radical_inverse(4, 2), 0.125);
  EXPECT_DOUBLE_EQ(radical_inverse(1, 3), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(radical_inverse(2, 3), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(radical_inverse(3, 3), 1.0 / 9.0);
  EXPECT_DOUBLE_EQ(radical_inverse(0, 5), 0.0);
}

TEST(HaltonStream, UnrandomizedStreamStartsAtIndexOne) {
  HaltonStream s(0, 0);
  const auto a = s.next();
  const auto b = s.next();
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(b[0], 0.25);
  EXPECT_DOUBLE_EQ(b[1], 2.0 / 3.0);
  EXPECT_EQ(s.consumed(), 2u);
}

TEST(Generate, EqualQuotaForEveryKind) {
  const Grid g{24, 24};
  for (auto kind : kAllPatternKinds)
    for (auto [r1, r2] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {2, 2}, {2, 3}, {4, 6}, {8, 4}}) {
      const auto p = generate(spec(kind, r1, r2, g, 72));
      ASSERT_EQ(p.contrasts, 72u);
      for (const auto& s : p.samples) EXPECT_EQ(s.size(), 576 / (r1 * r2)) << to_string(kind);
      EXPECT_NO_THROW(p.validate());
    }
}

TEST(Generate, CliExampleQuota) {
  const auto p = generate(spec(PatternKind::Halton, 2, 3, {24, 24}, 72, 7));
  EXPECT_EQ(p.samples.size(), 72u);
  EXPECT_EQ(p.samples_per_contrast(), 96u);
}

TEST(Generate, LatticeOnIndivisibleGridIsSpecError) {
  EXPECT_THROW(generate(spec(PatternKind::Regular, 5, 5, {24, 24}, 4)), SpecError);
  EXPECT_THROW(generate(spec(PatternKind::TSreg, 2, 3, {8, 8}, 4)), SpecError);
  // Non-lattice kinds take the floor quota.
  const auto p = generate(spec(PatternKind::Random, 5, 5, {24, 24}, 4));
  EXPECT_EQ(p.samples_per_contrast(), 576u / 25u);
}

TEST(Generate, InvalidSpecs) {
  EXPECT_THROW(generate(spec(PatternKind::Regular, 0, 1, {8, 8}, 4)), SpecError);
  EXPECT_THROW(generate(spec(PatternKind::Regular, 1, 1, {0, 8}, 4)), SpecError);
  EXPECT_THROW(generate(spec(PatternKind::Regular, 1, 1, {8, 8}, 0)), SpecError);
  EXPECT_THROW(generate(spec(PatternKind::Halton, 9, 9, {8, 8}, 1)), SpecError);
}

TEST(Generate, Deterministic) {
  for (auto kind : kAllPatternKinds) {
    const auto s = spec(kind, 2, 4, {16, 16}, 20, 11);
    const auto a = generate(s);
    UndersamplingPattern b;
    {
      ScopedThreadCount t(4);
      b = generate(s);
    }
    EXPECT_EQ(a, b) << to_string(kind);
  }
}

TEST(Generate, SeedChangesRandomisedKinds) {
  for (auto kind : {PatternKind::Random, PatternKind::Halton}) {
    const auto a = generate(spec(kind, 2, 2, {16, 16}, 8, 1));
    const auto b = generate(spec(kind, 2, 2, {16, 16}, 8, 2));
    EXPECT_NE(a.samples, b.samples) << to_string(kind);
  }
  // Lattice kinds ignore the seed.
  EXPECT_EQ(generate(spec(PatternKind::Treg, 2, 2, {16, 16}, 8, 1)).samples,
            generate(spec(PatternKind::Treg, 2, 2, {16, 16}, 8, 2)).samples);
}

TEST(Generate, RegularIsSameEveryContrastAndOnLattice) {
  const auto p = generate(spec(PatternKind::Regular, 2, 3, {12, 12}, 6));
  for (const auto& s : p.samples) {
    EXPECT_EQ(s, p.samples[0]);
    for (auto k : s) {
      EXPECT_EQ(k.k1 % 2, 0u);
      EXPECT_EQ(k.k2 % 3, 0u);
    }
  }
}

TEST(Generate, LatticePeriodicity) {
  const Grid g{24, 24};
  for (auto kind : {PatternKind::Regular, PatternKind::Treg, PatternKind::Sreg, PatternKind::TSreg}) {
    const std::size_t r1 = 2, r2 = 4;
    const auto p = generate(spec(kind, r1, r2, g, 16));
    for (std::size_t q = 0; q < p.contrasts; ++q) {
      const auto m = p.mask(q);
      // A shear along k2 repeats every R2 cells in k1 and vice versa.
      const std::size_t a = r2, b = r1;
      for (std::size_t i = 0; i < g.n1; ++i)
        for (std::size_t j = 0; j < g.n2; ++j) {
          EXPECT_EQ(m[g.index(i, j)], m[g.index((i + r1 * a) % g.n1, j)]);
          EXPECT_EQ(m[g.index(i, j)], m[g.index(i, (j + r2 * b) % g.n2)]);
        }
      if (kind == PatternKind::Regular || kind == PatternKind::Treg)
        for (std::size_t i = 0; i < g.n1; ++i)
          for (std::size_t j = 0; j < g.n2; ++j) {
            EXPECT_EQ(m[g.index(i, j)], m[g.index((i + r1) % g.n1, j)]);
            EXPECT_EQ(m[g.index(i, j)], m[g.index(i, (j + r2) % g.n2)]);
          }
    }
  }
}

TEST(Generate, TregCoversEveryPositionQOverRTimes) {
  const auto p = generate(spec(PatternKind::Treg, 2, 3, {24, 24}, 72));
  for (auto c : p.coverage()) EXPECT_EQ(c, 72u / 6u);
}

TEST(Generate, ShearedLatticesDifferFromRegular) {
  const Grid g{24, 24};
  const auto reg = generate(spec(PatternKind::Regular, 2, 4, g, 8));
  const auto sreg = generate(spec(PatternKind::Sreg, 2, 4, g, 8));
  std::size_t differing = 0;
  for (std::size_t q = 0; q < 8; ++q) differing += reg.samples[q] != sreg.samples[q];
  EXPECT_GT(differing, 0u);
  EXPECT_EQ(reg.samples[0], sreg.samples[0]);  // zero shear at q = 0
}

TEST(Generate, HaltonIsUniqueWithinContrast) {
  const auto p = generate(spec(PatternKind::Halton, 1, 2, {8, 8}, 10));
  for (const auto& s : p.samples) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (auto k : s) EXPECT_TRUE(seen.insert({k.k1, k.k2}).second);
  }
}

TEST(Discrepancy, WarnockMatchesQuadratureOracle) {
  // Small irregular point set, 200^3 midpoint quadrature.
  std::vector<Point3> pts;
  SplitMix64 rng(99);
  for (int i = 0; i < 40; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  const double warnock = l2_star_discrepancy_squared(pts);
  const double quad = oracle::l2_star_squared_quadrature(pts, 200);
  EXPECT_NEAR(warnock, quad, 0.02 * warnock);
}

TEST(Discrepancy, SinglePointClosedForm) {
  // One point at (a, b, c): D^2 = 1/27 - (1-a^2)(1-b^2)(1-c^2)/4 + (1-a)(1-b)(1-c).
  const Point3 p{0.3, 0.6, 0.2};
  const double expected = 1.0 / 27.0 - (1 - 0.09) * (1 - 0.36) * (1 - 0.04) / 4.0 + 0.7 * 0.4 * 0.8;
  EXPECT_NEAR(l2_star_discrepancy_squared(std::vector<Point3>{p}), expected, 1e-15);
}

TEST(Discrepancy, ThreadIndependent) {
  const auto p = generate(spec(PatternKind::Halton, 2, 2, {16, 16}, 18));
  const double a = discrepancy_l2(p).l2_star_discrepancy;
  double b;
  {
    ScopedThreadCount t(3);
    b = discrepancy_l2(p).l2_star_discrepancy;
  }
  EXPECT_EQ(a, b);
}

TEST(Discrepancy, HaltonBelowRegularOnScoreExample) {
  const Grid g{24, 24};
  const double reg = discrepancy_l2(generate(spec(PatternKind::Regular, 2, 3, g, 72))).l2_star_discrepancy;
  const double hal = discrepancy_l2(generate(spec(PatternKind::Halton, 2, 3, g, 72))).l2_star_discrepancy;
  EXPECT_LT(hal, reg);
}

TEST(Discrepancy, CellCentreEmbedding) {
  const auto p = generate(spec(PatternKind::Regular, 1, 1, {2, 2}, 1));
  const auto pts = pattern_points(p);
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_DOUBLE_EQ(pts[0][0], 0.25);
  EXPECT_DOUBLE_EQ(pts[3][1], 0.75);
  EXPECT_DOUBLE_EQ(pts[0][2], 0.5);
}

TEST(RenderSvg, FullSamplingDrawsFullDiscs) {
  const auto p = full_sampling({4, 4}, 8);
  const auto svg = render_svg(p, 4);
  EXPECT_EQ(count_matches(svg, "data-count=\"8\""), 16u);
  EXPECT_EQ(count_matches(svg, "<path "), 16u * 8u);
}

TEST(RenderSvg, RegularOnlyAtLatticePositions) {
  const auto p = generate(spec(PatternKind::Regular, 2, 3, {24, 24}, 72));
  const auto svg = render_svg(p, 4, {0, 0, 8, 8});
  // 8 x 8 window: k1 in {0,2,4,6}, k2 in {0,3,6}
  EXPECT_EQ(count_matches(svg, "<g data-k1"), 12u);
  EXPECT_EQ(count_matches(svg, "data-count=\"72\""), 12u);
  EXPECT_EQ(count_matches(svg, "data-k2=\"1\""), 0u);
}

TEST(RenderSvg, GroupCountMustDivideContrasts) {
  const auto p = full_sampling({4, 4}, 6);
  EXPECT_THROW(render_svg(p, 4), DomainError);
  EXPECT_THROW(render_svg(p, 0), DomainError);
  EXPECT_NO_THROW(render_svg(p, 3));
}
