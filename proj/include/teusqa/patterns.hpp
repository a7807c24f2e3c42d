#pragma once

// Undersampling pattern families, L2-star discrepancy scoring and the pie-glyph
// SVG rendering used to compare them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "teusqa/common.hpp"
#include "teusqa/parallel.hpp"
#include "teusqa/rng.hpp"

namespace teusqa {

enum class PatternKind { Regular, Treg, Sreg, TSreg, Random, Halton };

inline constexpr std::array<PatternKind, 6> kAllPatternKinds = {
    PatternKind::Regular, PatternKind::Treg,   PatternKind::Sreg,
    PatternKind::TSreg,   PatternKind::Random, PatternKind::Halton};

inline std::string_view to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::Regular: return "regular";
    case PatternKind::Treg: return "treg";
    case PatternKind::Sreg: return "sreg";
    case PatternKind::TSreg: return "tsreg";
    case PatternKind::Random: return "random";
    case PatternKind::Halton: return "halton";
  }
  return "unknown";
}

inline PatternKind parse_pattern_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto kind : kAllPatternKinds)
    if (to_string(kind) == lower) return kind;
  throw ConfigError("unknown pattern kind '" + std::string(name) + "'");
}

inline constexpr bool is_lattice(PatternKind kind) {
  return kind != PatternKind::Random && kind != PatternKind::Halton;
}

struct PatternSpec {
  PatternKind kind = PatternKind::Regular;
  std::size_t r1 = 1;
  std::size_t r2 = 1;
  Grid grid{};
  std::size_t contrasts = 1;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t acceleration() const noexcept { return r1 * r2; }
  [[nodiscard]] std::size_t quota() const noexcept { return grid.size() / acceleration(); }

  void validate() const {
    if (r1 < 1 || r2 < 1) throw SpecError("acceleration factors must be positive");
    if (grid.n1 < 1 || grid.n2 < 1) throw SpecError("grid extents must be positive");
    if (contrasts < 1) throw SpecError("contrast count must be positive");
    if (is_lattice(kind) && (grid.n1 % r1 != 0 || grid.n2 % r2 != 0))
      throw SpecError("lattice pattern " + std::string(to_string(kind)) + " needs grid " +
                      to_string(grid) + " divisible by R = [" + std::to_string(r1) + "," +
                      std::to_string(r2) + "]");
    if (quota() < 1) throw SpecError("acceleration leaves no samples per contrast");
  }
};

struct KPos {
  std::uint32_t k1 = 0;
  std::uint32_t k2 = 0;
  friend constexpr auto operator<=>(const KPos&, const KPos&) = default;
};

struct UndersamplingPattern {
  Grid grid{};
  std::size_t contrasts = 0;
  std::size_t r1 = 1;
  std::size_t r2 = 1;
  PatternKind kind = PatternKind::Regular;
  std::uint64_t seed = 0;
  std::vector<std::vector<KPos>> samples;  // per contrast, sorted, unique

  [[nodiscard]] std::size_t total_samples() const noexcept {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.size();
    return n;
  }
  [[nodiscard]] std::size_t samples_per_contrast() const {
    if (samples.empty()) return 0;
    return samples.front().size();
  }
  [[nodiscard]] std::vector<std::uint8_t> mask(std::size_t q) const {
    std::vector<std::uint8_t> m(grid.size(), 0);
    for (auto p : samples.at(q)) m[grid.index(p.k1, p.k2)] = 1;
    return m;
  }
  /// Times each position is sampled across all contrasts.
  [[nodiscard]] std::vector<std::size_t> coverage() const {
    std::vector<std::size_t> c(grid.size(), 0);
    for (const auto& s : samples)
      for (auto p : s) ++c[grid.index(p.k1, p.k2)];
    return c;
  }

  /// Checks bounds, uniqueness and equal quota.
  void validate() const {
    if (samples.size() != contrasts) throw ShapeError("sample list count differs from contrasts");
    const std::size_t quota = samples_per_contrast();
    for (const auto& s : samples) {
      if (s.size() != quota) throw ShapeError("unequal per-contrast quota");
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].k1 >= grid.n1 || s[i].k2 >= grid.n2) throw ShapeError("sample outside grid");
        if (i > 0 && !(s[i - 1] < s[i])) throw ShapeError("samples not sorted/unique");
      }
    }
  }
  friend bool operator==(const UndersamplingPattern&, const UndersamplingPattern&) = default;
};

/// Radical inverse of index in the given base.
inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv = 0.0;
  double f = 1.0 / static_cast<double>(base);
  double scale = f;
  while (index > 0) {
    inv += static_cast<double>(index % base) * scale;
    index /= base;
    scale *= f;
  }
  return inv;
}

/// Two-coordinate Halton stream (bases 2 and 3) with per-coordinate start offsets.
class HaltonStream {
 public:
  HaltonStream(std::uint64_t start1, std::uint64_t start2) : start1_(start1), start2_(start2) {}

  /// Random start indices drawn from the seed.
  static HaltonStream seeded(std::uint64_t seed) {
    SplitMix64 rng(derive_key(seed, 0x4a4c54ULL));
    const std::uint64_t s1 = rng.below(std::uint64_t{1} << 30);
    const std::uint64_t s2 = rng.below(205891132094649ULL);  // 3^30
    return {s1, s2};
  }

  std::array<double, 2> next() {
    ++count_;
    return {radical_inverse(start1_ + count_, 2), radical_inverse(start2_ + count_, 3)};
  }
  [[nodiscard]] std::uint64_t consumed() const noexcept { return count_; }

 private:
  std::uint64_t start1_;
  std::uint64_t start2_;
  std::uint64_t count_ = 0;
};

namespace detail {

struct LatticeSchedule {
  std::size_t s1 = 0, s2 = 0, d1 = 0, d2 = 0;
};

inline LatticeSchedule lattice_schedule(PatternKind kind, std::size_t q, std::size_t r1,
                                        std::size_t r2) {
  const std::size_t r = r1 * r2;
  LatticeSchedule s;
  switch (kind) {
    case PatternKind::Treg:
      s.d2 = q % r2;
      s.d1 = (q / r2) % r1;
      break;
    case PatternKind::Sreg:
      s.s2 = q % r2;
      s.s1 = (q / r2) % r1;
      break;
    case PatternKind::TSreg:
      s.d2 = q % r2;
      s.d1 = (q / r2) % r1;
      s.s2 = q % r;
      s.s1 = (q / r) % r;
      break;
    default:
      break;
  }
  return s;
}

// One sample per R1 x R2 cell; shears offset the cell position linearly in the
// other cell coordinate, translations offset all cells.
inline std::vector<KPos> lattice_samples(const PatternSpec& spec, std::size_t q) {
  const auto sch = lattice_schedule(spec.kind, q, spec.r1, spec.r2);
  const std::size_t cells1 = spec.grid.n1 / spec.r1;
  const std::size_t cells2 = spec.grid.n2 / spec.r2;
  std::vector<KPos> out;
  out.reserve(cells1 * cells2);
  for (std::size_t x = 0; x < cells1; ++x)
    for (std::size_t y = 0; y < cells2; ++y) {
      const std::size_t k1 = spec.r1 * x + (sch.s1 * y + sch.d1) % spec.r1;
      const std::size_t k2 = spec.r2 * y + (sch.s2 * x + sch.d2) % spec.r2;
      out.push_back({static_cast<std::uint32_t>(k1), static_cast<std::uint32_t>(k2)});
    }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<KPos> random_samples(const PatternSpec& spec, std::size_t q) {
  const std::size_t n = spec.grid.size();
  const std::size_t quota = spec.quota();
  std::vector<std::uint32_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<std::uint32_t>(i);
  SplitMix64 rng(derive_key(spec.seed, q));
  for (std::size_t i = 0; i < quota; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<KPos> out;
  out.reserve(quota);
  for (std::size_t i = 0; i < quota; ++i)
    out.push_back({static_cast<std::uint32_t>(pool[i] / spec.grid.n2),
                   static_cast<std::uint32_t>(pool[i] % spec.grid.n2)});
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::vector<KPos>> halton_samples(const PatternSpec& spec) {
  const std::size_t quota = spec.quota();
  const std::size_t n1 = spec.grid.n1, n2 = spec.grid.n2;
  // Nominal stream length plus margin; the stream itself is unbounded.
  const std::uint64_t budget = 1000 * static_cast<std::uint64_t>(quota * spec.contrasts) + 1000000;
  HaltonStream stream = HaltonStream::seeded(spec.seed);
  std::vector<std::vector<KPos>> out(spec.contrasts);
  std::vector<std::uint8_t> taken(spec.grid.size());
  for (std::size_t q = 0; q < spec.contrasts; ++q) {
    std::fill(taken.begin(), taken.end(), 0);
    std::size_t remaining = quota;
    out[q].reserve(quota);
    while (remaining > 0) {
      if (stream.consumed() >= budget)
        throw CapacityError("Halton stream could not fill contrast " + std::to_string(q));
      const auto u = stream.next();
      const auto k1 = std::min(n1 - 1, static_cast<std::size_t>(u[0] * static_cast<double>(n1)));
      const auto k2 = std::min(n2 - 1, static_cast<std::size_t>(u[1] * static_cast<double>(n2)));
      auto& cell = taken[spec.grid.index(k1, k2)];
      if (cell) continue;
      cell = 1;
      out[q].push_back({static_cast<std::uint32_t>(k1), static_cast<std::uint32_t>(k2)});
      --remaining;
    }
    std::sort(out[q].begin(), out[q].end());
  }
  return out;
}

}  // namespace detail

inline UndersamplingPattern generate(const PatternSpec& spec) {
  spec.validate();
  if (spec.quota() > spec.grid.size()) throw CapacityError("quota exceeds the k-space grid");
  UndersamplingPattern p;
  p.grid = spec.grid;
  p.contrasts = spec.contrasts;
  p.r1 = spec.r1;
  p.r2 = spec.r2;
  p.kind = spec.kind;
  p.seed = spec.seed;
  p.samples.resize(spec.contrasts);
  switch (spec.kind) {
    case PatternKind::Random:
      for (std::size_t q = 0; q < spec.contrasts; ++q) p.samples[q] = detail::random_samples(spec, q);
      break;
    case PatternKind::Halton:
      p.samples = detail::halton_samples(spec);
      break;
    default:
      for (std::size_t q = 0; q < spec.contrasts; ++q)
        p.samples[q] = detail::lattice_samples(spec, q);
      break;
  }
  return p;
}

/// Every position, every contrast.
inline UndersamplingPattern full_sampling(Grid grid, std::size_t contrasts) {
  return generate({PatternKind::Regular, 1, 1, grid, contrasts, 0});
}

// ---------------------------------------------------------------------------
// Discrepancy

using Point3 = std::array<double, 3>;

/// Squared L2-star discrepancy of a point multiset in [0,1]^3 by Warnock's
/// closed form. The double sum is reduced in fixed row blocks.
inline double l2_star_discrepancy_squared(std::span<const Point3> points) {
  const std::size_t n = points.size();
  if (n == 0) throw DomainError("discrepancy of an empty point set");
  std::vector<double> xs(n), ys(n), zs(n);
  double single = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = points[i][0];
    ys[i] = points[i][1];
    zs[i] = points[i][2];
    single += (1.0 - xs[i] * xs[i]) * (1.0 - ys[i] * ys[i]) * (1.0 - zs[i] * zs[i]);
  }
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double xi = xs[i], yi = ys[i], zi = zs[i];
      double row = 0.5 * (1.0 - xi) * (1.0 - yi) * (1.0 - zi);
      for (std::size_t j = i + 1; j < n; ++j)
        row += (1.0 - std::max(xi, xs[j])) * (1.0 - std::max(yi, ys[j])) *
               (1.0 - std::max(zi, zs[j]));
      acc += row;
    }
    partial[b] = acc;
  });
  double pair = 0.0;
  for (double v : partial) pair += v;
  const double nd = static_cast<double>(n);
  return 1.0 / 27.0 - single / (4.0 * nd) + 2.0 * pair / (nd * nd);
}

struct DiscrepancyReport {
  double l2_star_discrepancy = 0.0;
  std::size_t point_count = 0;
  std::size_t dimension = 3;
};

/// Cell-centre embedding of every (k1, k2, q) sample into the unit cube.
inline std::vector<Point3> pattern_points(const UndersamplingPattern& pattern) {
  std::vector<Point3> pts;
  pts.reserve(pattern.total_samples());
  const double n1 = static_cast<double>(pattern.grid.n1);
  const double n2 = static_cast<double>(pattern.grid.n2);
  const double qn = static_cast<double>(pattern.contrasts);
  for (std::size_t q = 0; q < pattern.samples.size(); ++q)
    for (auto p : pattern.samples[q])
      pts.push_back({(p.k1 + 0.5) / n1, (p.k2 + 0.5) / n2, (static_cast<double>(q) + 0.5) / qn});
  return pts;
}

inline DiscrepancyReport discrepancy_l2(const UndersamplingPattern& pattern) {
  const auto pts = pattern_points(pattern);
  if (pts.empty()) throw DomainError("discrepancy of an empty pattern");
  const double sq = l2_star_discrepancy_squared(pts);
  return {std::sqrt(std::max(0.0, sq)), pts.size(), 3};
}

// ---------------------------------------------------------------------------
// SVG rendering

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string group_color(std::size_t g) {
  static constexpr std::array<const char*, 10> palette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  if (g < palette.size()) return palette[g];
  char buf[32];
  std::snprintf(buf, sizeof buf, "hsl(%zu,65%%,50%%)", (g * 47) % 360);
  return buf;
}

}  // namespace detail

struct RenderWindow {
  std::size_t k1_begin = 0, k2_begin = 0;
  std::size_t n1 = 0, n2 = 0;  // 0 means up to the grid edge
};

/// Pie glyph per k-space position: one equal-area slice per sampled contrast,
/// coloured by contrast group (e.g. inversion block).
inline std::string render_svg(const UndersamplingPattern& pattern, std::size_t contrast_groups,
                              RenderWindow window = {}) {
  const std::size_t q_total = pattern.contrasts;
  if (contrast_groups < 1 || q_total % contrast_groups != 0)
    throw DomainError("contrast group count must divide the number of contrasts");
  const std::size_t per_group = q_total / contrast_groups;
  if (window.k1_begin >= pattern.grid.n1 || window.k2_begin >= pattern.grid.n2)
    throw DomainError("render window outside the grid");
  const std::size_t w1 = window.n1 ? std::min(window.n1, pattern.grid.n1 - window.k1_begin)
                                   : pattern.grid.n1 - window.k1_begin;
  const std::size_t w2 = window.n2 ? std::min(window.n2, pattern.grid.n2 - window.k2_begin)
                                   : pattern.grid.n2 - window.k2_begin;

  // contrasts sampled at each position, ascending q
  std::vector<std::vector<std::size_t>> hits(pattern.grid.size());
  for (std::size_t q = 0; q < pattern.samples.size(); ++q)
    for (auto p : pattern.samples[q]) hits[pattern.grid.index(p.k1, p.k2)].push_back(q);

  constexpr double cell = 40.0, margin = 20.0, rmax = 18.0, legend_row = 18.0;
  const double width = 2 * margin + cell * static_cast<double>(w2);
  const double plot_h = 2 * margin + cell * static_cast<double>(w1);
  const double height = plot_h + legend_row * static_cast<double>(contrast_groups) + margin;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(width) +
         "\" height=\"" + detail::fmt(height) + "\" viewBox=\"0 0 " + detail::fmt(width) + " " +
         detail::fmt(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i1 = 0; i1 < w1; ++i1)
    for (std::size_t i2 = 0; i2 < w2; ++i2) {
      const std::size_t k1 = window.k1_begin + i1, k2 = window.k2_begin + i2;
      const double cx = margin + cell * (static_cast<double>(i2) + 0.5);
      const double cy = margin + cell * (static_cast<double>(i1) + 0.5);
      svg += "<rect x=\"" + detail::fmt(cx - cell / 2) + "\" y=\"" + detail::fmt(cy - cell / 2) +
             "\" width=\"" + detail::fmt(cell) + "\" height=\"" + detail::fmt(cell) +
             "\" fill=\"none\" stroke=\"#dddddd\"/>\n";
      const auto& qs = hits[pattern.grid.index(k1, k2)];
      if (qs.empty()) continue;
      const std::size_t m = qs.size();
      const double r = rmax * std::sqrt(static_cast<double>(m) / static_cast<double>(q_total));
      svg += "<g data-k1=\"" + std::to_string(k1) + "\" data-k2=\"" + std::to_string(k2) +
             "\" data-count=\"" + std::to_string(m) + "\">";
      if (m == 1) {
        svg += "<circle cx=\"" + detail::fmt(cx) + "\" cy=\"" + detail::fmt(cy) + "\" r=\"" +
               detail::fmt(r) + "\" fill=\"" + detail::group_color(qs[0] / per_group) + "\"/>";
      } else {
        const double step = 2.0 * std::numbers::pi / static_cast<double>(m);
        for (std::size_t s = 0; s < m; ++s) {
          const double a0 = -std::numbers::pi / 2 + step * static_cast<double>(s);
          const double a1 = a0 + step;
          svg += "<path d=\"M" + detail::fmt(cx) + " " + detail::fmt(cy) + " L" +
                 detail::fmt(cx + r * std::cos(a0)) + " " + detail::fmt(cy + r * std::sin(a0)) +
                 " A" + detail::fmt(r) + " " + detail::fmt(r) + " 0 " + (step > std::numbers::pi ? "1" : "0") +
                 " 1 " + detail::fmt(cx + r * std::cos(a1)) + " " +
                 detail::fmt(cy + r * std::sin(a1)) + " Z\" fill=\"" +
                 detail::group_color(qs[s] / per_group) + "\"/>";
        }
      }
      svg += "</g>\n";
    }
  for (std::size_t g = 0; g < contrast_groups; ++g) {
    const double y = plot_h + legend_row * static_cast<double>(g);
    svg += "<rect x=\"" + detail::fmt(margin) + "\" y=\"" + detail::fmt(y) +
           "\" width=\"12\" height=\"12\" fill=\"" + detail::group_color(g) + "\"/>";
    svg += "<text x=\"" + detail::fmt(margin + 18) + "\" y=\"" + detail::fmt(y + 10) +
           "\" font-size=\"11\" font-family=\"sans-serif\">group " + std::to_string(g + 1) +
           ": contrasts " + std::to_string(g * per_group + 1) + "-" +
           std::to_string((g + 1) * per_group) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace teusqa
