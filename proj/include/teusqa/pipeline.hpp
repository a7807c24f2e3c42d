#pragma once

// End-to-end evaluation used by the command-line tool and the acceptance suite.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "teusqa/config.hpp"
#include "teusqa/fisher.hpp"
#include "teusqa/io.hpp"
#include "teusqa/montecarlo.hpp"
#include "teusqa/phantom.hpp"

namespace teusqa {

/// Ground truth plus the quantities shared by every pattern of a sweep.
struct Scenario {
  ParameterMap truth;
  CoilMaps coils;
  SequenceSettings settings;
  PriorSpec prior;
  double sigma = 0.0;  // per unitary sample on the full grid
  std::optional<Grid> analysis_grid;
  std::uint64_t pattern_seed = 0;
};

inline Scenario make_scenario(const RunConfig& c, bool fluid_default) {
  c.validate();
  Scenario s;
  std::tie(s.truth, s.coils) = build_phantom(c, fluid_default);
  s.settings = c.sequence;
  s.prior = c.prior;
  s.sigma = sigma_from_snr(s.truth, s.coils, s.settings, c.snr);
  s.analysis_grid = c.analysis_grid;
  s.pattern_seed = c.pattern_seed();
  return s;
}

/// Predicted time efficiency of one (kind, R). With an analysis grid, the pattern
/// is generated there and the Fisher information is compensated for the smaller
/// grid; the scan time always follows the full-grid pattern.
inline io::TeusqaRow evaluate_pattern(const Scenario& s, PatternKind kind, std::size_t r1,
                                      std::size_t r2) {
  PatternSpec spec{kind, r1, r2, s.truth.grid, s.settings.contrast_count(), s.pattern_seed};
  const auto full = generate(spec);
  const double t_scan = scan_time(full, s.settings);
  io::TeusqaRow row{kind, r1, r2, {}, true};
  if (!s.analysis_grid || *s.analysis_grid == s.truth.grid) {
    row.report = evaluate_teusqa(s.truth, s.coils, full, s.settings, s.prior, s.sigma,
                                 tissue_roi(s.truth), t_scan);
    return row;
  }
  const Grid g = *s.analysis_grid;
  spec.grid = g;
  const auto small = generate(spec);
  const auto map = downsample_nearest(s.truth, g);
  const auto coils = downsample_nearest(s.coils, g);
  row.report = evaluate_teusqa(map, coils, small, s.settings, s.prior,
                               sigma_on_grid(s.sigma, s.truth.grid, g), tissue_roi(map), t_scan,
                               compensation_factor(s.truth.grid, g));
  return row;
}

/// Every (kind, R) pair; pairs a lattice kind cannot realise on the grid are kept
/// as infeasible rows.
inline std::vector<io::TeusqaRow> sweep(const Scenario& s, const std::vector<PatternKind>& kinds,
                                        const std::vector<AccelerationPair>& set) {
  std::vector<io::TeusqaRow> rows;
  for (auto kind : kinds)
    for (auto [r1, r2] : set) {
      try {
        rows.push_back(evaluate_pattern(s, kind, r1, r2));
      } catch (const SpecError&) {
        rows.push_back({kind, r1, r2, {}, false});
      }
    }
  return rows;
}

/// Line chart of eta against the position in the acceleration set, one polyline per
/// kind and parameter panel. Infeasible points break the line.
inline std::string eta_chart_svg(const std::vector<io::TeusqaRow>& rows,
                                 const std::vector<PatternKind>& kinds,
                                 const std::vector<AccelerationPair>& set) {
  constexpr double w = 420, h = 300, ml = 60, mr = 110, mt = 30, mb = 50;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(2 * w) +
                    "\" height=\"" + detail::fmt(h) + "\">\n";
  for (std::size_t p = 0; p < 2; ++p) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rows)
      if (r.feasible && r.report.eta[p] > 0.0) {
        lo = std::min(lo, std::log10(r.report.eta[p]));
        hi = std::max(hi, std::log10(r.report.eta[p]));
      }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-9) hi = lo + 1.0;
    const double x0 = p * w + ml, pw = w - ml - mr, ph = h - mt - mb;
    auto px = [&](std::size_t i) {
      return x0 + (set.size() > 1 ? pw * static_cast<double>(i) / static_cast<double>(set.size() - 1) : 0.5 * pw);
    };
    auto py = [&](double eta) { return mt + ph * (1.0 - (std::log10(eta) - lo) / (hi - lo)); };
    svg += "<text x=\"" + detail::fmt(x0) + "\" y=\"18\" font-size=\"13\">eta " +
           io::parameter_name(p) + " (1/s, log scale)</text>\n";
    svg += "<rect x=\"" + detail::fmt(x0) + "\" y=\"" + detail::fmt(mt) + "\" width=\"" + detail::fmt(pw) +
           "\" height=\"" + detail::fmt(ph) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (std::size_t i = 0; i < set.size(); ++i)
      svg += "<text x=\"" + detail::fmt(px(i)) + "\" y=\"" + detail::fmt(h - mb + 16) +
             "\" font-size=\"9\" text-anchor=\"middle\">" + std::to_string(set[i].first) + "x" +
             std::to_string(set[i].second) + "</text>\n";
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      const std::string color = detail::group_color(k);
      std::string path;
      bool pen = false;
      for (std::size_t i = 0; i < set.size(); ++i) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const io::TeusqaRow& r) {
          return r.kind == kinds[k] && r.r1 == set[i].first && r.r2 == set[i].second;
        });
        if (it == rows.end() || !it->feasible || !(it->report.eta[p] > 0.0)) {
          pen = false;
          continue;
        }
        path += (pen ? " L" : " M") + detail::fmt(px(i)) + " " + detail::fmt(py(it->report.eta[p]));
        pen = true;
      }
      if (!path.empty())
        svg += "<path d=\"" + path.substr(1) + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
      svg += "<text x=\"" + detail::fmt(x0 + pw + 8) + "\" y=\"" + detail::fmt(mt + 14 * (k + 1)) +
             "\" font-size=\"11\" fill=\"" + color + "\">" + std::string(to_string(kinds[k])) + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

/// Phantom description as JSON, keys sorted.
inline io::Json phantom_spec_json(const PhantomSpec& spec) {
  io::Json tubes = io::Json::array();
  for (const auto& t : spec.tubes)
    tubes.push_back({{"center", {t.center1, t.center2}},
                     {"m0", {t.m0.real(), t.m0.imag()}},
                     {"radius", t.radius},
                     {"t1_ms", t.t1_ms},
                     {"t2_ms", t.t2_ms}});
  const auto& b = spec.background;
  return {{"background", {{"m0", {b.re_m0, b.im_m0}}, {"t1_ms", b.t1()}, {"t2_ms", b.t2()}}},
          {"grid", {spec.grid.n1, spec.grid.n2}},
          {"tubes", std::move(tubes)}};
}

}  // namespace teusqa
