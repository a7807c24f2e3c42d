// Acceptance checks, one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"

using namespace teusqa;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const char* name(PatternKind k) { return to_string(k).data(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1: MC ratio band -------------------------------------------------------

Outcome mc_ratio_band() {
  const Grid g{16, 16};
  const auto s = table_one_settings();
  const auto truth = make_phantom(desk_phantom(g, true));
  const auto coils = make_coils(4, g, 0);
  const auto prior = table_one_prior();
  McConfig mc;
  mc.realizations = 100;
  mc.snr = 50.0;
  mc.master_seed = 2024;
  mc.init_at_truth = true;

  Outcome out{true, ""};
  std::map<std::string, McReport> done;  // identical patterns (all kinds at R = 1) run once
  for (auto kind : {PatternKind::Treg, PatternKind::TSreg, PatternKind::Random, PatternKind::Halton})
    for (auto [r1, r2] : std::vector<AccelerationPair>{{1, 1}, {2, 2}, {2, 4}}) {
      const auto pat = generate({kind, r1, r2, g, 72, 0});
      const auto key = io::pattern_json_text(pat).substr(io::pattern_json_text(pat).find("\"samples\""));
      if (!done.count(key)) done[key] = run_mc(truth, coils, pat, s, prior, mc);
      const auto& rep = done[key];
      for (std::size_t p = 0; p < 2; ++p) {
        const auto& q = rep.ratio_quartiles[p];
        const bool ok = q.q25 >= 0.80 && q.q75 <= 1.20 && q.q50 >= 0.85 && q.q50 <= 1.15;
        std::printf("  1: %-6s [%zu,%zu] %s  q25 %.3f  q50 %.3f  q75 %.3f  converged %zu/%zu %s\n",
                    name(kind), r1, r2, io::parameter_name(p), q.q25, q.q50, q.q75, rep.converged,
                    rep.realizations, ok ? "ok" : "OUT OF BAND");
        std::fflush(stdout);
        if (!ok) {
          out.pass = false;
          out.detail += std::string(name(kind)) + " [" + std::to_string(r1) + "," + std::to_string(r2) +
                        "] " + io::parameter_name(p) + " out of band; ";
        }
        if (rep.flagged) out.pass = false;
      }
    }
  if (out.pass) out.detail = "IQR within [0.80, 1.20] and median within [0.85, 1.15] for 12 configurations";
  return out;
}

// ---- 2: pattern ordering ------------------------------------------------------

Outcome pattern_ordering() {
  RunConfig c;
  c.grid = {24, 24};
  const auto scen = make_scenario(c, false);
  const auto set = default_acceleration_set();
  Outcome out{true, ""};
  std::size_t compared = 0;
  for (auto [r1, r2] : set) {
    if (r1 * r2 < 8) continue;  // R >= [2,4] along the acceleration set
    const auto hal = evaluate_pattern(scen, PatternKind::Halton, r1, r2);
    const double d_hal = discrepancy_l2(generate(c.pattern_spec(PatternKind::Halton, r1, r2, c.grid))).l2_star_discrepancy;
    for (auto other : {PatternKind::Regular, PatternKind::Sreg}) {
      PatternSpec spec = c.pattern_spec(other, r1, r2, c.grid);
      io::TeusqaRow row;
      double d_other;
      try {
        row = evaluate_pattern(scen, other, r1, r2);
        d_other = discrepancy_l2(generate(spec)).l2_star_discrepancy;
      } catch (const SpecError&) {
        std::printf("  2: [%zu,%zu] %s not realisable on 24x24, skipped\n", r1, r2, name(other));
        continue;
      }
      ++compared;
      for (std::size_t p = 0; p < 2; ++p) {
        const bool ok = hal.report.eta[p] >= row.report.eta[p];
        std::printf("  2: [%zu,%zu] %s eta halton %.4g vs %s %.4g %s\n", r1, r2, io::parameter_name(p),
                    hal.report.eta[p], name(other), row.report.eta[p], ok ? "ok" : "VIOLATED");
        if (!ok) {
          out.pass = false;
          out.detail += "eta " + std::string(io::parameter_name(p)) + " [" + std::to_string(r1) + "," +
                        std::to_string(r2) + "] halton < " + name(other) + "; ";
        }
      }
      const bool dok = d_hal < d_other;
      std::printf("  2: [%zu,%zu] discrepancy halton %.5f vs %s %.5f %s\n", r1, r2, d_hal, name(other), d_other,
                  dok ? "ok" : "VIOLATED");
      std::fflush(stdout);
      if (!dok) {
        out.pass = false;
        out.detail += "discrepancy [" + std::to_string(r1) + "," + std::to_string(r2) + "] vs " + name(other) + "; ";
      }
    }
  }
  if (compared == 0) out.pass = false;
  if (out.pass) out.detail = std::to_string(compared) + " (R, kind) comparisons, eta and discrepancy ordered";
  return out;
}

// ---- 3: dense oracle ---------------------------------------------------------

Outcome dense_oracle() {
  const Grid g{6, 6};
  const auto s = table_one_settings();
  const auto map = make_phantom(desk_phantom(g, true));
  const auto coils = make_coils(2, g, 1);
  double worst = 0;
  for (auto kind : kAllPatternKinds) {
    const auto pat = generate({kind, 2, 3, g, 72, 5});
    const auto f = assemble_fisher(map, coils, pat, s, 0.4);
    const auto dense = oracle::dense_fisher(map, coils, pat, s, 0.4);
    worst = std::max(worst, (f.info - dense).norm() / dense.norm());
  }
  return {worst < 1e-8, "max relative Frobenius error " + fmt("%.2e", worst) + " over 6 kinds"};
}

// ---- 4: prior ceiling and degenerate voxel --------------------------------------

Outcome prior_ceiling() {
  const Grid g{8, 8};
  const auto s = table_one_settings();
  auto map = make_phantom(desk_phantom(g, true));
  const std::size_t zero = g.index(3, 5);
  map.values[zero].re_m0 = map.values[zero].im_m0 = 0.0;
  const auto coils = make_coils(4, g, 0);
  const auto pat = generate({PatternKind::Halton, 2, 2, g, 72, 0});
  const double sigma = sigma_from_snr(map, coils, s, 50.0);
  const auto prior = table_one_prior();
  const auto d = posterior_variances(assemble_fisher(map, coils, pat, s, sigma), prior);
  const double pv[4] = {400.0, 400.0, std::log(10.0) * std::log(10.0), std::log(7.0) * std::log(7.0)};
  double rel_relax = 0, rel_m0 = 0;
  for (std::size_t p = 0; p < 4; ++p) {
    const double rel = std::abs(d(static_cast<Eigen::Index>(4 * zero + p)) / pv[p] - 1.0);
    (p < 2 ? rel_m0 : rel_relax) = std::max(p < 2 ? rel_m0 : rel_relax, rel);
  }
  bool others_below = true;
  for (std::size_t x = 0; x < g.size(); ++x) {
    if (x == zero) continue;
    for (std::size_t p = 0; p < 4; ++p) others_below &= d(static_cast<Eigen::Index>(4 * x + p)) < pv[p];
  }
  std::printf("  4: M0 = 0 voxel: ln T1/ln T2 variance rel. deviation from prior %.2e; Re/Im M0 variance %.4g, %.4g (prior 400)\n",
              rel_relax, d(static_cast<Eigen::Index>(4 * zero)), d(static_cast<Eigen::Index>(4 * zero + 1)));
  std::string detail = "relaxation entries at prior (" + fmt("%.1e", rel_relax) + "); M0 entries " +
                       (rel_m0 < 1e-6 ? "at prior" : "below prior by " + fmt("%.4f", rel_m0) + " relative, the data inform M0 at an M0 = 0 voxel") +
                       "; other voxels " + (others_below ? "strictly below prior" : "NOT all below prior");
  return {rel_relax < 1e-6 && rel_m0 < 1e-6 && others_below, detail};
}

// ---- 5: EPG vs isochromats ----------------------------------------------------

Outcome epg_correctness() {
  const auto s = table_one_settings();
  double worst = 0;
  for (double t1 : {200.0, 500.0, 1000.0, 1600.0, 2500.0})
    for (double t2 : {20.0, 50.0, 100.0, 200.0, 400.0}) {
      const auto epg = unit_signal(std::log(t1), std::log(t2), s);
      const auto ref = oracle::bloch_signal(t1, t2, s);
      double scale = 0, diff = 0;
      for (std::size_t q = 0; q < ref.size(); ++q) {
        scale = std::max(scale, std::abs(ref[q]));
        diff = std::max(diff, std::abs(epg[q] - ref[q]));
      }
      worst = std::max(worst, diff / scale);
    }
  return {worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " over 25 (T1, T2) pairs"};
}

// ---- 6: Jacobians --------------------------------------------------------------

Outcome jacobian_checks() {
  const Grid g{4, 4};
  const auto s = table_one_settings();
  auto map = make_phantom(desk_phantom(g, true));
  SplitMix64 rng(3);
  for (auto& v : map.values) {
    v.re_m0 += rng.uniform();
    v.ln_t1 += 0.3 * (rng.uniform() - 0.5);
  }
  const auto coils = make_coils(2, g, 2);
  const auto pat = generate({PatternKind::Halton, 2, 1, g, 72, 1});
  double enc = 0;
  for (std::size_t x : {0u, 5u, 15u}) {
    const auto block = jacobian_block(map, coils, pat, s, x);
    for (std::size_t p = 0; p < kParamCount; ++p) {
      double num = 0, den = 0;
      std::vector<Complex> fd(block.size());
      for (std::size_t i = 0; i < block.size(); ++i) {
        std::function<Complex(double)> f = [&](double v) {
          auto m = map;
          m.values[x][p] = v;
          return forward(m, coils, pat, s).values[i];
        };
        if (i % 97 != 0) continue;  // a spread subset of the outputs keeps this quick
        fd[i] = oracle::richardson(f, map.values[x][p], 1e-3);
        num = std::max(num, std::abs(block[i][p] - fd[i]));
        den = std::max(den, std::abs(fd[i]));
      }
      enc = std::max(enc, num / den);
    }
  }
  const double sigma = sigma_from_snr(map, coils, s, 50.0);
  const auto z = add_noise(forward(map, coils, pat, s), sigma, 1);
  const auto prior = table_one_prior();
  const MapProblem problem(z, coils, s, prior, sigma);
  auto theta = map;
  for (auto& v : theta.values) v.ln_t2 += 0.1;
  const Vector grad = problem.gradient(theta);
  double est = 0;
  const double gmax = grad.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const auto x = static_cast<std::size_t>(i) / kParamCount, p = static_cast<std::size_t>(i) % kParamCount;
    std::function<double(double)> f = [&](double v) {
      auto t = theta;
      t.values[x][p] = v;
      return problem.objective(t);
    };
    const double fd = oracle::richardson(f, theta.values[x][p], 1e-3);
    est = std::max(est, std::abs(grad(i) - fd) / std::max(std::abs(fd), 1e-3 * gmax));
  }
  return {enc < 1e-4 && est < 1e-4,
          "encoding Jacobian " + fmt("%.2e", enc) + ", objective gradient " + fmt("%.2e", est) + " relative error"};
}

// ---- 7: compensation -----------------------------------------------------------

Outcome compensation() {
  RunConfig c;
  c.grid = {24, 24};
  auto scen = make_scenario(c, false);
  scen.truth = ParameterMap(c.grid, TissueParams::from_relaxation({5.0, 0.0}, 900.0, 90.0));
  scen.coils = CoilMaps(1, c.grid);
  scen.sigma = sigma_from_snr(scen.truth, scen.coils, scen.settings, 50.0);
  double worst = 0;
  for (auto kind : {PatternKind::Regular, PatternKind::Treg, PatternKind::Halton})
    for (auto [r1, r2] : std::vector<AccelerationPair>{{1, 1}, {2, 2}}) {
      scen.analysis_grid.reset();
      const auto full = evaluate_pattern(scen, kind, r1, r2);
      scen.analysis_grid = Grid{12, 12};
      const auto small = evaluate_pattern(scen, kind, r1, r2);
      for (std::size_t p = 0; p < 2; ++p) worst = std::max(worst, std::abs(small.report.cv[p] / full.report.cv[p] - 1));
    }
  return {worst < 0.01, "max relative CV difference 12x12 (c = 4) vs 24x24: " + fmt("%.2e", worst)};
}

// ---- 8: scan time ----------------------------------------------------------------

Outcome scan_time_formula() {
  const auto p = generate({PatternKind::Random, 32, 1, {64, 128}, 72, 0});
  const double t = scan_time(p, table_one_settings());
  return {std::abs(t - 2613.248) < 1e-9 && p.samples_per_contrast() == 256,
          fmt("%.3f s", t) + " (" + fmt("%.1f min", t / 60) + ")"};
}

// ---- 9: determinism ----------------------------------------------------------------

std::string pipeline_outputs() {
  RunConfig c;
  c.grid = {12, 12};
  c.seed = 17;
  std::string out;
  for (auto kind : kAllPatternKinds) {
    const auto pat = generate(c.pattern_spec(kind, 2, 3, c.grid));
    out += io::pattern_json_text(pat) + render_svg(pat, 4);
    out += io::discrepancy_csv_row("x", pat, discrepancy_l2(pat));
  }
  const auto scen = make_scenario(c, false);
  std::vector<io::TeusqaRow> rows;
  for (auto kind : {PatternKind::Halton, PatternKind::TSreg}) rows.push_back(evaluate_pattern(scen, kind, 2, 2));
  out += io::teusqa_csv(rows) + io::teusqa_json(rows) + io::variance_csv(rows[0].report, c.grid);

  const auto [truth, coils] = build_phantom(c, true);
  const auto pat = generate(c.pattern_spec(PatternKind::Halton, 2, 2, c.grid));
  c.mc.realizations = 3;
  const auto rep = run_mc(truth, coils, pat, c.sequence, c.prior, c.mc_config());
  out += io::mc_voxel_rows(rep, c.grid) + io::mc_summary(rep, false).dump();

  const double sigma = sigma_from_snr(truth, coils, c.sequence, c.snr);
  const auto z = add_noise(forward(truth, coils, pat, c.sequence), sigma, 5);
  const auto res = map_estimate(z, coils, c.sequence, c.prior, sigma, c.estimator);
  out += io::convergence_csv(res);
  for (const auto& v : res.estimate.values)
    for (std::size_t p = 0; p < kParamCount; ++p) out += io::number(v[p]) + ",";
  for (auto v : coils.values) out += io::number(v.real()) + io::number(v.imag());
  return out;
}

Outcome determinism() {
  std::string a, b, c4;
  {
    ScopedThreadCount t(1);
    a = pipeline_outputs();
    b = pipeline_outputs();
  }
  {
    ScopedThreadCount t(4);
    c4 = pipeline_outputs();
  }
  const bool ok = a == b && a == c4;
  return {ok, std::to_string(a.size()) + " bytes of pattern, report, MC, estimate and phantom output; " +
                  (a == b ? "repeat identical" : "repeat DIFFERS") + ", " + (a == c4 ? "1 vs 4 threads identical" : "1 vs 4 threads DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"MC ratio band (16x16, 100 realizations)", mc_ratio_band},
      {"Pattern ordering (24x24)", pattern_ordering},
      {"Dense-oracle Fisher equivalence", dense_oracle},
      {"Prior ceiling and degenerate voxel", prior_ceiling},
      {"EPG vs isochromat oracle", epg_correctness},
      {"Jacobian checks", jacobian_checks},
      {"Downsampling compensation", compensation},
      {"Scan-time formula", scan_time_formula},
      {"Determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(n)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char buf[1024];
    std::snprintf(buf, sizeof buf, "%s %d %s: %s [%.1f s]", o.pass ? "PASS" : "FAIL", n, criteria[i].first,
                  o.detail.c_str(), secs);
    std::printf("%s\n", buf);
    std::fflush(stdout);
    lines.emplace_back(buf);
    failures += !o.pass;
  }
  std::printf("\nSummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return failures == 0 ? 0 : 1;
}
