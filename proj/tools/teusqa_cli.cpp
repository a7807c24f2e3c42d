// teusqa: pattern generation, TEUSQA evaluation, Monte-Carlo verification and
// MAP estimation from the command line.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "teusqa.hpp"

namespace fs = std::filesystem;
using namespace teusqa;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kIo = 3,
  kNumerical = 4,
  kFlagged = 5,
};

// Flags shared by every command. Set flags override the config file.
struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::vector<std::size_t> grid;
  std::vector<std::size_t> analysis_grid;
  double snr = 0.0;
  std::string kind;
  std::vector<std::string> kinds;
  std::vector<std::size_t> r;
  std::uint64_t pattern_seed = 0;
  std::string background;
  std::size_t coils = 0;
  std::string out = ".";

  CLI::Option* seed_opt = nullptr;
  CLI::Option* snr_opt = nullptr;
  CLI::Option* pattern_seed_opt = nullptr;
  CLI::Option* coils_opt = nullptr;
};

void add_common(CLI::App* app, Common& c, bool multi_kind = false) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  c.seed_opt = app->add_option("--seed", c.seed, "global seed");
  app->add_option("--grid", c.grid, "grid extents n1 n2")->expected(2);
  app->add_option("--analysis-grid", c.analysis_grid, "downsized analysis grid n1 n2")->expected(2);
  c.snr_opt = app->add_option("--snr", c.snr, "signal-to-noise ratio");
  if (multi_kind)
    app->add_option("--kind", c.kinds, "pattern kinds")->expected(1, 6);
  else
    app->add_option("--kind", c.kind, "pattern kind");
  app->add_option("--r", c.r, "acceleration factors r1 r2")->expected(2);
  c.pattern_seed_opt = app->add_option("--pattern-seed", c.pattern_seed, "pattern seed (defaults to --seed)");
  app->add_option("--background", c.background, "phantom background: empty or fluid");
  c.coils_opt = app->add_option("--coils", c.coils, "coil count");
  app->add_option("--out", c.out, "output directory");
}

Grid to_grid(const std::vector<std::size_t>& v, const char* what) {
  if (v.size() != 2 || v[0] < 1 || v[1] < 1)
    throw ConfigError(std::string(what) + " needs two positive integers");
  return {v[0], v[1]};
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed_opt->count()) cfg.seed = c.seed;
  if (!c.grid.empty()) cfg.grid = to_grid(c.grid, "--grid");
  if (!c.analysis_grid.empty()) cfg.analysis_grid = to_grid(c.analysis_grid, "--analysis-grid");
  if (c.snr_opt->count()) cfg.snr = c.snr;
  if (!c.kind.empty()) cfg.pattern.kind = detail::parse_kind(io::Json(c.kind), "--kind");
  if (!c.kinds.empty()) {
    cfg.sweep.kinds.clear();
    for (const auto& k : c.kinds) cfg.sweep.kinds.push_back(detail::parse_kind(io::Json(k), "--kind"));
    cfg.pattern.kind = cfg.sweep.kinds.front();
    cfg.mc.kinds = cfg.sweep.kinds;
  }
  if (!c.r.empty()) {
    const Grid r = to_grid(c.r, "--r");
    cfg.pattern.r1 = r.n1;
    cfg.pattern.r2 = r.n2;
  }
  if (c.pattern_seed_opt->count()) cfg.pattern.seed = c.pattern_seed;
  if (!c.background.empty()) {
    if (c.background == "empty") cfg.phantom.background = Background::Empty;
    else if (c.background == "fluid") cfg.phantom.background = Background::Fluid;
    else throw ConfigError("--background must be 'empty' or 'fluid'");
  }
  if (c.coils_opt->count()) cfg.phantom.coils = c.coils;
  cfg.validate();
  return cfg;
}

fs::path out_path(const Common& c, const std::string& name) { return fs::path(c.out) / name; }

void say(const std::string& msg) { std::cerr << msg << '\n'; }

// ---- pattern ---------------------------------------------------------------

struct PatternArgs {
  Common common;
  std::size_t q = 0;
  std::vector<std::string> inputs;
  std::string name;
  std::size_t groups = 0;
  std::vector<std::size_t> window;
};

UndersamplingPattern generate_from(const RunConfig& cfg, PatternKind kind, std::size_t q) {
  auto spec = cfg.pattern_spec(kind, cfg.pattern.r1, cfg.pattern.r2, cfg.grid);
  if (q > 0) spec.contrasts = q;
  return generate(spec);
}

int pattern_gen(const PatternArgs& a) {
  const auto cfg = resolve(a.common);
  const auto p = generate_from(cfg, cfg.pattern.kind, a.q);
  const auto path = out_path(a.common, a.name.empty() ? "pattern.json" : a.name);
  io::write_pattern(path, p);
  say("wrote " + path.string() + " (" + std::to_string(p.contrasts) + " contrasts x " +
      std::to_string(p.samples_per_contrast()) + " samples)");
  return kOk;
}

int pattern_score(const PatternArgs& a) {
  std::string csv = io::discrepancy_csv_header();
  if (!a.inputs.empty()) {
    for (const auto& in : a.inputs) {
      const auto p = io::read_pattern(in);
      csv += io::discrepancy_csv_row(fs::path(in).filename().string(), p, discrepancy_l2(p));
    }
  } else {
    const auto cfg = resolve(a.common);
    const auto kinds = a.common.kinds.empty() ? std::vector<PatternKind>{cfg.pattern.kind} : cfg.sweep.kinds;
    for (auto kind : kinds) {
      const auto p = generate_from(cfg, kind, a.q);
      csv += io::discrepancy_csv_row("generated", p, discrepancy_l2(p));
    }
  }
  const auto path = out_path(a.common, a.name.empty() ? "discrepancy.csv" : a.name);
  io::write_text(path, csv);
  say("wrote " + path.string());
  return kOk;
}

int pattern_render(const PatternArgs& a) {
  UndersamplingPattern p;
  RunConfig cfg;
  if (!a.inputs.empty()) {
    if (a.inputs.size() != 1) throw ConfigError("render takes one pattern file");
    p = io::read_pattern(a.inputs.front());
  } else {
    cfg = resolve(a.common);
    p = generate_from(cfg, cfg.pattern.kind, a.q);
  }
  std::size_t groups = a.groups;
  if (groups == 0) groups = a.inputs.empty() && a.q == 0 ? cfg.sequence.inversion_delays_ms.size() : 1;
  RenderWindow w;
  if (!a.window.empty()) {
    if (a.window.size() != 4) throw ConfigError("--window needs k1 k2 n1 n2");
    w = {a.window[0], a.window[1], a.window[2], a.window[3]};
  }
  const auto path = out_path(a.common, a.name.empty() ? "pattern.svg" : a.name);
  io::write_text(path, render_svg(p, groups, w));
  say("wrote " + path.string());
  return kOk;
}

// ---- teusqa ----------------------------------------------------------------

struct TeusqaArgs {
  Common common;
  bool svg = false;
  bool variance = false;
};

int teusqa_eval(const TeusqaArgs& a) {
  const auto cfg = resolve(a.common);
  const auto s = make_scenario(cfg, false);
  const auto row = evaluate_pattern(s, cfg.pattern.kind, cfg.pattern.r1, cfg.pattern.r2);
  io::write_text(out_path(a.common, "teusqa.csv"), io::teusqa_csv({row}));
  io::write_text(out_path(a.common, "teusqa.json"), io::teusqa_json({row}));
  if (a.variance) {
    const Grid g = cfg.analysis_grid.value_or(cfg.grid);
    io::write_text(out_path(a.common, "variance.csv"), io::variance_csv(row.report, g));
  }
  say("eta T1 " + io::number(row.report.eta[0]) + " 1/s, eta T2 " + io::number(row.report.eta[1]) +
      " 1/s, scan time " + io::number(row.report.scan_time_s) + " s");
  return kOk;
}

int teusqa_sweep(const TeusqaArgs& a) {
  const auto cfg = resolve(a.common);
  const auto s = make_scenario(cfg, false);
  const auto rows = sweep(s, cfg.sweep.kinds, cfg.sweep.acceleration_set);
  io::write_text(out_path(a.common, "teusqa.csv"), io::teusqa_csv(rows));
  io::write_text(out_path(a.common, "teusqa.json"), io::teusqa_json(rows));
  std::string disc = io::discrepancy_csv_header();
  for (auto kind : cfg.sweep.kinds)
    for (auto [r1, r2] : cfg.sweep.acceleration_set) {
      try {
        const auto p = generate(cfg.pattern_spec(kind, r1, r2, cfg.grid));
        disc += io::discrepancy_csv_row("generated", p, discrepancy_l2(p));
      } catch (const SpecError&) {
        UndersamplingPattern p;
        p.kind = kind;
        p.r1 = r1;
        p.r2 = r2;
        p.grid = cfg.grid;
        p.contrasts = cfg.sequence.contrast_count();
        disc += io::discrepancy_csv_row("infeasible", p, {std::numeric_limits<double>::quiet_NaN(), 0, 3});
      }
    }
  io::write_text(out_path(a.common, "discrepancy.csv"), disc);
  if (a.svg)
    io::write_text(out_path(a.common, "eta.svg"), eta_chart_svg(rows, cfg.sweep.kinds, cfg.sweep.acceleration_set));

  // Report where eta fails to decline along the acceleration set.
  for (auto kind : cfg.sweep.kinds)
    for (std::size_t p = 0; p < 2; ++p) {
      double prev = std::numeric_limits<double>::infinity();
      std::size_t prev_r = 0;
      for (const auto& row : rows) {
        if (row.kind != kind || !row.feasible) continue;
        const std::size_t r = row.r1 * row.r2;
        if (r > prev_r && row.report.eta[p] > prev)
          say(std::string("note: ") + std::string(to_string(kind)) + " " + io::parameter_name(p) +
              " eta rises at R = [" + std::to_string(row.r1) + "," + std::to_string(row.r2) + "]");
        prev = row.report.eta[p];
        prev_r = r;
      }
    }
  say("wrote " + std::to_string(rows.size() * 2) + " report rows to " + a.common.out);
  return kOk;
}

// ---- mc --------------------------------------------------------------------

struct McArgs {
  Common common;
  std::size_t realizations = 0;
  std::uint64_t master_seed = 0;
  std::string init;
  std::string denominator;
  bool no_runtime = false;
  CLI::Option* realizations_opt = nullptr;
  CLI::Option* master_seed_opt = nullptr;
};

int mc_run(const McArgs& a) {
  RunConfig cfg = resolve(a.common);
  if (a.realizations_opt->count()) cfg.mc.realizations = a.realizations;
  if (a.master_seed_opt->count()) cfg.mc.master_seed = a.master_seed;
  if (!a.init.empty()) {
    if (a.init == "standard") cfg.mc.init_at_truth = false;
    else if (a.init == "ground_truth") cfg.mc.init_at_truth = true;
    else throw ConfigError("--init must be 'standard' or 'ground_truth'");
  }
  if (!a.denominator.empty()) {
    if (a.denominator == "truth") cfg.mc.denominator = CvDenominator::GroundTruth;
    else if (a.denominator == "mean") cfg.mc.denominator = CvDenominator::RealizationMean;
    else throw ConfigError("--denominator must be 'truth' or 'mean'");
  }
  if (!a.common.r.empty()) cfg.mc.acceleration_set = {{cfg.pattern.r1, cfg.pattern.r2}};
  if (!a.common.kind.empty()) cfg.mc.kinds = {cfg.pattern.kind};
  if (a.no_runtime) cfg.mc.record_runtime = false;
  cfg.validate();

  auto [truth, coils] = build_phantom(cfg, true);
  const auto mc = cfg.mc_config();
  std::string csv = io::mc_voxel_header();
  io::Json summary = io::Json::array();
  bool flagged = false;
  for (auto kind : cfg.mc.kinds)
    for (auto [r1, r2] : cfg.mc.acceleration_set) {
      const auto pattern = generate(cfg.pattern_spec(kind, r1, r2, cfg.grid));
      const auto rep = run_mc(truth, coils, pattern, cfg.sequence, cfg.prior, mc);
      csv += io::mc_voxel_rows(rep, cfg.grid);
      for (auto& e : io::mc_summary(rep, cfg.mc.record_runtime)) summary.push_back(e);
      flagged = flagged || rep.flagged;
      say(std::string(to_string(kind)) + " [" + std::to_string(r1) + "," + std::to_string(r2) +
          "]: median ratio T1 " + io::number(rep.ratio_quartiles[0].q50) + ", T2 " +
          io::number(rep.ratio_quartiles[1].q50) + ", converged " + std::to_string(rep.converged) + "/" +
          std::to_string(rep.realizations));
    }
  io::write_text(out_path(a.common, "mc_voxels.csv"), csv);
  io::write_text(out_path(a.common, "mc_summary.json"), summary.dump(2) + "\n");
  if (flagged) {
    say("more than 10% of realizations did not converge; report flagged");
    return kFlagged;
  }
  return kOk;
}

// ---- estimate --------------------------------------------------------------

struct EstimateArgs {
  Common common;
  std::string kspace, pattern, coils;
  double sigma = 0.0;
  std::string init;
  CLI::Option* sigma_opt = nullptr;
};

int estimate_run(const EstimateArgs& a) {
  const RunConfig cfg = resolve(a.common);
  KSpaceData data;
  CoilMaps coils;
  double sigma = 0.0;
  std::optional<ParameterMap> truth;
  if (!a.kspace.empty()) {
    if (a.pattern.empty() || a.coils.empty() || !a.sigma_opt->count())
      throw ConfigError("--kspace needs --pattern, --coil-maps and --sigma");
    const auto pattern = io::read_pattern(a.pattern);
    data = io::read_kspace(a.kspace, pattern);
    coils = io::read_coils(a.coils);
    sigma = a.sigma;
  } else {
    // Synthetic data: phantom, configured pattern and one noise realization.
    auto [map, c] = build_phantom(cfg, true);
    coils = std::move(c);
    const auto pattern = generate(cfg.pattern_spec(cfg.pattern.kind, cfg.pattern.r1, cfg.pattern.r2, cfg.grid));
    sigma = a.sigma_opt->count() ? a.sigma : sigma_from_snr(map, coils, cfg.sequence, cfg.snr);
    data = add_noise(forward(map, coils, pattern, cfg.sequence), sigma, realization_key(cfg.mc_seed(), 0));
    io::write_parameter_map(out_path(a.common, "truth.f64"), map);
    truth = std::move(map);
  }
  EstimatorConfig est = cfg.estimator;
  if (a.init == "ground_truth") {
    if (!truth) throw ConfigError("--init ground_truth needs synthetic data");
    est.init_mode = InitMode::GroundTruth;
    est.initial = truth;
  } else if (!a.init.empty() && a.init != "standard") {
    throw ConfigError("--init must be 'standard' or 'ground_truth'");
  }
  const auto res = map_estimate(data, coils, cfg.sequence, cfg.prior, sigma, est);
  io::write_parameter_map(out_path(a.common, "estimate.f64"), res.estimate);
  io::write_text(out_path(a.common, "convergence.csv"), io::convergence_csv(res));
  say(std::string(res.converged ? "converged" : "not converged") + " after " +
      std::to_string(res.iterations) + " iterations, objective " + io::number(res.objective));
  return res.converged ? kOk : kFlagged;
}

// ---- phantom ---------------------------------------------------------------

struct PhantomArgs {
  Common common;
  bool full_kspace = false;
};

int phantom_make(const PhantomArgs& a) {
  const RunConfig cfg = resolve(a.common);
  const bool fluid = cfg.phantom.background == Background::Fluid;
  const auto spec = desk_phantom(cfg.grid, fluid);
  for (auto [i, j] : overlapping_tubes(spec))
    say("warning: tubes " + std::to_string(i) + " and " + std::to_string(j) + " overlap; the first wins");
  auto [map, coils] = build_phantom(cfg, false);
  io::write_text(out_path(a.common, "phantom.json"), phantom_spec_json(spec).dump(2) + "\n");
  io::write_parameter_map(out_path(a.common, "map.f64"), map);
  io::write_coils(out_path(a.common, "coils.f64"), coils);
  if (a.full_kspace) {
    const auto full = full_sampling(cfg.grid, cfg.sequence.contrast_count());
    io::write_pattern(out_path(a.common, "full_pattern.json"), full);
    io::write_kspace(out_path(a.common, "kspace_full.f64"), forward(map, coils, full, cfg.sequence));
  }
  say("wrote phantom to " + a.common.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-efficiency analysis of undersampling patterns for quantitative MRI"};
  app.require_subcommand(1);
  int status = kOk;

  PatternArgs pgen_args, pscore_args, prender_args;
  auto* pattern = app.add_subcommand("pattern", "generate, score and render undersampling patterns");
  pattern->require_subcommand(1);
  auto* pgen = pattern->add_subcommand("gen", "write a pattern JSON");
  auto* pscore = pattern->add_subcommand("score", "L2-star discrepancy of patterns");
  auto* prender = pattern->add_subcommand("render", "SVG glyph plot of a pattern");
  for (auto [sub, args] : {std::pair{pgen, &pgen_args}, {pscore, &pscore_args}, {prender, &prender_args}}) {
    add_common(sub, args->common, sub == pscore);
    sub->add_option("--q", args->q, "contrast count (defaults to the sequence's)");
    sub->add_option("--name", args->name, "output file name");
  }
  pscore->add_option("--pattern", pscore_args.inputs, "pattern JSON inputs");
  prender->add_option("--pattern", prender_args.inputs, "pattern JSON input");
  prender->add_option("--groups", prender_args.groups, "contrast groups for colouring");
  prender->add_option("--window", prender_args.window, "crop k1 k2 n1 n2")->expected(4);
  pgen->callback([&] { status = pattern_gen(pgen_args); });
  pscore->callback([&] { status = pattern_score(pscore_args); });
  prender->callback([&] { status = pattern_render(prender_args); });

  TeusqaArgs teval_args, tsweep_args;
  auto* teusqa = app.add_subcommand("teusqa", "predicted time efficiency");
  teusqa->require_subcommand(1);
  auto* teval = teusqa->add_subcommand("eval", "one pattern");
  auto* tsweep = teusqa->add_subcommand("sweep", "all kinds over the acceleration set");
  add_common(teval, teval_args.common);
  add_common(tsweep, tsweep_args.common, true);
  teval->add_flag("--variance", teval_args.variance, "also write per-voxel variances");
  tsweep->add_flag("--svg", tsweep_args.svg, "also write an eta chart");
  teval->callback([&] { status = teusqa_eval(teval_args); });
  tsweep->callback([&] { status = teusqa_sweep(tsweep_args); });

  McArgs mca;
  auto* mc = app.add_subcommand("mc", "Monte-Carlo verification");
  mc->require_subcommand(1);
  auto* mrun = mc->add_subcommand("run", "run realizations and compare with the prediction");
  add_common(mrun, mca.common);
  mca.realizations_opt = mrun->add_option("--realizations", mca.realizations, "noise realizations");
  mca.master_seed_opt = mrun->add_option("--master-seed", mca.master_seed, "noise seed");
  mrun->add_option("--init", mca.init, "standard or ground_truth");
  mrun->add_option("--denominator", mca.denominator, "truth or mean");
  mrun->add_flag("--no-runtime", mca.no_runtime, "write runtime_s as 0");
  mrun->callback([&] { status = mc_run(mca); });

  EstimateArgs esa;
  auto* estimate = app.add_subcommand("estimate", "MAP parameter estimation");
  estimate->require_subcommand(1);
  auto* erun = estimate->add_subcommand("run", "estimate maps from k-space");
  add_common(erun, esa.common);
  erun->add_option("--kspace", esa.kspace, "k-space array")->check(CLI::ExistingFile);
  erun->add_option("--pattern", esa.pattern, "pattern JSON")->check(CLI::ExistingFile);
  erun->add_option("--coil-maps", esa.coils, "coil sensitivity array")->check(CLI::ExistingFile);
  esa.sigma_opt = erun->add_option("--sigma", esa.sigma, "noise standard deviation");
  erun->add_option("--init", esa.init, "standard or ground_truth");
  erun->callback([&] { status = estimate_run(esa); });

  PhantomArgs pha;
  auto* phantom = app.add_subcommand("phantom", "synthetic phantom");
  phantom->require_subcommand(1);
  auto* pmake = phantom->add_subcommand("make", "write map, coils and description");
  add_common(pmake, pha.common);
  pmake->add_flag("--full-kspace", pha.full_kspace, "also write fully sampled k-space");
  pmake->callback([&] { status = phantom_make(pha); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const SpecError& e) {
    std::cerr << "pattern error: " << e.what() << '\n';
    return kConfig;
  } catch (const io::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return status;
}
