#pragma once

// Run configuration: a versioned JSON document with one section per module.
// Unknown keys are rejected at every level; absent keys keep their defaults.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "teusqa/io.hpp"
#include "teusqa/montecarlo.hpp"
#include "teusqa/phantom.hpp"

namespace teusqa {

inline constexpr const char* kConfigSchema = "teusqa-config/1";

using AccelerationPair = std::pair<std::size_t, std::size_t>;

inline std::vector<AccelerationPair> default_acceleration_set() {
  return {{1, 1}, {1, 2}, {2, 2}, {2, 4}, {3, 3}, {3, 4}, {4, 4}, {4, 6}, {8, 4}, {6, 6}, {8, 6}};
}

inline std::vector<PatternKind> all_pattern_kinds() {
  return {kAllPatternKinds.begin(), kAllPatternKinds.end()};
}

enum class Background { Default, Empty, Fluid };

struct RunConfig {
  std::uint64_t seed = 0;
  Grid grid{16, 16};
  std::optional<Grid> analysis_grid;
  double snr = 50.0;

  struct {
    PatternKind kind = PatternKind::Halton;
    std::size_t r1 = 2, r2 = 2;
    std::optional<std::uint64_t> seed;
    std::size_t contrast_groups = 4;
  } pattern;

  SequenceSettings sequence = table_one_settings();
  PriorSpec prior = table_one_prior();

  struct {
    Background background = Background::Default;
    std::size_t coils = 4;
    std::optional<std::uint64_t> coil_seed;
    double coil_width = 0.6;
  } phantom;

  struct {
    std::size_t realizations = 100;
    std::optional<std::uint64_t> master_seed;
    std::vector<AccelerationPair> acceleration_set{{2, 2}};
    std::vector<PatternKind> kinds{PatternKind::Halton};
    CvDenominator denominator = CvDenominator::GroundTruth;
    bool init_at_truth = false;
    bool record_runtime = true;
  } mc;

  EstimatorConfig estimator;

  struct {
    std::vector<PatternKind> kinds = all_pattern_kinds();
    std::vector<AccelerationPair> acceleration_set = default_acceleration_set();
  } sweep;

  [[nodiscard]] std::uint64_t pattern_seed() const { return pattern.seed.value_or(seed); }
  [[nodiscard]] std::uint64_t coil_seed() const { return phantom.coil_seed.value_or(seed); }
  [[nodiscard]] std::uint64_t mc_seed() const { return mc.master_seed.value_or(seed); }

  [[nodiscard]] PatternSpec pattern_spec(PatternKind kind, std::size_t r1, std::size_t r2,
                                         Grid g) const {
    PatternSpec s;
    s.kind = kind;
    s.r1 = r1;
    s.r2 = r2;
    s.grid = g;
    s.contrasts = sequence.contrast_count();
    s.seed = pattern_seed();
    return s;
  }

  [[nodiscard]] McConfig mc_config() const {
    McConfig m;
    m.realizations = mc.realizations;
    m.snr = snr;
    m.master_seed = mc_seed();
    m.acceleration_set = mc.acceleration_set;
    m.denominator = mc.denominator;
    m.estimator = estimator;
    m.init_at_truth = mc.init_at_truth;
    return m;
  }

  void validate() const {
    if (grid.n1 < 1 || grid.n2 < 1) throw ConfigError("grid extents must be positive");
    if (analysis_grid && (analysis_grid->n1 < 1 || analysis_grid->n2 < 1 ||
                          analysis_grid->n1 > grid.n1 || analysis_grid->n2 > grid.n2))
      throw ConfigError("analysis_grid must be non-empty and no larger than grid");
    if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("snr must be positive");
    if (pattern.r1 < 1 || pattern.r2 < 1) throw ConfigError("acceleration factors must be positive");
    if (pattern.contrast_groups < 1) throw ConfigError("contrast_groups must be >= 1");
    try {
      sequence.validate();
      (void)prior.precision();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    if (phantom.coils < 1) throw ConfigError("phantom.coils must be >= 1");
    if (!(phantom.coil_width > 0.0)) throw ConfigError("phantom.coil_width must be positive");
    mc_config().validate();
    if (mc.kinds.empty() || sweep.kinds.empty()) throw ConfigError("kind lists must be non-empty");
    for (const auto& set : {mc.acceleration_set, sweep.acceleration_set}) {
      if (set.empty()) throw ConfigError("acceleration sets must be non-empty");
      for (auto [a, b] : set)
        if (a < 1 || b < 1) throw ConfigError("acceleration factors must be positive");
    }
    estimator.validate();
  }
};

namespace detail {

using io::check_keys;
using io::get_field;
using io::Json;

inline Grid parse_grid(const Json& j, const std::string& where) {
  std::vector<std::size_t> g;
  try {
    g = j.get<std::vector<std::size_t>>();
  } catch (const Json::exception&) {
    throw ConfigError(where + " must be a pair of positive integers");
  }
  if (g.size() != 2 || g[0] < 1 || g[1] < 1) throw ConfigError(where + " must be a pair of positive integers");
  return {g[0], g[1]};
}

inline AccelerationPair parse_pair(const Json& j, const std::string& where) {
  const Grid g = parse_grid(j, where);
  return {g.n1, g.n2};
}

inline std::vector<AccelerationPair> parse_pairs(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be a list of [r1, r2] pairs");
  std::vector<AccelerationPair> out;
  for (const auto& e : j) out.push_back(parse_pair(e, where));
  return out;
}

inline PatternKind parse_kind(const Json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a pattern kind name");
  try {
    return parse_pattern_kind(j.get<std::string>());
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline std::vector<PatternKind> parse_kinds(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be a list of pattern kinds");
  std::vector<PatternKind> out;
  for (const auto& e : j) out.push_back(parse_kind(e, where));
  return out;
}

template <typename T>
void read_opt(const Json& obj, const char* key, const std::string& where, T& out) {
  if (obj.contains(key)) out = get_field<T>(obj, key, where);
}

template <typename T>
void read_opt(const Json& obj, const char* key, const std::string& where, std::optional<T>& out) {
  if (obj.contains(key)) out = get_field<T>(obj, key, where);
}

inline void parse_sequence(const Json& j, SequenceSettings& s) {
  const std::string w = "sequence";
  check_keys(j,
             {"inversion_delays_ms", "repetition_time_ms", "echo_train_length", "echo_spacing_ms",
              "refocus_flip_angles_deg", "excitation_flip_angle_deg", "steady_state"},
             w);
  read_opt(j, "inversion_delays_ms", w, s.inversion_delays_ms);
  read_opt(j, "repetition_time_ms", w, s.repetition_time_ms);
  read_opt(j, "echo_spacing_ms", w, s.echo_spacing_ms);
  read_opt(j, "excitation_flip_angle_deg", w, s.excitation_flip_angle_deg);
  read_opt(j, "steady_state", w, s.steady_state);
  if (j.contains("echo_train_length")) {
    s.echo_train_length = get_field<std::size_t>(j, "echo_train_length", w);
    if (!j.contains("refocus_flip_angles_deg")) s.refocus_flip_angles_deg.assign(s.echo_train_length, 180.0);
  }
  read_opt(j, "refocus_flip_angles_deg", w, s.refocus_flip_angles_deg);
}

inline void parse_prior(const Json& j, PriorSpec& p) {
  const std::string w = "prior";
  check_keys(j, {"mean", "variances"}, w);
  if (j.contains("mean")) {
    const auto m = get_field<std::vector<double>>(j, "mean", w);
    if (m.size() != kParamCount) throw ConfigError("prior.mean needs 4 entries");
    std::copy(m.begin(), m.end(), p.mean.begin());
  }
  if (j.contains("variances")) {
    const auto v = get_field<std::vector<double>>(j, "variances", w);
    if (v.size() != kParamCount) throw ConfigError("prior.variances needs 4 entries");
    p.covariance.setZero();
    for (std::size_t i = 0; i < kParamCount; ++i) {
      if (!(v[i] > 0.0)) throw ConfigError("prior variances must be positive");
      p.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = v[i];
    }
  }
}

}  // namespace detail

/// Parses a config document; the schema field must be present and match.
inline RunConfig parse_config(const io::Json& j) {
  using namespace detail;
  check_keys(j,
             {"schema", "seed", "grid", "analysis_grid", "snr", "pattern", "sequence", "prior",
              "phantom", "mc", "estimator", "sweep"},
             "config");
  const auto schema = get_field<std::string>(j, "schema", "config");
  if (schema != kConfigSchema)
    throw ConfigError("unsupported schema '" + schema + "', expected " + kConfigSchema);
  RunConfig c;
  read_opt(j, "seed", "config", c.seed);
  if (j.contains("grid")) c.grid = parse_grid(j["grid"], "grid");
  if (j.contains("analysis_grid")) c.analysis_grid = parse_grid(j["analysis_grid"], "analysis_grid");
  read_opt(j, "snr", "config", c.snr);

  if (j.contains("pattern")) {
    const auto& p = j["pattern"];
    const std::string w = "pattern";
    check_keys(p, {"kind", "r", "seed", "contrast_groups"}, w);
    if (p.contains("kind")) c.pattern.kind = parse_kind(p["kind"], "pattern.kind");
    if (p.contains("r")) std::tie(c.pattern.r1, c.pattern.r2) = parse_pair(p["r"], "pattern.r");
    read_opt(p, "seed", w, c.pattern.seed);
    read_opt(p, "contrast_groups", w, c.pattern.contrast_groups);
  }
  if (j.contains("sequence")) parse_sequence(j["sequence"], c.sequence);
  if (j.contains("prior")) parse_prior(j["prior"], c.prior);

  if (j.contains("phantom")) {
    const auto& p = j["phantom"];
    const std::string w = "phantom";
    check_keys(p, {"background", "coils", "coil_seed", "coil_width"}, w);
    if (p.contains("background")) {
      const auto b = get_field<std::string>(p, "background", w);
      if (b == "empty") c.phantom.background = Background::Empty;
      else if (b == "fluid") c.phantom.background = Background::Fluid;
      else throw ConfigError("phantom.background must be 'empty' or 'fluid'");
    }
    read_opt(p, "coils", w, c.phantom.coils);
    read_opt(p, "coil_seed", w, c.phantom.coil_seed);
    read_opt(p, "coil_width", w, c.phantom.coil_width);
  }

  if (j.contains("mc")) {
    const auto& m = j["mc"];
    const std::string w = "mc";
    check_keys(m,
               {"realizations", "master_seed", "acceleration_set", "kinds", "denominator", "init",
                "record_runtime"},
               w);
    read_opt(m, "realizations", w, c.mc.realizations);
    read_opt(m, "master_seed", w, c.mc.master_seed);
    if (m.contains("acceleration_set")) c.mc.acceleration_set = parse_pairs(m["acceleration_set"], "mc.acceleration_set");
    if (m.contains("kinds")) c.mc.kinds = parse_kinds(m["kinds"], "mc.kinds");
    if (m.contains("denominator")) {
      const auto d = get_field<std::string>(m, "denominator", w);
      if (d == "truth") c.mc.denominator = CvDenominator::GroundTruth;
      else if (d == "mean") c.mc.denominator = CvDenominator::RealizationMean;
      else throw ConfigError("mc.denominator must be 'truth' or 'mean'");
    }
    if (m.contains("init")) {
      const auto i = get_field<std::string>(m, "init", w);
      if (i == "standard") c.mc.init_at_truth = false;
      else if (i == "ground_truth") c.mc.init_at_truth = true;
      else throw ConfigError("mc.init must be 'standard' or 'ground_truth'");
    }
    read_opt(m, "record_runtime", w, c.mc.record_runtime);
  }

  if (j.contains("estimator")) {
    const auto& e = j["estimator"];
    const std::string w = "estimator";
    check_keys(e, {"max_iterations", "gradient_tolerance", "lambda0"}, w);
    read_opt(e, "max_iterations", w, c.estimator.max_iterations);
    read_opt(e, "gradient_tolerance", w, c.estimator.gradient_tolerance);
    read_opt(e, "lambda0", w, c.estimator.step_damping);
  }

  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    check_keys(s, {"kinds", "acceleration_set"}, "sweep");
    if (s.contains("kinds")) c.sweep.kinds = parse_kinds(s["kinds"], "sweep.kinds");
    if (s.contains("acceleration_set"))
      c.sweep.acceleration_set = parse_pairs(s["acceleration_set"], "sweep.acceleration_set");
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::parse_json(io::read_text(path), path.string()));
}

/// Phantom and coils described by a config; `fluid_default` picks the background
/// when the config leaves it unset.
inline std::pair<ParameterMap, CoilMaps> build_phantom(const RunConfig& c, bool fluid_default) {
  const bool fluid = c.phantom.background == Background::Default ? fluid_default
                                                                  : c.phantom.background == Background::Fluid;
  CoilSpec cs;
  cs.coil_count = c.phantom.coils;
  cs.seed = c.coil_seed();
  cs.width = c.phantom.coil_width;
  return {make_phantom(desk_phantom(c.grid, fluid)), make_coils(cs, c.grid)};
}

}  // namespace teusqa
