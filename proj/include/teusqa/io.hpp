#pragma once

// File formats: pattern JSON, raw f64 arrays with JSON sidecars, CSV reports.
// Every writer emits LF line endings and fixed key order, so identical inputs give
// identical bytes.

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "teusqa/estimator.hpp"
#include "teusqa/fisher.hpp"
#include "teusqa/montecarlo.hpp"
#include "teusqa/patterns.hpp"

namespace teusqa::io {

using Json = nlohmann::json;

struct IoError : Error {
  using Error::Error;
};

/// Shortest round-trip decimal form; nan and inf are spelled out.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
}

/// Rejects keys outside `allowed`.
inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
T get_field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

// ---- patterns --------------------------------------------------------------

inline Json pattern_to_json(const UndersamplingPattern& p) {
  Json samples = Json::array();
  for (const auto& s : p.samples) {
    Json row = Json::array();
    for (auto k : s) row.push_back({k.k1, k.k2});
    samples.push_back(std::move(row));
  }
  return Json{{"contrasts", p.contrasts},
              {"grid", {p.grid.n1, p.grid.n2}},
              {"kind", std::string(to_string(p.kind))},
              {"r1", p.r1},
              {"r2", p.r2},
              {"samples", std::move(samples)},
              {"seed", p.seed}};
}

inline std::string pattern_json_text(const UndersamplingPattern& p) {
  return pattern_to_json(p).dump() + "\n";
}

inline UndersamplingPattern pattern_from_json(const Json& j) {
  const std::string where = "pattern";
  check_keys(j, {"contrasts", "grid", "kind", "r1", "r2", "samples", "seed"}, where);
  UndersamplingPattern p;
  const auto grid = get_field<std::vector<std::size_t>>(j, "grid", where);
  if (grid.size() != 2) throw ConfigError("pattern grid must have two entries");
  p.grid = {grid[0], grid[1]};
  p.contrasts = get_field<std::size_t>(j, "contrasts", where);
  p.r1 = get_field<std::size_t>(j, "r1", where);
  p.r2 = get_field<std::size_t>(j, "r2", where);
  p.kind = parse_pattern_kind(get_field<std::string>(j, "kind", where));
  p.seed = get_field<std::uint64_t>(j, "seed", where);
  const auto samples = get_field<std::vector<std::vector<std::array<std::uint32_t, 2>>>>(j, "samples", where);
  for (const auto& row : samples) {
    std::vector<KPos> s;
    s.reserve(row.size());
    for (auto k : row) s.push_back({k[0], k[1]});
    p.samples.push_back(std::move(s));
  }
  p.validate();
  return p;
}

inline void write_pattern(const std::filesystem::path& path, const UndersamplingPattern& p) {
  write_text(path, pattern_json_text(p));
}

inline UndersamplingPattern read_pattern(const std::filesystem::path& path) {
  return pattern_from_json(parse_json(read_text(path), path.string()));
}

// ---- arrays ----------------------------------------------------------------

struct ArrayHeader {
  std::vector<std::size_t> shape;
  std::string dtype;  // "float64" or "complex128" (interleaved re, im)
  std::vector<std::string> fields;

  [[nodiscard]] std::size_t element_count() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
  [[nodiscard]] std::size_t doubles_per_element() const { return dtype == "complex128" ? 2 : 1; }
};

/// Sidecar path for an array stored at `data_path`.
inline std::filesystem::path sidecar_path(std::filesystem::path data_path) {
  return data_path.replace_extension(".json");
}

inline std::string sidecar_text(const ArrayHeader& h) {
  return Json{{"dtype", h.dtype}, {"fields", h.fields}, {"order", "row-major"}, {"shape", h.shape}}.dump(2) + "\n";
}

inline void write_array(const std::filesystem::path& data_path, const ArrayHeader& h,
                        const std::vector<double>& values) {
  if (h.dtype != "float64" && h.dtype != "complex128") throw IoError("unsupported dtype " + h.dtype);
  if (values.size() != h.element_count() * h.doubles_per_element())
    throw ShapeError("array value count does not match its shape");
  std::string bytes(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (std::size_t b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  write_text(data_path, bytes);
  write_text(sidecar_path(data_path), sidecar_text(h));
}

inline std::pair<ArrayHeader, std::vector<double>> read_array(const std::filesystem::path& data_path) {
  const Json j = parse_json(read_text(sidecar_path(data_path)), sidecar_path(data_path).string());
  const std::string where = "array sidecar";
  check_keys(j, {"dtype", "fields", "order", "shape"}, where);
  ArrayHeader h;
  h.shape = get_field<std::vector<std::size_t>>(j, "shape", where);
  h.dtype = get_field<std::string>(j, "dtype", where);
  h.fields = get_field<std::vector<std::string>>(j, "fields", where);
  if (get_field<std::string>(j, "order", where) != "row-major") throw IoError("only row-major arrays are supported");
  if (h.dtype != "float64" && h.dtype != "complex128") throw IoError("unsupported dtype " + h.dtype);
  const std::string bytes = read_text(data_path);
  const std::size_t count = h.element_count() * h.doubles_per_element();
  if (bytes.size() != count * 8) throw IoError(data_path.string() + ": size does not match sidecar shape");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  return {h, values};
}

inline void write_parameter_map(const std::filesystem::path& path, const ParameterMap& map) {
  std::vector<double> v;
  v.reserve(map.parameter_count());
  for (const auto& t : map.values)
    for (std::size_t p = 0; p < kParamCount; ++p) v.push_back(t[p]);
  write_array(path, {{map.grid.n1, map.grid.n2, kParamCount}, "float64", {"re_m0", "im_m0", "ln_t1", "ln_t2"}}, v);
}

inline ParameterMap read_parameter_map(const std::filesystem::path& path) {
  auto [h, v] = read_array(path);
  if (h.dtype != "float64" || h.shape.size() != 3 || h.shape[2] != kParamCount)
    throw IoError(path.string() + ": not a parameter map");
  ParameterMap map({h.shape[0], h.shape[1]}, TissueParams{});
  for (std::size_t x = 0; x < map.values.size(); ++x)
    for (std::size_t p = 0; p < kParamCount; ++p) map.values[x][p] = v[x * kParamCount + p];
  map.validate();
  return map;
}

inline std::vector<double> interleave(const std::vector<Complex>& c) {
  std::vector<double> v;
  v.reserve(2 * c.size());
  for (auto z : c) {
    v.push_back(z.real());
    v.push_back(z.imag());
  }
  return v;
}

inline std::vector<Complex> deinterleave(const std::vector<double>& v) {
  std::vector<Complex> c(v.size() / 2);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = {v[2 * i], v[2 * i + 1]};
  return c;
}

inline void write_coils(const std::filesystem::path& path, const CoilMaps& coils) {
  write_array(path, {{coils.coil_count, coils.grid.n1, coils.grid.n2}, "complex128", {"sensitivity"}},
              interleave(coils.values));
}

inline CoilMaps read_coils(const std::filesystem::path& path) {
  auto [h, v] = read_array(path);
  if (h.dtype != "complex128" || h.shape.size() != 3) throw IoError(path.string() + ": not a coil map");
  CoilMaps coils(h.shape[0], {h.shape[1], h.shape[2]});
  coils.values = deinterleave(v);
  coils.validate();
  return coils;
}

/// Shape (Q, samples per contrast, coils), same order as KSpaceData.
inline void write_kspace(const std::filesystem::path& path, const KSpaceData& data) {
  data.validate();
  write_array(path,
              {{data.pattern.contrasts, data.pattern.samples_per_contrast(), data.coil_count},
               "complex128",
               {"measurement"}},
              interleave(data.values));
}

inline KSpaceData read_kspace(const std::filesystem::path& path, const UndersamplingPattern& pattern) {
  auto [h, v] = read_array(path);
  if (h.dtype != "complex128" || h.shape.size() != 3 || h.shape[0] != pattern.contrasts ||
      h.shape[1] != pattern.samples_per_contrast())
    throw ShapeError(path.string() + ": k-space shape does not match the pattern");
  KSpaceData data{pattern, h.shape[2], deinterleave(v)};
  data.validate();
  return data;
}

// ---- reports ---------------------------------------------------------------

inline const char* parameter_name(std::size_t p) { return p == 0 ? "T1" : "T2"; }

struct TeusqaRow {
  PatternKind kind;
  std::size_t r1, r2;
  TimeEfficiencyReport report;
  bool feasible = true;
};

inline std::string teusqa_csv(const std::vector<TeusqaRow>& rows) {
  std::string out = "pattern_kind,r1,r2,parameter,cv,scan_time_s,eta\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& row : rows)
    for (std::size_t p = 0; p < 2; ++p) {
      out += std::string(to_string(row.kind)) + "," + std::to_string(row.r1) + "," +
             std::to_string(row.r2) + "," + parameter_name(p) + "," +
             number(row.feasible ? row.report.cv[p] : nan) + "," +
             number(row.feasible ? row.report.scan_time_s : nan) + "," +
             number(row.feasible ? row.report.eta[p] : nan) + "\n";
    }
  return out;
}

inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline std::string teusqa_json(const std::vector<TeusqaRow>& rows) {
  Json arr = Json::array();
  for (const auto& row : rows)
    for (std::size_t p = 0; p < 2; ++p)
      arr.push_back({{"cv", row.feasible ? json_number(row.report.cv[p]) : Json(nullptr)},
                     {"eta", row.feasible ? json_number(row.report.eta[p]) : Json(nullptr)},
                     {"parameter", parameter_name(p)},
                     {"pattern_kind", std::string(to_string(row.kind))},
                     {"r1", row.r1},
                     {"r2", row.r2},
                     {"scan_time_s", row.feasible ? json_number(row.report.scan_time_s) : Json(nullptr)}});
  return arr.dump(2) + "\n";
}

/// Per-voxel variance map (voxel, i1, i2, parameter variances and CVs).
inline std::string variance_csv(const TimeEfficiencyReport& rep, Grid grid) {
  std::string out = "voxel,i1,i2,roi,var_re_m0,var_im_m0,var_ln_t1,var_ln_t2,cv_t1,cv_t2\n";
  for (std::size_t x = 0; x < rep.variance.size(); ++x) {
    out += std::to_string(x) + "," + std::to_string(x / grid.n2) + "," + std::to_string(x % grid.n2) + "," +
           std::to_string(int(rep.roi[x])) + ",";
    for (std::size_t p = 0; p < kParamCount; ++p) out += number(rep.variance[x][p]) + ",";
    out += number(rep.voxel_cv(x, Relaxation::T1)) + "," + number(rep.voxel_cv(x, Relaxation::T2)) + "\n";
  }
  return out;
}

inline std::string convergence_csv(const EstimatorResult& res) {
  std::string out = "iteration,objective,gradient_norm,lambda\n";
  for (const auto& r : res.log)
    out += std::to_string(r.iteration) + "," + number(r.objective) + "," + number(r.gradient_norm) +
           "," + number(r.lambda) + "\n";
  return out;
}

inline std::string mc_voxel_header() {
  return "pattern,r1,r2,voxel,i1,i2,parameter,cv_pred,cv_mc,eta,eta_mc,ratio\n";
}

inline std::string mc_voxel_rows(const McReport& rep, Grid grid) {
  std::string out;
  for (const auto& v : rep.voxels)
    for (std::size_t p = 0; p < 2; ++p)
      out += std::string(to_string(rep.kind)) + "," + std::to_string(rep.r1) + "," +
             std::to_string(rep.r2) + "," + std::to_string(v.voxel) + "," +
             std::to_string(v.voxel / grid.n2) + "," + std::to_string(v.voxel % grid.n2) + "," +
             parameter_name(p) + "," + number(v.cv_pred[p]) + "," + number(v.cv_mc[p]) + "," +
             number(v.eta[p]) + "," + number(v.eta_mc[p]) + "," + number(v.ratio[p]) + "\n";
  return out;
}

inline Json mc_summary(const McReport& rep, bool record_runtime) {
  Json arr = Json::array();
  for (std::size_t p = 0; p < 2; ++p)
    arr.push_back({{"converged", rep.converged},
                   {"failed", rep.failed},
                   {"flagged", rep.flagged},
                   {"parameter", parameter_name(p)},
                   {"pattern", std::string(to_string(rep.kind))},
                   {"q25", json_number(rep.ratio_quartiles[p].q25)},
                   {"q50", json_number(rep.ratio_quartiles[p].q50)},
                   {"q75", json_number(rep.ratio_quartiles[p].q75)},
                   {"r", {rep.r1, rep.r2}},
                   {"realizations", rep.realizations},
                   {"runtime_s", record_runtime ? rep.runtime_s : 0.0},
                   {"sigma", rep.sigma}});
  return arr;
}

inline std::string discrepancy_csv_header() {
  return "source,pattern_kind,r1,r2,n1,n2,contrasts,points,l2_star_discrepancy\n";
}

inline std::string discrepancy_csv_row(const std::string& source, const UndersamplingPattern& p,
                                       const DiscrepancyReport& d) {
  return source + "," + std::string(to_string(p.kind)) + "," + std::to_string(p.r1) + "," +
         std::to_string(p.r2) + "," + std::to_string(p.grid.n1) + "," + std::to_string(p.grid.n2) +
         "," + std::to_string(p.contrasts) + "," + std::to_string(d.point_count) + "," +
         number(d.l2_star_discrepancy) + "\n";
}

}  // namespace teusqa::io
