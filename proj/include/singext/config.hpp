#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "boundary_map.hpp"

namespace singext {

// Flat `key = value` text with `#` comments; keys are unique.
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line;
  };

  static KeyValueFile parse(std::istream& in, const std::string& name) {
    KeyValueFile f;
    f.name_ = name;
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      std::string line = raw.substr(0, raw.find('#'));
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto eq = line.find('=');
      std::string where = name + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError(where + ": empty key");
      if (value.empty()) throw ParseError(where + ": empty value for '" + key + "'");
      if (!f.entries_.emplace(key, Entry{value, lineno}).second) throw ParseError(where + ": duplicate key '" + key + "'");
    }
    return f;
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::string& name() const { return name_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::string where(const std::string& key) const {
    auto it = entries_.find(key);
    return name_ + ":" + (it == entries_.end() ? std::string("?") : std::to_string(it->second.line));
  }
  const std::string& text(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(name_ + ": missing key '" + key + "'");
    return it->second.value;
  }
  double number(const std::string& key) const {
    double v = detail::parse_double(text(key), where(key));
    if (!std::isfinite(v)) throw ParseError(where(key) + ": '" + key + "' must be finite");
    return v;
  }
  long integer(const std::string& key) const { return detail::parse_long(text(key), where(key)); }

  void get(const std::string& key, double& v) const { if (has(key)) v = number(key); }
  void get(const std::string& key, int& v) const { if (has(key)) v = static_cast<int>(integer(key)); }
  void get(const std::string& key, std::uint64_t& v) const {
    if (!has(key)) return;
    long x = integer(key);
    if (x < 0) throw ParseError(where(key) + ": '" + key + "' must be >= 0");
    v = static_cast<std::uint64_t>(x);
  }
  void get(const std::string& key, std::string& v) const { if (has(key)) v = text(key); }

  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [k, e] : entries_)
      if (!known.count(k)) throw ParseError(name_ + ":" + std::to_string(e.line) + ": unknown key '" + k + "'");
  }

  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

 private:
  std::string name_;
  std::map<std::string, Entry> entries_;
};

// Positive list: `start:ratio:stop` (geometric, stop included) or comma-separated values.
inline std::vector<double> parse_positive_list(const std::string& spec, const std::string& where, bool increasing) {
  std::vector<double> t;
  if (spec.find(':') != std::string::npos) {
    std::vector<double> p;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) p.push_back(detail::parse_double(KeyValueFile::trim(part), where));
    if (p.size() != 3 || !(p[0] > 0) || !(p[1] > 1) || !(p[2] >= p[0]))
      throw ConfigError(where + ": expected start:ratio:stop with start > 0, ratio > 1, stop >= start");
    for (double x = p[0]; x <= p[2] * (1 + 1e-12); x *= p[1]) t.push_back(x);
  } else {
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!KeyValueFile::trim(part).empty()) t.push_back(detail::parse_double(KeyValueFile::trim(part), where));
  }
  if (t.empty()) throw ConfigError(where + ": list is empty");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0)) throw ConfigError(where + ": values must be positive");
    if (increasing && i && !(t[i] > t[i - 1])) throw ConfigError(where + ": values must be increasing");
  }
  return t;
}

// Threshold grid: positive and strictly increasing.
inline std::vector<double> parse_t_grid(const std::string& spec, const std::string& where) {
  return parse_positive_list(spec, where, true);
}

struct RunConfig {
  std::string target = "circle";  // circle | sphere
  int m = 1;
  int grid_n = 1024;              // suite generation resolution
  std::string interpolation = "embedded_linear";
  double tube = 0.5;              // tubular radius of the target
  double window_margin = 0.25;
  int pair_resolution = 1024;
  std::string tail_mode = "analytic";
  int stencil_resolution = 16;
  int density = 2;                // skeleton intervals per cube edge
  double selection_kappa = 2.0;   // graded skeleton sampling during selection
  double assembly_kappa = 4.0;    // graded boundary data resolution of each cube
  double band_min_edge = 0.0;     // 0: two map spacings
  double band_top_floor = 1e-2;   // oscillation level below which the band may stop
  std::string t_grid = "0.25:2:16384";
  std::string trace_heights = "0.0625,0.03125,0.015625";
  int mc_draws = 64;
  int verify_points = 1000;
  int selection_budget = 16;
  int h_candidates = 4;
  double lambda_max = 1e6;
  double eta = 0.5;               // sweep input, frozen into the calibration file
  double C_mu = 2.0;              // sweep input, frozen into the calibration file
  std::string calibration = "calibration.txt";
  std::string suite_dir = "suite";
  std::string calibration_date = "2026-10-16";
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string source = "<defaults>";

  TargetManifold target_manifold() const {
    if (target == "circle") return TargetManifold(TargetKind::circle, tube);
    if (target == "sphere") return TargetManifold(TargetKind::sphere, tube);
    throw ConfigError(source + ": unknown target '" + target + "'");
  }
  QuadratureSpec quadrature() const {
    QuadratureSpec q{pair_resolution, window_margin, tail_mode_from_name(tail_mode)};
    q.validate();
    return q;
  }
  std::vector<double> thresholds() const { return parse_t_grid(t_grid, source + ": t_grid"); }
  std::vector<double> heights() const { return parse_positive_list(trace_heights, source + ": trace_heights", false); }
  double delta_cal(double eta_value) const { return eta_value * tube / 2.0; }

  // Resolves a path relative to the config file's directory.
  std::string resolve(const std::string& p) const {
    std::filesystem::path path(p);
    if (path.is_absolute() || source == "<defaults>") return p;
    return (std::filesystem::path(source).parent_path() / path).string();
  }

  void validate() const {
    if (m != 1 && m != 2) throw ConfigError(source + ": m must be 1 or 2");
    TargetManifold t = target_manifold();
    if ((t.kind() == TargetKind::circle) != (m == 1))
      throw ConfigError(source + ": target circle goes with m = 1 and sphere with m = 2");
    interpolation_from_name(interpolation);
    quadrature();
    thresholds();
    heights();
    if (grid_n < 2 || stencil_resolution < 1 || density < 2 || mc_draws < 1 || verify_points < 1)
      throw ConfigError(source + ": resolutions must be positive (density >= 2)");
    if (!(selection_kappa > 0) || !(assembly_kappa > 0)) throw ConfigError(source + ": kappa values must be > 0");
    if (!(band_min_edge >= 0) || !(band_top_floor > 0)) throw ConfigError(source + ": band settings must be positive");
    if (!(eta > 0 && eta < 1) || !(C_mu > 0)) throw ConfigError(source + ": need 0 < eta < 1 and C_mu > 0");
    if (selection_budget < 1 || h_candidates < 1 || !(lambda_max >= 2))
      throw ConfigError(source + ": selection budget, translation candidates and lambda_max must be positive");
  }

  static RunConfig from(const KeyValueFile& f) {
    f.reject_unknown({"target", "m", "grid_n", "interpolation", "tube", "window_margin", "pair_resolution", "tail_mode",
                      "stencil_resolution", "density", "selection_kappa", "assembly_kappa", "band_min_edge",
                      "band_top_floor", "t_grid", "trace_heights", "mc_draws", "verify_points", "selection_budget",
                      "h_candidates", "lambda_max", "eta", "C_mu", "calibration", "suite_dir", "calibration_date",
                      "seed", "output_dir"});
    RunConfig c;
    c.source = f.name();
    f.get("target", c.target);
    f.get("m", c.m);
    f.get("grid_n", c.grid_n);
    f.get("interpolation", c.interpolation);
    f.get("tube", c.tube);
    f.get("window_margin", c.window_margin);
    f.get("pair_resolution", c.pair_resolution);
    f.get("tail_mode", c.tail_mode);
    f.get("stencil_resolution", c.stencil_resolution);
    f.get("density", c.density);
    f.get("selection_kappa", c.selection_kappa);
    f.get("assembly_kappa", c.assembly_kappa);
    f.get("band_min_edge", c.band_min_edge);
    f.get("band_top_floor", c.band_top_floor);
    f.get("t_grid", c.t_grid);
    f.get("trace_heights", c.trace_heights);
    f.get("mc_draws", c.mc_draws);
    f.get("verify_points", c.verify_points);
    f.get("selection_budget", c.selection_budget);
    f.get("h_candidates", c.h_candidates);
    f.get("lambda_max", c.lambda_max);
    f.get("eta", c.eta);
    f.get("C_mu", c.C_mu);
    f.get("calibration", c.calibration);
    f.get("suite_dir", c.suite_dir);
    f.get("calibration_date", c.calibration_date);
    f.get("seed", c.seed);
    f.get("output_dir", c.output_dir);
    c.validate();
    return c;
  }

  static RunConfig load(const std::string& path) { return from(KeyValueFile::load(path)); }
};

}  // namespace singext
