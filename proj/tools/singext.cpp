#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "singext/harness.hpp"

namespace fs = std::filesystem;
using namespace singext;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kSelection = 3, kTube = 4, kVerification = 5 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file");
  cmd->add_option("--seed", c.seed, "override the configured seed");
  cmd->add_option("--out", c.out, "output directory");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common& c, const RunConfig& cfg) { return c.out.empty() ? fs::path(cfg.output_dir) : fs::path(c.out); }

Calibration load_calibration(const RunConfig& cfg) { return Calibration::read(cfg.resolve(cfg.calibration)); }

template <int M>
int energy(const RunConfig& cfg, const std::string& map_path, const fs::path& dir) {
  auto u = load_map<M>(map_path, cfg);
  MapEnergies e = map_energies(u, cfg, cfg.delta_cal(cfg.eta));
  std::string head = provenance_line("energy", cfg);
  auto out = open_output(dir / "energies.csv");
  write_energies_csv(out, e, head);
  write_energies_csv(std::cout, e, head);
  return kOk;
}

template <int M>
int extend(const RunConfig& cfg, const Calibration& cal, const std::string& map_path, const fs::path& dir) {
  auto u = load_map<M>(map_path, cfg);
  PipelineRun<M> run = run_pipeline(u, cfg, cal);
  write_run(dir, run, cfg, map_path);
  std::cout << "singular points: " << run.field->singular_set().size() << ", lambda " << detail::format_double(run.lambda.lambda)
            << ", outputs in " << dir.string() << "\n";
  if (!run.conforming()) {
    std::cerr << "warning: lambda capped at lambda_max = " << detail::format_double(cfg.lambda_max)
              << "; the run is non-conforming\n";
    return kSelection;
  }
  return kOk;
}

// Data rows of a run CSV (comment and header lines removed); the header must match.
std::vector<std::vector<std::string>> read_rows(const fs::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen_header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected header '" + header + "'");
      seen_header = true;
      continue;
    }
    rows.push_back(detail::split_csv(line));
  }
  if (!seen_header) throw ParseError(path.string() + ": missing header row");
  return rows;
}

std::string run_id(const fs::path& dir) {
  fs::path p = dir.lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

int report(const RunConfig& cfg, const std::vector<std::string>& runs, const fs::path& dir) {
  cfg.thresholds();
  std::vector<std::string> missing;
  for (const auto& r : runs)
    for (const char* f : {"distribution.csv", "singular_set.csv", "extension.json"})
      if (!fs::exists(fs::path(r) / f)) missing.push_back((fs::path(r) / f).string());
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw ConfigError("report: missing inputs:" + list);
  }
  auto out = open_output(dir / "report.csv");
  out << provenance_line("report", cfg) << "\n"
      << "run,weight,t,measure,t_pow_measure,bound_rhs,within_bound,singular_points\n";
  for (const auto& r : runs) {
    auto dist = read_rows(fs::path(r) / "distribution.csv", "weight,t,measure,t_pow_measure,bound_rhs");
    if (dist.empty()) throw ConfigError((fs::path(r) / "distribution.csv").string() + ": no distribution rows");
    std::ifstream sing(fs::path(r) / "singular_set.csv");
    std::size_t points = 0;
    std::string line;
    bool header = false;
    while (std::getline(sing, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (!header) header = true;
      else ++points;
    }
    const std::string id = run_id(r);
    for (const auto& row : dist) {
      if (row.size() != 5) throw ParseError((fs::path(r) / "distribution.csv").string() + ": expected 5 columns");
      double scaled = detail::parse_double(row[3], r), bound = detail::parse_double(row[4], r);
      out << id << "," << row[0] << "," << row[1] << "," << row[2] << "," << row[3] << "," << row[4] << ","
          << (scaled <= bound ? 1 : 0) << "," << points << "\n";
    }
  }
  std::cout << "wrote " << (dir / "report.csv").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Singular extensions of critical fractional Sobolev boundary maps"};
  app.require_subcommand(1);
  Common common;
  std::string map_path, only, suite_dir;
  std::vector<std::string> runs;

  auto* c_energy = app.add_subcommand("energy", "Gagliardo energy, gap potential, truncated energy and winding of a map");
  c_energy->add_option("map", map_path, "boundary map CSV")->required();
  auto* c_extend = app.add_subcommand("extend", "build the extension U and write its reports");
  c_extend->add_option("map", map_path, "boundary map CSV")->required();
  auto* c_verify = app.add_subcommand("verify", "run the invariant suite against the frozen calibration");
  c_verify->add_option("--only", only, "run a single module block");
  auto* c_sweep = app.add_subcommand("sweep", "measure and freeze the calibration constants");
  c_sweep->add_option("suite_dir", suite_dir, "directory of suite map CSVs (default: suite_dir from the config)");
  auto* c_report = app.add_subcommand("report", "merge extend runs into report.csv");
  c_report->add_option("run_dirs", runs, "extend output directories")->required();
  for (auto* c : {c_energy, c_extend, c_verify, c_sweep, c_report}) add_common(c, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    RunConfig cfg = load_config(common);
    fs::path dir = out_dir(common, cfg);
    if (c_energy->parsed()) return cfg.m == 1 ? energy<1>(cfg, map_path, dir) : energy<2>(cfg, map_path, dir);
    if (c_extend->parsed()) {
      Calibration cal = load_calibration(cfg);
      return cfg.m == 1 ? extend<1>(cfg, cal, map_path, dir) : extend<2>(cfg, cal, map_path, dir);
    }
    if (c_verify->parsed()) {
      Calibration cal = load_calibration(cfg);
      CheckList checks = run_verify(cfg, cal, only);
      auto out = open_output(dir / "verify.csv");
      checks.write_csv(out, provenance_line("verify", cfg));
      for (const auto& c : checks.rows())
        if (!c.pass)
          std::cerr << "FAIL " << c.test << ": " << detail::format_double(c.value) << " > " << detail::format_double(c.bound) << "\n";
      std::cout << checks.rows().size() - checks.failures() << "/" << checks.rows().size() << " checks passed\n";
      return checks.failures() ? kVerification : kOk;
    }
    if (c_sweep->parsed()) {
      std::string sdir = suite_dir.empty() ? cfg.resolve(cfg.suite_dir) : suite_dir;
      auto suite = load_suite(sdir, cfg);
      SweepResult res = sweep(suite, cfg, run_id(sdir));
      fs::path target = common.out.empty() ? fs::path(cfg.resolve(cfg.calibration)) : fs::path(common.out) / "calibration.txt";
      auto out = open_output(target);
      res.calibration.write(out);
      std::cout << "wrote " << target.string() << "\n";
      return kOk;
    }
    if (c_report->parsed()) return report(cfg, runs, dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const SelectionFailure& e) {
    std::cerr << "selection failure: " << e.what() << "\n";
    return kSelection;
  } catch (const TubeViolation& e) {
    std::cerr << "tube violation: " << e.what() << "\n";
    return kTube;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
