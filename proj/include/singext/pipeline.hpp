#pragma once

#include <filesystem>
#include <optional>

#include "calibration.hpp"
#include "cube_extension.hpp"
#include "json.hpp"

namespace singext {

struct MapEnergies {
  double energy = 0.0;     // Gagliardo energy with p = m + 1
  double gap = 0.0;        // gap potential at delta_cal
  double truncated = 0.0;  // truncated energy at delta_cal, p = m + 1
  std::optional<int> winding;
};

template <int M>
MapEnergies map_energies(const BoundaryMap<M>& u, const RunConfig& cfg, double delta_cal) {
  QuadratureSpec q = cfg.quadrature();
  PairGrid<M> g(u, q);
  MapEnergies e;
  e.energy = gagliardo_energy<M>(g, M + 1, q);
  e.gap = gap_potential<M>(g, delta_cal, q);
  e.truncated = truncated_energy<M>(g, delta_cal, M + 1, q);
  if constexpr (M == 1)
    if (u.target().kind() == TargetKind::circle) e.winding = winding_number(u);
  return e;
}

template <int M>
BoundaryMap<M> load_map(const std::string& path, const RunConfig& cfg) {
  int m = csv_map_dimension(path);
  if (m != M) throw ConfigError(path + ": map has m = " + std::to_string(m) + " but the config says m = " + std::to_string(M));
  return read_boundary_map_csv<M>(path, cfg.target_manifold(), interpolation_from_name(cfg.interpolation));
}

template <int M>
BandSpec<M> band_for(const BoundaryMap<M>& u, const RunConfig& cfg) {
  BandSpec<M> b;
  b.min_edge = cfg.band_min_edge > 0.0 ? cfg.band_min_edge : 2.0 * u.spacing();
  b.top_height = oscillation_top_height<M>(u, M + 1, cfg.band_top_floor, b.footprint, StencilSpec{cfg.stencil_resolution});
  return b;
}

template <int M>
SelectionOptions<M> selection_options(const BoundaryMap<M>& u, const RunConfig& cfg, const BandSpec<M>& band) {
  SelectionOptions<M> o;
  o.band = band;
  o.sampling = SkeletonSampling{cfg.density, cfg.selection_kappa, u.spacing()};
  o.seed = cfg.seed;
  return o;
}

template <int M>
struct PipelineRun {
  MapEnergies energies;
  LambdaChoice lambda{2.0, false};
  BandSpec<M> band;
  SkeletonSelection<M> selection;
  CubeClassification<M> classification;
  std::optional<ExtensionField<M, BoundaryMap<M>>> field;
  DistributionReport distribution;
  std::vector<double> trace_heights, trace_errors;

  bool conforming() const { return !lambda.capped; }
  int winding_sum() const {
    int s = 0;
    for (int w : field->windings()) s += w;
    return s;
  }
};

// energies -> lambda -> (tau, h_k) -> good/bad cubes -> W, U -> distribution and trace.
template <int M>
PipelineRun<M> run_pipeline(const BoundaryMap<M>& u, const RunConfig& cfg, const Calibration& cal, bool with_trace = true) {
  PipelineRun<M> r;
  CalibrationConstants consts = cal.constants(cfg);
  r.energies = map_energies(u, cfg, cal.delta_cal);
  r.lambda = choose_lambda(r.energies.gap, consts);
  r.band = band_for(u, cfg);
  r.selection = select_tau_h<M>(u, r.lambda.lambda, cfg.tube, consts, selection_options(u, cfg, r.band));
  r.classification = classify_cubes(r.selection, consts, cfg.tube);
  AssemblyOptions<M> ao;
  ao.sampling = SkeletonSampling{cfg.density, cfg.assembly_kappa, u.spacing()};
  r.field.emplace(assemble<M>(u, r.selection, r.classification, cfg.tube, ao));
  r.distribution = distribution_function<M>(*r.field, cfg.thresholds());
  for (Weight w : kWeights) r.distribution.bound_rhs[std::size_t(w)] = cal.weak_type_rhs(w, r.energies.gap, r.energies.energy);
  if (with_trace) {
    r.trace_heights = cfg.heights();
    for (double eps : r.trace_heights) {
      if (eps < r.field->params().band_bottom())
        throw ConfigError(cfg.source + ": trace height " + detail::format_double(eps) +
                          " lies below the resolved cube band; lower band_min_edge or raise trace_heights");
      r.trace_errors.push_back(trace_error<M>(*r.field, eps, 2.0));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Output files: `,` delimiter, `.` decimal point, LF endings, one `#` provenance line, then
// the header row.

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

inline std::string provenance_line(const std::string& command, const RunConfig& cfg) {
  return "# singext " + command + " seed=" + std::to_string(cfg.seed) + " config=" + cfg.source;
}

inline void write_energies_csv(std::ostream& out, const MapEnergies& e, const std::string& header) {
  out << header << "\n" << "quantity,value\n";
  out << "gagliardo_energy," << detail::format_double(e.energy) << "\n";
  out << "gap_potential," << detail::format_double(e.gap) << "\n";
  out << "truncated_energy," << detail::format_double(e.truncated) << "\n";
  if (e.winding) out << "winding_number," << *e.winding << "\n";
}

inline void write_distribution_csv(std::ostream& out, const DistributionReport& r, const std::string& header) {
  out << header << "\n" << "weight,t,measure,t_pow_measure,bound_rhs\n";
  for (Weight w : kWeights)
    for (std::size_t i = 0; i < r.t.size(); ++i)
      out << weight_name(w) << "," << detail::format_double(r.t[i]) << "," << detail::format_double(r.of(w)[i]) << ","
          << detail::format_double(power(r.t[i], r.m + 1) * r.of(w)[i]) << ","
          << detail::format_double(r.bound_rhs[std::size_t(w)]) << "\n";
}

template <int M>
void write_singular_set_csv(std::ostream& out, const PipelineRun<M>& r, const std::string& header) {
  out << header << "\n" << "k";
  for (int a = 0; a < M; ++a) out << ",j" << a;
  for (int a = 0; a < M; ++a) out << ",x" << a;
  out << ",height";
  if (M == 1) out << ",winding";
  out << "\n";
  std::size_t b = 0;
  for (const auto& c : r.field->cubes()) {
    if (c.kind != CubeKind::bad) continue;
    out << c.id.k;
    for (int a = 0; a < M; ++a) out << "," << c.id.j[a];
    for (int a = 0; a <= M; ++a) out << "," << detail::format_double(c.center[a]);
    if (M == 1) out << "," << r.field->windings().at(b);
    out << "\n";
    ++b;
  }
}

inline void write_trace_csv(std::ostream& out, const std::vector<double>& eps, const std::vector<double>& err,
                            const std::string& header) {
  out << header << "\n" << "epsilon,trace_error\n";
  for (std::size_t i = 0; i < eps.size(); ++i) out << detail::format_double(eps[i]) << "," << detail::format_double(err[i]) << "\n";
}

template <int M>
nlohmann::ordered_json extension_summary(const PipelineRun<M>& r, const RunConfig& cfg, const std::string& map_path) {
  using nlohmann::ordered_json;
  const auto& f = *r.field;
  ordered_json j;
  j["command"] = "extend";
  j["seed"] = cfg.seed;
  j["config"] = cfg.source;
  j["map"] = map_path;
  j["m"] = M;
  j["conforming"] = r.conforming();
  j["energy"] = r.energies.energy;
  j["gap_potential"] = r.energies.gap;
  j["truncated_energy"] = r.energies.truncated;
  if (r.energies.winding) j["winding_number"] = *r.energies.winding;
  j["lambda"] = r.lambda.lambda;
  j["lambda_capped"] = r.lambda.capped;
  j["tau"] = r.selection.tau;
  j["k_min"] = r.selection.params.k_min;
  j["k_max"] = r.selection.params.k_max;
  j["band_bottom"] = f.params().band_bottom();
  j["band_top"] = f.params().band_top();
  j["oscillation_budget"] = r.selection.oscillation_budget;
  j["mu"] = r.classification.mu;
  j["good_cubes"] = r.classification.good.size();
  j["bad_cubes"] = r.classification.bad.size();
  j["singular_points"] = f.singular_set().size();
  if (M == 1) j["winding_sum"] = r.winding_sum();
  j["same_scale_face_mismatch"] = f.same_scale_face_mismatch();
  j["cross_scale_face_mismatch"] = f.cross_scale_face_mismatch();
  j["max_tube_distance"] = f.max_tube_distance();
  ordered_json trace = ordered_json::array();
  for (std::size_t i = 0; i < r.trace_heights.size(); ++i)
    trace.push_back({{"epsilon", r.trace_heights[i]}, {"trace_error", r.trace_errors[i]}});
  j["trace"] = trace;
  ordered_json cubes = ordered_json::array();
  for (const auto& c : f.cubes()) {
    ordered_json cj;
    cj["k"] = c.id.k;
    cj["j"] = std::vector<long>(c.id.j.begin(), c.id.j.end());
    cj["kind"] = cube_kind_name(c.kind);
    cj["per_cube_sup"] = c.per_cube_sup;
    cj["center"] = std::vector<double>(c.center.data(), c.center.data() + M + 1);
    cubes.push_back(std::move(cj));
  }
  j["cubes"] = cubes;
  return j;
}

// Writes every artifact of one extend run into dir.
template <int M>
void write_run(const std::filesystem::path& dir, const PipelineRun<M>& r, const RunConfig& cfg, const std::string& map_path) {
  std::string head = provenance_line("extend", cfg);
  {
    auto out = open_output(dir / "energies.csv");
    write_energies_csv(out, r.energies, head);
  }
  {
    auto out = open_output(dir / "distribution.csv");
    write_distribution_csv(out, r.distribution, head);
  }
  {
    auto out = open_output(dir / "singular_set.csv");
    write_singular_set_csv(out, r, head);
  }
  {
    auto out = open_output(dir / "trace.csv");
    write_trace_csv(out, r.trace_heights, r.trace_errors, head);
  }
  {
    auto out = open_output(dir / "extension.json");
    out << extension_summary(r, cfg, map_path).dump(1) << "\n";
  }
}

}  // namespace singext
