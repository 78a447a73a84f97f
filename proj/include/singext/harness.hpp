#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>

#include "conformal.hpp"
#include "pipeline.hpp"

namespace singext {

// Smallest number with 4 significant digits that is >= x.
inline double round_up_4(double x) {
  if (!(x > 0.0)) return 0.0;
  if (!std::isfinite(x)) return x;
  double scale = std::pow(10.0, std::floor(std::log10(x)) - 3.0);
  double r = std::ceil(x / scale) * scale;
  while (r < x) r += scale;
  return r;
}

// lhs / rhs, with 0/0 = 0 and positive/0 = inf.
inline double bound_ratio(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

// ---------------------------------------------------------------------------
// Calibration suite (m = 1).

struct SuiteMap {
  std::string name;
  std::string path;
  std::string bytes;
  BoundaryMap<1> map;
};

inline bool is_constant_map(const BoundaryMap<1>& u) {
  for (const auto& s : u.samples())
    if (s != u.samples().front()) return false;
  return true;
}

inline std::vector<SuiteMap> load_suite(const std::string& dir, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.m != 1) throw ConfigError(cfg.source + ": calibration suites support m = 1 only");
  if (!fs::is_directory(dir)) throw ConfigError("suite directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<SuiteMap> out;
  bool constant = false, degree_one = false;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream bytes;
    bytes << in.rdbuf();
    SuiteMap s{f.stem().string(), f.string(), bytes.str(), load_map<1>(f.string(), cfg)};
    constant = constant || is_constant_map(s.map);
    degree_one = degree_one || (s.map.target().kind() == TargetKind::circle && winding_number(s.map) == 1);
    out.push_back(std::move(s));
  }
  if (out.size() < 3 || !constant || !degree_one)
    throw ConfigError("insufficient calibration suite in '" + dir + "' (" + std::to_string(out.size()) +
                      " maps): required are at least 3 maps, among them a constant map and a degree-1 map");
  return out;
}

inline std::uint64_t suite_hash(const std::vector<SuiteMap>& suite) {
  std::uint64_t h = fnv1a("");
  for (const auto& s : suite) h = fnv1a(s.bytes, fnv1a(s.name, h));
  return h;
}

// ---------------------------------------------------------------------------
// Measured left- and right-hand sides of the calibrated bounds.

struct PointwiseRatios {
  double dist = 0.0;  // max dist(V, N)^p / (mo + delta^p)
  double grad = 0.0;  // max (x_{m+1} |DV|)^p / (mo + delta^p)
};

// Points: x' uniform in the window widened by the margin, height log-uniform in [min_height, 1].
template <int M>
PointwiseRatios pointwise_ratios(const BoundaryMap<M>& u, const RunConfig& cfg, double delta, double min_height,
                                 int stencil_resolution) {
  const double p = M + 1;
  const double lo = -cfg.window_margin, width = 1.0 + 2.0 * cfg.window_margin;
  std::vector<PointwiseRatios> r(std::size_t(cfg.verify_points));
  parallel_for(r.size(), [&](std::size_t i) {
    CounterRng rng(cfg.seed, 0x7001);
    Domain<M> xp;
    for (int a = 0; a < M; ++a) xp[a] = lo + width * rng.uniform(4 * i + a);
    double h = min_height * std::pow(1.0 / min_height, rng.uniform(4 * i + 3));
    HalfSpacePoint<M> x(xp, h);
    auto s = gradient_convolution<M>(u, x);
    double denom = mo<M>(u, x, delta, p, StencilSpec{stencil_resolution}) + power(delta, p);
    r[i] = {power(TargetManifold::distance_to_manifold(s.value), p) / denom, power(h * s.gradient_norm, p) / denom};
  });
  PointwiseRatios out;
  for (const auto& x : r) {
    out.dist = std::max(out.dist, x.dist);
    out.grad = std::max(out.grad, x.grad);
  }
  return out;
}

struct FunctionalBounds {
  double longitudinal = 0.0, longitudinal_rhs = 0.0;  // rhs: truncated energy at delta
  double transversal = 0.0, transversal_rhs = 0.0;    // rhs: truncated energy at delta / 2
  double count = 0.0, count_rhs = 0.0;                // rhs: truncated energy at eta * count_delta / count_delta^{m+1}
  FunctionalReport report;
};

template <int M>
FunctionalOptions<M> functional_options(const BoundaryMap<M>& u, const RunConfig& cfg, const BandSpec<M>& band,
                                        int stencil_resolution, int draws) {
  FunctionalOptions<M> o;
  o.draws = draws;
  o.seed = cfg.seed;
  o.band = band;
  o.sampling = SkeletonSampling{cfg.density, cfg.selection_kappa, u.spacing()};
  o.stencil = StencilSpec{stencil_resolution};
  return o;
}

// delta = eta * tube / 2, so the counting threshold tube / 2 has eta * threshold = delta.
template <int M>
FunctionalBounds functional_bounds(const BoundaryMap<M>& u, const RunConfig& cfg, double lambda, const BandSpec<M>& band,
                                   double delta, double truncated_at_delta, double truncated_at_half, int stencil_resolution) {
  const double count_delta = cfg.tube / 2.0;
  FunctionalBounds b;
  b.report = skeleton_functionals<M>(u, lambda, FunctionalRequest{delta, M + 1.0, count_delta, false},
                                     functional_options(u, cfg, band, stencil_resolution, cfg.mc_draws));
  b.longitudinal = b.report.longitudinal.estimate;
  b.longitudinal_rhs = truncated_at_delta;
  b.transversal = b.report.transversal.estimate;
  b.transversal_rhs = truncated_at_half;
  b.count = b.report.count.estimate;
  b.count_rhs = truncated_at_delta / power(count_delta, M + 1);
  return b;
}

struct ExtensionRatio {
  double ratio = 0.0;        // max over good cubes with non-constant data
  double flat_energy = 0.0;  // max cube energy where the boundary data is constant
  std::size_t cubes = 0;
};

// Loop data whose RMS derivative is below this is constant up to rounding; its ratio would
// only compare rounding noise.
inline constexpr double kFlatLoopDerivative = 1e-12;

// Good cubes in reference coordinates (unit square): the energy of W against rho times the
// boundary energy of its loop data, rho = 1/2 the inradius. Both sides are scale invariant.
inline ExtensionRatio extension_ratio(const ExtensionField<1, BoundaryMap<1>>& f, int per_face = 16, int radial = 16,
                                      int boundary = 1024) {
  const auto cells = radial_cells(StarShape::square, per_face);
  const auto& cubes = f.cubes();
  std::vector<std::array<double, 2>> parts(cubes.size(), {0.0, -1.0});
  parallel_for(cubes.size(), [&](std::size_t i) {
    const auto& c = cubes[i];
    if (c.kind != CubeKind::good) return;
    CompensatedSum lhs, rhs;
    for (const auto& cell : cells)
      for (int k = 0; k < radial; ++k) {
        double a = double(k) / radial, b = double(k + 1) / radial;
        Domain<2> xi = 0.5 * (a + b) * cell.omega;
        double g = spectral_norm<2>(c.local.jacobian(xi));
        lhs.add(g * g * cell.measure * 0.5 * (b * b - a * a));
      }
    const double period = c.local.loop().period();
    for (int j = 0; j < boundary; ++j) rhs.add(c.local.loop().derivative(period * (j + 0.5) / boundary).squaredNorm());
    double mean_square = rhs.value() / boundary;
    parts[i] = {lhs.value(), mean_square > kFlatLoopDerivative * kFlatLoopDerivative ? 0.5 * mean_square * period : 0.0};
  });
  ExtensionRatio out;
  for (const auto& [lhs, rhs] : parts) {
    if (rhs < 0.0) continue;
    ++out.cubes;
    if (rhs > 0.0) out.ratio = std::max(out.ratio, lhs / rhs);
    else out.flat_energy = std::max(out.flat_energy, lhs);
  }
  return out;
}

struct MapMeasurement {
  std::string name;
  MapEnergies energies;
  double truncated_half = 0.0;  // truncated energy at delta_cal / 2
  double lambda = 2.0;
  std::size_t bad = 0;
  std::array<double, 3> weak{0.0, 0.0, 0.0};  // max_t t^{m+1} measure(t), per weight
  PointwiseRatios pointwise;
  FunctionalBounds functionals;
  ExtensionRatio extension;
};

inline MapMeasurement measure_map(const SuiteMap& s, const PipelineRun<1>& run, const RunConfig& cfg, const Calibration& cal,
                                  int stencil_resolution) {
  MapMeasurement m;
  m.name = s.name;
  m.energies = run.energies;
  m.truncated_half = truncated_energy<1>(s.map, cal.delta_cal / 2.0, 2.0, cfg.quadrature());
  m.lambda = run.lambda.lambda;
  m.bad = run.classification.bad.size();
  for (Weight w : kWeights) m.weak[std::size_t(w)] = run.distribution.max_scaled(w);
  m.pointwise = pointwise_ratios<1>(s.map, cfg, cal.delta_cal, run.band.min_edge, stencil_resolution);
  m.functionals = functional_bounds<1>(s.map, cfg, run.lambda.lambda, run.band, cal.delta_cal, run.energies.truncated,
                                       m.truncated_half, stencil_resolution);
  m.extension = extension_ratio(*run.field);
  return m;
}

// Suite maxima of the measured ratios, per constant.
struct ConstantRatios {
  double C_dist = 0, C_grad = 0, C_long = 0, C_trans = 0, C_count = 0, C_S = 0, C_ext = 0;
  std::array<double, 3> A{0.0, 0.0, 0.0};
};

inline ConstantRatios suite_ratios(const std::vector<MapMeasurement>& ms, double B_hat) {
  ConstantRatios r;
  for (const auto& m : ms) {
    double scale = std::exp(B_hat * m.energies.gap) * m.energies.energy;
    r.C_dist = std::max(r.C_dist, m.pointwise.dist);
    r.C_grad = std::max(r.C_grad, m.pointwise.grad);
    r.C_long = std::max(r.C_long, bound_ratio(m.functionals.longitudinal, m.functionals.longitudinal_rhs));
    r.C_trans = std::max(r.C_trans, bound_ratio(m.functionals.transversal, m.functionals.transversal_rhs));
    r.C_count = std::max(r.C_count, bound_ratio(m.functionals.count, m.functionals.count_rhs));
    r.C_S = std::max(r.C_S, bound_ratio(double(m.bad), scale));
    r.C_ext = std::max(r.C_ext, m.extension.ratio);
    for (std::size_t w = 0; w < 3; ++w) r.A[w] = std::max(r.A[w], bound_ratio(m.weak[w], scale));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Sweep: B_lambda from the smallest admissible lambda per map, then every other constant as
// the suite maximum of its measured ratio, rounded up to 4 significant digits.

inline double lambda_needed(const BoundaryMap<1>& u, const RunConfig& cfg, const CalibrationConstants& c, const BandSpec<1>& band) {
  for (double base = 2.0; base <= c.lambda_max; base *= 2.0)
    for (double lambda : {base, 1.5 * base}) {
      if (lambda > c.lambda_max) break;
      try {
        select_tau_h<1>(u, lambda, cfg.tube, c, selection_options(u, cfg, band));
        return lambda;
      } catch (const SelectionFailure&) {
      }
    }
  throw SelectionFailure("no lambda up to lambda_max admits a valid skeleton selection");
}

struct SweepResult {
  Calibration calibration;
  std::vector<MapMeasurement> maps;
};

inline SweepResult sweep(const std::vector<SuiteMap>& suite, const RunConfig& cfg, const std::string& suite_label) {
  if (cfg.m != 1) throw ConfigError(cfg.source + ": sweep supports m = 1 only");
  SweepResult res;
  Calibration& cal = res.calibration;
  cal.eta = cfg.eta;
  cal.C_mu = cfg.C_mu;
  cal.delta_cal = cfg.delta_cal(cfg.eta);
  const CalibrationConstants probe = cal.constants(cfg);

  double B = 0.0;
  std::vector<std::string> needs;
  for (const auto& s : suite) {
    MapEnergies e = map_energies(s.map, cfg, cal.delta_cal);
    double need = lambda_needed(s.map, cfg, probe, band_for(s.map, cfg));
    if (e.gap > 0.0) B = std::max(B, std::log(need) / e.gap);
    else if (need > 2.0)
      throw SelectionFailure(s.name + ": zero gap potential fixes lambda = 2, but the selection needs lambda = " +
                             detail::format_double(need));
    needs.push_back(s.name + " " + detail::format_double(need));
  }
  B = round_up_4(std::max(B, 1e-6));

  std::vector<PipelineRun<1>> runs;
  for (int attempt = 0;; ++attempt) {
    cal.B_lambda = B;
    try {
      runs.clear();
      for (const auto& s : suite) runs.push_back(run_pipeline(s.map, cfg, cal, false));
      break;
    } catch (const SelectionFailure&) {
      if (attempt == 8) throw;
      B = round_up_4(1.1 * B);
    }
  }
  cal.B_hat = 2.0 * cal.B_lambda;

  for (std::size_t i = 0; i < suite.size(); ++i) res.maps.push_back(measure_map(suite[i], runs[i], cfg, cal, cfg.stencil_resolution));
  ConstantRatios r = suite_ratios(res.maps, cal.B_hat);
  for (double v : {r.C_dist, r.C_grad, r.C_long, r.C_trans, r.C_count, r.C_S, r.C_ext, r.A[0], r.A[1], r.A[2]})
    if (!std::isfinite(v)) throw Error("sweep: a suite map has a positive left-hand side with a vanishing right-hand side");
  cal.C_dist = round_up_4(r.C_dist);
  cal.C_grad = round_up_4(r.C_grad);
  cal.C_long = round_up_4(r.C_long);
  cal.C_trans = round_up_4(r.C_trans);
  cal.C_count = round_up_4(r.C_count);
  cal.C_S = round_up_4(r.C_S);
  cal.C_ext = round_up_4(r.C_ext);
  cal.A_hat = round_up_4(r.A[0]);
  cal.A_hat_hyperbolic = round_up_4(r.A[1]);
  cal.A_hat_ball = round_up_4(r.A[2]);

  auto f = detail::format_double;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(suite_hash(suite)));
  std::string names;
  for (const auto& s : suite) names += (names.empty() ? "" : ",") + s.name;
  std::string need_list;
  for (const auto& n : needs) need_list += (need_list.empty() ? "" : "; ") + n;
  cal.provenance = {
      "singext calibration: m = 1, target " + cfg.target + ", tube " + f(cfg.tube),
      "suite: " + suite_label + " maps=" + names + " fnv1a=" + hash,
      "date: " + cfg.calibration_date,
      "seed: " + std::to_string(cfg.seed),
      "resolutions: pair_resolution=" + std::to_string(cfg.pair_resolution) + " window_margin=" + f(cfg.window_margin) +
          " tail_mode=" + cfg.tail_mode + " stencil_resolution=" + std::to_string(cfg.stencil_resolution) +
          " density=" + std::to_string(cfg.density) + " selection_kappa=" + f(cfg.selection_kappa) +
          " assembly_kappa=" + f(cfg.assembly_kappa) + " mc_draws=" + std::to_string(cfg.mc_draws) +
          " verify_points=" + std::to_string(cfg.verify_points) + " t_grid=" + cfg.t_grid,
      "smallest admissible lambda per map: " + need_list,
      "constants are suite maxima rounded up to 4 significant digits; B_hat = (m + 1) B_lambda",
  };
  for (const auto& m : res.maps) {
    double scale = std::exp(cal.B_hat * m.energies.gap) * m.energies.energy;
    cal.provenance.push_back(
        "map " + m.name + ": energy=" + f(m.energies.energy) + " gap=" + f(m.energies.gap) + " lambda=" + f(m.lambda) +
        " bad=" + std::to_string(m.bad) + " dist=" + f(m.pointwise.dist) + " grad=" + f(m.pointwise.grad) +
        " long=" + f(bound_ratio(m.functionals.longitudinal, m.functionals.longitudinal_rhs)) +
        " trans=" + f(bound_ratio(m.functionals.transversal, m.functionals.transversal_rhs)) +
        " count=" + f(bound_ratio(m.functionals.count, m.functionals.count_rhs)) + " ext=" + f(m.extension.ratio) +
        " weak=" + f(bound_ratio(m.weak[0], scale)) + "/" + f(bound_ratio(m.weak[1], scale)) + "/" +
        f(bound_ratio(m.weak[2], scale)));
  }
  cal.validate("sweep");
  return res;
}

// ---------------------------------------------------------------------------
// Verification report.

struct Check {
  std::string test;
  bool pass;
  double value;
  double bound;
};

class CheckList {
 public:
  void add(std::string test, bool pass, double value, double bound) { rows_.push_back({std::move(test), pass, value, bound}); }
  void at_most(std::string test, double value, double bound) { add(std::move(test), value <= bound, value, bound); }
  void equal(std::string test, double value, double expected) { add(std::move(test), value == expected, value, expected); }
  const std::vector<Check>& rows() const { return rows_; }
  std::size_t failures() const {
    return std::size_t(std::count_if(rows_.begin(), rows_.end(), [](const Check& c) { return !c.pass; }));
  }
  void write_csv(std::ostream& out, const std::string& header) const {
    out << header << "\n" << "test,status,value,bound\n";
    for (const auto& c : rows_)
      out << c.test << "," << (c.pass ? "pass" : "fail") << "," << detail::format_double(c.value) << ","
          << detail::format_double(c.bound) << "\n";
  }

 private:
  std::vector<Check> rows_;
};

inline const std::vector<std::string>& verify_modules() {
  static const std::vector<std::string> names{"manifold",     "boundary_map",       "mean_oscillation",
                                              "convolution_extension", "lambda_cubes", "skeleton_selection",
                                              "cube_extension", "conformal",        "cli"};
  return names;
}

// Suite maps and their pipeline runs, computed on first use.
class VerifyContext {
 public:
  VerifyContext(const RunConfig& cfg, const Calibration& cal) : cfg_(cfg), cal_(cal) {}

  const RunConfig& cfg() const { return cfg_; }
  const Calibration& cal() const { return cal_; }

  const std::vector<SuiteMap>& suite() {
    if (!suite_) suite_ = load_suite(cfg_.resolve(cfg_.suite_dir), cfg_);
    return *suite_;
  }
  const PipelineRun<1>& run(std::size_t i) {
    if (runs_.empty()) runs_.resize(suite().size());
    if (!runs_[i]) runs_[i] = run_pipeline(suite()[i].map, cfg_, cal_, true);
    return *runs_[i];
  }

 private:
  RunConfig cfg_;
  Calibration cal_;
  std::optional<std::vector<SuiteMap>> suite_;
  std::vector<std::optional<PipelineRun<1>>> runs_;
};

namespace detail {

inline Ambient random_direction(RngStream& rng, TargetKind kind) {
  double phi = rng.uniform(0.0, 2.0 * kPi);
  if (kind == TargetKind::circle) return Ambient(std::cos(phi), std::sin(phi), 0.0);
  double z = rng.uniform(-1.0, 1.0), r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return Ambient(r * std::cos(phi), r * std::sin(phi), z);
}

inline double relative_gap(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline void verify_manifold(VerifyContext& ctx, CheckList& out) {
  const TargetManifold t = ctx.cfg().target_manifold();
  RngStream rng(ctx.cfg().seed, 0x6d01);
  double unit = 0.0, dist = 0.0, tri = -kPi, lower = -kPi, upper = -kPi;
  for (int i = 0; i < 10000; ++i) {
    Ambient x = random_direction(rng, t.kind()) * (2.0 * (1.0 - rng.uniform()));
    Retraction r = t.retract(x);
    unit = std::max(unit, std::abs(r.point.norm() - 1.0));
    dist = std::max(dist, std::abs((x - r.point).norm() - std::abs(1.0 - x.norm())));
  }
  for (int i = 0; i < 10000; ++i) {
    Ambient a = random_direction(rng, t.kind()), b = random_direction(rng, t.kind()), c = random_direction(rng, t.kind());
    double ab = t.geodesic_distance(a, b);
    tri = std::max(tri, ab - t.geodesic_distance(a, c) - t.geodesic_distance(c, b));
    lower = std::max(lower, (a - b).norm() - ab);
    upper = std::max(upper, ab - 0.5 * kPi * (a - b).norm());
  }
  out.at_most("manifold/retraction_unit_norm", unit, 1e-12);
  out.at_most("manifold/retraction_distance", dist, 1e-12);
  out.at_most("manifold/triangle_inequality", tri, 1e-12);
  out.at_most("manifold/chordal_lower_bound", lower, 1e-12);
  out.at_most("manifold/chordal_upper_bound", upper, 1e-12);
}

inline void verify_boundary_map(VerifyContext& ctx, CheckList& out) {
  const auto& cfg = ctx.cfg();
  const QuadratureSpec q = cfg.quadrature();
  const double delta = ctx.cal().delta_cal, p = 2.0;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  for (const auto& s : ctx.suite()) {
    const std::string tag = "boundary_map/" + s.name + "/";
    PairGrid<1> g(s.map, q);
    double worst = -1.0;
    for_each_pair_term<1>(g, q, [&](double d, double w) {
      double gap = d >= delta ? w : 0.0;
      worst = std::max(worst, gap - power(d, p) / power(delta, p) * w);
    });
    out.at_most(tag + "gap_below_energy_termwise", worst, 0.0);
    double e = gagliardo_energy<1>(g, p, q), gap = gap_potential<1>(g, delta, q), tr = truncated_energy<1>(g, delta, p, q);
    out.at_most(tag + "gap_below_energy", gap * power(delta, p), e * (1.0 + 1e-12));
    out.at_most(tag + "truncated_at_zero_is_energy", std::abs(truncated_energy<1>(g, 0.0, p, q) - e), 0.0);
    auto v = s.map.transformed([&](const Ambient& x) { return Ambient(rot * x); });
    PairGrid<1> gv(v, q);
    double iso = std::max({std::abs(gagliardo_energy<1>(gv, p, q) - e), std::abs(gap_potential<1>(gv, delta, q) - gap),
                           std::abs(truncated_energy<1>(gv, delta, p, q) - tr)});
    out.at_most(tag + "isometry_invariance", iso, 1e-12 * std::max(e, 1.0));
    PairGrid<1> gr(s.map.reflected(), q);
    out.at_most(tag + "reflection_invariance", std::abs(gagliardo_energy<1>(gr, p, q) - e), 1e-12 * std::max(e, 1.0));
  }
}

inline void verify_mean_oscillation(VerifyContext& ctx, CheckList& out) {
  const auto& cfg = ctx.cfg();
  const double lo = -cfg.window_margin, width = 1.0 + 2.0 * cfg.window_margin;
  for (const auto& s : ctx.suite()) {
    const std::string tag = "mean_oscillation/" + s.name + "/";
    const double hmin = 2.0 * s.map.spacing(), hmax = 2.0;
    RngStream rng(cfg.seed, 0x6d02);
    double trunc = -1.0, sharp = -1.0, mono = -1.0;
    for (int i = 0; i < cfg.verify_points; ++i) {
      HalfSpacePoint<1> x(domain_point<1>({lo + width * rng.uniform()}), hmin * std::pow(hmax / hmin, rng.uniform()));
      auto st = ball_stencil<1>(s.map, x, StencilSpec{cfg.stencil_resolution});
      for (double p : {1.0, 2.0, 3.0}) {
        double d0 = rng.uniform(0.0, kPi), d1 = rng.uniform(0.0, kPi);
        double lhs = std::pow(mo<1>(st, d1, p), 1.0 / p);
        double rhs = std::pow(mo<1>(st, d0, p), 1.0 / p) + std::max(d0 - d1, 0.0);
        trunc = std::max(trunc, lhs - rhs);
        sharp = std::max(sharp, mo<1>(st, d0, p) - power(2.0, p) * mo_sharp<1>(st, d0 / 2.0, p));
        mono = std::max(mono, mo<1>(st, std::max(d0, d1), p) - mo<1>(st, std::min(d0, d1), p));
      }
    }
    out.at_most(tag + "truncation_comparison", trunc, 1e-12);
    out.at_most(tag + "sharp_comparison", sharp, 1e-12);
    out.at_most(tag + "monotone_in_delta", mono, 0.0);
    // Nested stencils on one lattice: balls of radius t around points of B(x', t) lie in B(x', 2t).
    double fubini = -1.0;
    for (int i = 0; i < 12; ++i) {
      double t = 0.01 * std::pow(40.0, rng.uniform()), xp = rng.uniform();
      Lattice<1> lat{domain_point<1>({0.0}), t / 16};
      double avg = 0.0;
      int count = 0;
      for (long k = -40; k <= 40; ++k) {
        double z = lat.spacing * (std::floor(xp / lat.spacing) + k);
        if (std::abs(z - xp) > t) continue;
        avg += mo_sharp<1>(ball_stencil<1>(s.map, HalfSpacePoint<1>(domain_point<1>({z}), t), lat), 0.0, 2.0);
        ++count;
      }
      avg /= count;
      double rhs = 4.0 * mo<1>(ball_stencil<1>(s.map, HalfSpacePoint<1>(domain_point<1>({xp}), 2 * t), lat), 0.0, 2.0);
      fubini = std::max(fubini, avg - rhs);
    }
    out.at_most(tag + "averaged_comparison", fubini, 1e-6);
  }
}

inline void verify_convolution(VerifyContext& ctx, CheckList& out) {
  const auto& cfg = ctx.cfg();
  for (std::size_t i = 0; i < ctx.suite().size(); ++i) {
    const auto& s = ctx.suite()[i];
    const std::string tag = "convolution_extension/" + s.name + "/";
    PointwiseRatios r = pointwise_ratios<1>(s.map, cfg, ctx.cal().delta_cal, ctx.run(i).band.min_edge, cfg.stencil_resolution);
    out.at_most(tag + "distance_bound", r.dist, ctx.cal().C_dist);
    out.at_most(tag + "gradient_bound", r.grad, ctx.cal().C_grad);
    RngStream rng(cfg.seed, 0x6d03);
    double asym = 0.0;
    for (int k = 0; k < 100; ++k) {
      HalfSpacePoint<1> x(domain_point<1>({rng.uniform()}), 0.02 * std::pow(100.0, rng.uniform()));
      double h = x.height / 1000;
      auto dv = [&](double dx, double dt) {
        return gradient_convolution<1>(s.map, HalfSpacePoint<1>(domain_point<1>({x.x_prime[0] + dx}), x.height + dt)).jacobian;
      };
      Ambient dxt = (dv(0, h).col(0) - dv(0, -h).col(0)) / (2 * h);
      Ambient dtx = (dv(h, 0).col(1) - dv(-h, 0).col(1)) / (2 * h);
      asym = std::max(asym, (dxt - dtx).norm() / std::max(1.0, dxt.norm()));
    }
    out.at_most(tag + "hessian_symmetry", asym, 1e-3);
  }
}

inline void verify_cubes(VerifyContext& ctx, CheckList& out) {
  const auto& cfg = ctx.cfg();
  for (std::size_t i = 0; i < ctx.suite().size(); ++i) {
    const auto& s = ctx.suite()[i];
    const auto& run = ctx.run(i);
    const auto& p = run.selection.params;
    const std::string tag = "lambda_cubes/" + s.name + "/";
    RngStream rng(cfg.seed, 0x6d04);
    double misses = 0.0;
    const double lo = -cfg.window_margin, width = 1.0 + 2.0 * cfg.window_margin;
    for (int k = 0; k < 10000; ++k) {
      double h = p.band_bottom() * std::pow(p.band_top() / p.band_bottom(), rng.uniform());
      if (h >= p.band_top()) continue;
      HalfSpacePoint<1> x(domain_point<1>({lo + width * rng.uniform()}), h);
      auto b = cube_geometry(p, locate(p, x));
      if (!(x.x_prime[0] >= b.lo[0] && x.x_prime[0] < b.hi[0] && x.height >= b.lo[1] && x.height < b.hi[1])) misses += 1.0;
    }
    out.at_most(tag + "locate_covers", misses, 0.0);
    auto ids = enumerate_band(p, run.band);
    std::sort(ids.begin(), ids.end());
    double overlap = 0.0, law = 0.0, faces = 0.0;
    for (std::size_t c = 0; c < ids.size(); ++c) {
      auto b = cube_geometry(p, ids[c]);
      law = std::max(law, (p.edge(ids[c].k) / (p.lambda - 1.0) - b.lo[1]) / p.edge(ids[c].k));
      if (c + 1 < ids.size() && ids[c + 1].k == ids[c].k) overlap = std::max(overlap, b.hi[0] - cube_geometry(p, ids[c + 1]).lo[0]);
      if (c % 16 == 0) {
        FaceSamples<1> f = skeleton_samples(p, ids[c], run.selection.sampling);
        std::set<std::pair<double, double>> seen;
        double tol = 1e-12 * b.hi[1];
        f.for_each([&](const Space<1>& x) {
          bool on_boundary = std::abs(x[0] - b.lo[0]) <= tol || std::abs(x[0] - b.hi[0]) <= tol ||
                             std::abs(x[1] - b.lo[1]) <= tol || std::abs(x[1] - b.hi[1]) <= tol;
          if (!on_boundary || !seen.insert({x[0], x[1]}).second) faces += 1.0;
        });
      }
    }
    out.at_most(tag + "disjoint_interiors", overlap, 0.0);
    out.at_most(tag + "height_edge_law", law, 1e-12);
    out.at_most(tag + "face_decomposition", faces, 0.0);
  }
}

inline void verify_skeleton(VerifyContext& ctx, CheckList& out) {
  const auto& cfg = ctx.cfg();
  const auto& cal = ctx.cal();
  for (std::size_t i = 0; i < ctx.suite().size(); ++i) {
    const auto& s = ctx.suite()[i];
    const auto& run = ctx.run(i);
    const auto& sel = run.selection;
    const std::string tag = "skeleton_selection/" + s.name + "/";
    out.at_most(tag + "selection_distance", sel.distance_ok ? sel.max_distance : kPi, cfg.tube / 2.0);
    double worst = 0.0;
    for (const auto& id : run.classification.good) {
      FaceSamples<1> f = skeleton_samples(sel.params, id, sel.sampling);
      for (const auto& x : f.bottom)
        worst = std::max(worst, power(x[1] * gradient_convolution<1>(s.map, HalfSpacePoint<1>(x)).gradient_norm, 2));
    }
    out.at_most(tag + "good_bottom_samples", worst, run.classification.mu);
    auto wider = classify_cubes(sel, 2.0 * run.classification.mu);
    std::set<CubeId<1>> bad(run.classification.bad.begin(), run.classification.bad.end());
    double moved = 0.0;
    for (const auto& id : wider.bad) moved += bad.count(id) ? 0.0 : 1.0;
    out.at_most(tag + "classification_monotone", moved, 0.0);

    auto b = functional_bounds<1>(s.map, cfg, run.lambda.lambda, run.band, cal.delta_cal, run.energies.truncated,
                                  truncated_energy<1>(s.map, cal.delta_cal / 2.0, 2.0, cfg.quadrature()), cfg.stencil_resolution);
    out.at_most(tag + "longitudinal_bound", b.longitudinal, cal.C_long * b.longitudinal_rhs);
    out.at_most(tag + "transversal_bound", b.transversal, cal.C_trans * b.transversal_rhs);
    out.at_most(tag + "count_bound", b.count, cal.C_count * b.count_rhs);
    double additivity = 0.0;
    for (int d = 0; d < b.report.combined.draws; ++d)
      additivity = std::max(additivity, std::abs(b.report.combined.values[d] -
                                                 (b.report.longitudinal.values[d] + b.report.transversal.values[d])));
    out.at_most(tag + "combined_is_sum", additivity, 0.0);
    auto opt = functional_options<1>(s.map, cfg, run.band, cfg.stencil_resolution, 8);
    std::vector<double> prev;
    double rise = 0.0;
    for (double delta : {cfg.tube / 8.0, cfg.tube / 4.0, cfg.tube / 2.0}) {
      auto c = skeleton_functionals<1>(s.map, run.lambda.lambda, FunctionalRequest{-1.0, 2.0, delta, false}, opt).count.values;
      for (std::size_t d = 0; d < prev.size(); ++d) rise = std::max(rise, c[d] - prev[d]);
      prev = c;
    }
    out.at_most(tag + "count_monotone_in_delta", rise, 0.0);
  }
}

inline BoundaryLoop unit_circle_loop(int n) {
  std::vector<BoundaryLoop::Node> nodes;
  for (int i = 0; i < n; ++i) {
    double l = 2.0 * kPi * i / n;
    Ambient d(-std::sin(l), std::cos(l), 0.0);
    nodes.push_back({l, Ambient(std::cos(l), std::sin(l), 0.0), d, d});
  }
  return BoundaryLoop(std::move(nodes), 2.0 * kPi);
}

// Homogeneous extension of the unit-speed circle on the unit disk: t^2 |{|DW| >= t}| = pi for t >= 1.
inline std::vector<double> disk_scaled_measures(const std::vector<double>& t, int per_face = 512) {
  LoopExtension disk(StarShape::circle, unit_circle_loop(per_face), CubeKind::bad);
  DistributionOptions o;
  o.per_face = per_face;
  auto r = homogeneous_distribution(disk, Space<1>(0.0, 10.0), 1.0, t, o);
  std::vector<double> out;
  for (std::size_t i = 0; i < t.size(); ++i) out.push_back(t[i] * t[i] * r.of(Weight::euclidean)[i]);
  return out;
}

inline void verify_cube_extension(VerifyContext& ctx, CheckList& out) {
  const auto& cfg = ctx.cfg();
  const auto& cal = ctx.cal();
  for (std::size_t i = 0; i < ctx.suite().size(); ++i) {
    const auto& s = ctx.suite()[i];
    const auto& run = ctx.run(i);
    const auto& f = *run.field;
    const std::string tag = "cube_extension/" + s.name + "/";
    for (Weight w : kWeights)
      out.at_most(tag + "weak_type_" + weight_name(w), run.distribution.max_scaled(w), run.distribution.bound_rhs[std::size_t(w)]);
    double scale = std::exp(cal.B_hat * run.energies.gap) * run.energies.energy;
    out.at_most(tag + "bad_count_bound", double(run.classification.bad.size()), cal.C_S * scale);
    ExtensionRatio e = extension_ratio(f);
    out.at_most(tag + "good_extension_energy", e.ratio, cal.C_ext);
    out.at_most(tag + "constant_data_energy", e.flat_energy, 1e-20);
    if (run.energies.winding) out.equal(tag + "winding_sum", run.winding_sum(), *run.energies.winding);
    out.at_most(tag + "same_scale_face_mismatch", f.same_scale_face_mismatch(), 1e-6);
    out.at_most(tag + "tube_distance", f.max_tube_distance(), cfg.tube);
    double rise = 0.0;
    for (Weight w : kWeights)
      for (std::size_t k = 1; k < run.distribution.t.size(); ++k)
        rise = std::max(rise, run.distribution.of(w)[k] - run.distribution.of(w)[k - 1]);
    out.at_most(tag + "measure_monotone_in_t", rise, 0.0);
    RngStream rng(cfg.seed, 0x6d05);
    double unit = 0.0;
    const double bot = f.params().band_bottom(), top = f.params().band_top();
    for (int k = 0; k < cfg.verify_points; ++k) {
      Space<1> x(-cfg.window_margin + (1.0 + 2.0 * cfg.window_margin) * rng.uniform(), bot * std::pow(top / bot, rng.uniform()));
      unit = std::max(unit, std::abs(f.U(x).norm() - 1.0));
    }
    out.at_most(tag + "values_on_target", unit, 1e-12);
  }
  std::vector<double> t{1.0, 2.0, 4.0};
  auto scaled = disk_scaled_measures(t);
  for (std::size_t k = 0; k < t.size(); ++k)
    out.at_most("cube_extension/disk_closed_form_t" + detail::format_double(t[k]), std::abs(scaled[k] - kPi) / kPi, 0.01);
}

template <int D>
void conformal_identities(std::uint64_t seed, CheckList& out) {
  RngStream rng(seed, 0x6d06 + D);
  auto ball_point = [&] {
    Vec<D> x;
    do {
      for (int a = 0; a < D; ++a) x[a] = rng.uniform(-1.0, 1.0);
    } while (!(x.norm() < 1.0));
    return x;
  };
  const Vec<D> e = unit_e<D>();
  double identity = 0.0, inside = kPi, round = 0.0, conformal = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Vec<D> x = ball_point(), y = psi<D>(x);
    identity = std::max(identity, std::abs(e.dot(y) * (x + e).squaredNorm() + 2.0 * x.squaredNorm() - 2.0));
    inside = std::min(inside, e.dot(y));
    if (i < 1000) round = std::max(round, (psi_inverse<D>(y) - x).norm());
    if (i < 100) {
      Eigen::JacobiSVD<Eigen::Matrix<double, D, D>> svd(psi_jacobian<D>(x));
      auto sv = svd.singularValues();
      conformal = std::max(conformal, (sv.maxCoeff() - sv.minCoeff()) / sv.maxCoeff());
    }
  }
  const std::string tag = "conformal/dim" + std::to_string(D) + "/";
  out.at_most(tag + "identity", identity, 1e-12);
  out.add(tag + "ball_to_half_space", inside > 0.0, inside, 0.0);
  out.at_most(tag + "round_trip", round, 1e-10);
  out.at_most(tag + "jacobian_conformal", conformal, 1e-6);
}

inline void verify_conformal(VerifyContext& ctx, CheckList& out) {
  conformal_identities<2>(ctx.cfg().seed, out);
  conformal_identities<3>(ctx.cfg().seed, out);
  const QuadratureSpec q = ctx.cfg().quadrature();
  const auto nodes = circle_nodes(4096);
  int done = 0;
  for (const auto& s : ctx.suite()) {
    if (done == 2 || is_constant_map(s.map) || (s.name != "degree1" && s.name != "bump")) continue;
    SpherePullback<1, BoundaryMap<1>> pb(s.map);
    PairGrid<1> g(s.map, q);
    double delta = ctx.cal().delta_cal;
    const std::string tag = "conformal/" + s.name + "/";
    out.at_most(tag + "energy_invariance", relative_gap(sphere_gagliardo_energy<1>(pb, nodes, 2.0), gagliardo_energy<1>(g, 2.0, q)), 0.02);
    out.at_most(tag + "gap_invariance", relative_gap(sphere_gap_potential<1>(pb, nodes, delta), gap_potential<1>(g, delta, q)), 0.02);
    ++done;
  }
}

inline void verify_cli(VerifyContext& ctx, CheckList& out) {
  auto t = parse_t_grid("0.25:2:16384", "check");
  out.add("cli/t_grid_geometric", t.size() == 17 && t.front() == 0.25 && t.back() == 16384.0, double(t.size()), 17.0);
  std::stringstream ss;
  ctx.cal().write(ss);
  KeyValueFile f = KeyValueFile::parse(ss, "round trip");
  double worst = 0.0;
  for (const char* k : Calibration::kKeys) worst = std::max(worst, std::abs(f.number(k) - ctx.cal().get(k)));
  out.at_most("cli/calibration_round_trip", worst, 0.0);
}

}  // namespace detail

// Runs every invariant block, or only the named one.
inline CheckList run_verify(const RunConfig& cfg, const Calibration& cal, const std::string& only = "") {
  const auto& names = verify_modules();
  if (!only.empty() && std::find(names.begin(), names.end(), only) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown module '" + only + "' (expected one of: " + list + ")");
  }
  if (cfg.m != 1) throw ConfigError(cfg.source + ": verify supports m = 1 only");
  VerifyContext ctx(cfg, cal);
  CheckList out;
  using Block = void (*)(VerifyContext&, CheckList&);
  const std::pair<const char*, Block> blocks[] = {
      {"manifold", detail::verify_manifold},         {"boundary_map", detail::verify_boundary_map},
      {"mean_oscillation", detail::verify_mean_oscillation}, {"convolution_extension", detail::verify_convolution},
      {"lambda_cubes", detail::verify_cubes},        {"skeleton_selection", detail::verify_skeleton},
      {"cube_extension", detail::verify_cube_extension}, {"conformal", detail::verify_conformal},
      {"cli", detail::verify_cli}};
  for (const auto& [name, block] : blocks)
    if (only.empty() || only == name) block(ctx, out);
  return out;
}

}  // namespace singext
