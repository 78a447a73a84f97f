#pragma once

#include <map>
#include <optional>

#include "convolution.hpp"
#include "cubes.hpp"
#include "mean_oscillation.hpp"

namespace singext {

struct CalibrationConstants {
  double B_lambda = 0.02;
  double eta = 0.5;
  double C_mu = 2.0;
  int selection_budget = 16;  // candidate tau values (half log-grid, half random)
  int h_candidates = 4;       // candidate translations per axis and scale
  double lambda_max = 1e6;

  void validate() const {
    if (!(B_lambda > 0 && eta > 0 && eta < 1 && C_mu > 0 && selection_budget > 0 && h_candidates > 0 && lambda_max >= 2))
      throw ConfigError("calibration constants must be positive with eta < 1");
  }
};

// Which part of the half-space the finite cube family has to cover. At scale k the cubes cover
// the footprint dilated by the scale's top height: outside that cone every convolution ball
// misses the map window, so V is exactly the far value there.
template <int M>
struct BandSpec {
  double min_edge = 1.0 / 256;  // smallest admissible cube edge
  double top_height = 64.0;     // the coarsest band must reach this height
  Box<M> footprint = unit_window<M>();
};

template <int M>
Box<M> scale_footprint(const BandSpec<M>& band, const CubeFamilyParams<M>& p, long k) {
  Box<M> b = band.footprint;
  b.lo.array() -= p.top(k);
  b.hi.array() += p.top(k);
  return b;
}

// Every cube of the family meeting the cone of its scale, ordered by scale then index.
template <int M>
std::vector<CubeId<M>> enumerate_band(const CubeFamilyParams<M>& p, const BandSpec<M>& band) {
  std::vector<CubeId<M>> out;
  for (long k = p.k_min; k <= p.k_max; ++k) {
    CubeFamilyParams<M> single = p;
    single.k_min = single.k_max = k;
    single.translations = {p.h(k)};
    auto ids = enumerate_window(single, scale_footprint(band, p, k));
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

// Scales with edge >= min_edge whose bands reach top_height (at least one scale).
template <int M>
std::pair<long, long> scale_range(double lambda, double tau, const BandSpec<M>& band) {
  double L = std::log(lambda);
  long k_max = static_cast<long>(std::floor(std::log(tau / band.min_edge) / L + 1e-12));
  long k_min = static_cast<long>(std::floor(1.0 - std::log(band.top_height * (lambda - 1.0) / tau) / L));
  if (k_max < k_min) k_max = k_min;
  return {k_min, k_max};
}

template <int M>
CubeFamilyParams<M> family_for(double lambda, double tau, const BandSpec<M>& band, std::vector<Domain<M>> h) {
  CubeFamilyParams<M> p;
  p.lambda = lambda;
  p.tau = tau;
  std::tie(p.k_min, p.k_max) = scale_range(lambda, tau, band);
  p.translations = std::move(h);
  if (p.translations.size() != 1 && p.translations.size() != std::size_t(p.k_max - p.k_min + 1))
    p.translations.resize(std::size_t(p.k_max - p.k_min + 1), Domain<M>::Zero());
  return p;
}

// Smallest power-of-two height (>= 1) at which the pair oscillation over balls centered in the
// footprint drops below the floor; the cube band stops there and V is used above.
template <int M, class Field>
  requires BoundaryField<Field, M>
double oscillation_top_height(const Field& u, double p, double floor, const Box<M>& footprint, const StencilSpec& spec = {}) {
  const int probes = 9;
  for (double H = 1.0; H < 1e7; H *= 2.0) {
    double worst = 0.0;
    for (int i = 0; i < (M == 1 ? probes : probes * probes); ++i) {
      Domain<M> x;
      int r = i;
      for (int a = 0; a < M; ++a) {
        x[a] = footprint.lo[a] + (footprint.hi[a] - footprint.lo[a]) * (r % probes) / (probes - 1);
        r /= probes;
      }
      worst = std::max(worst, mo<M>(u, HalfSpacePoint<M>(x, H), 0.0, p, spec));
    }
    if (worst <= floor) return H;
  }
  return 1e7;
}

struct LambdaChoice {
  double lambda;
  bool capped;
};

inline LambdaChoice choose_lambda(double gap, const CalibrationConstants& c) {
  if (!(gap >= 0.0)) throw ConfigError("gap potential must be >= 0");
  double e = c.B_lambda * gap;
  if (e > std::log(c.lambda_max)) return {c.lambda_max, true};
  return {std::max(2.0, std::exp(e)), false};
}

// ---------------------------------------------------------------------------
// Per-scale skeleton evaluation of V.

template <int M>
struct ScaleEvaluation {
  long k = 0;
  Domain<M> h = Domain<M>::Zero();
  bool distance_ok = true;
  double budget = 0.0;  // sum over cubes of sup x_{m+1}^{m+1} |DV|^{m+1}
  double max_distance = 0.0;
  std::vector<CubeId<M>> cubes;
  std::vector<double> cube_sup;
};

template <int M, class Field>
  requires BoundaryField<Field, M>
ScaleEvaluation<M> evaluate_scale(const Field& u, const CubeFamilyParams<M>& p, long k, const BandSpec<M>& band,
                                  const SkeletonSampling& sampling, double distance_limit, bool stop_on_violation,
                                  const ConvolutionQuadrature& q = {}) {
  ScaleEvaluation<M> out;
  out.k = k;
  out.h = p.h(k);
  CubeFamilyParams<M> single = p;
  single.k_min = single.k_max = k;
  single.translations = {p.h(k)};
  out.cubes = enumerate_window(single, scale_footprint(band, p, k));
  out.cube_sup.assign(out.cubes.size(), 0.0);
  for (std::size_t c = 0; c < out.cubes.size(); ++c) {
    FaceSamples<M> f = skeleton_samples(single, out.cubes[c], sampling);
    double sup = 0.0;
    bool violated = false;
    f.for_each([&](const Space<M>& x) {
      if (violated) return;
      auto s = gradient_convolution<M>(u, HalfSpacePoint<M>(x), q);
      double dist = TargetManifold::distance_to_manifold(s.value);
      out.max_distance = std::max(out.max_distance, dist);
      if (dist > distance_limit) {
        out.distance_ok = false;
        if (stop_on_violation) violated = true;
      }
      sup = std::max(sup, power(x[M] * s.gradient_norm, M + 1));
    });
    if (violated) return out;
    out.cube_sup[c] = sup;
    out.budget += sup;
  }
  return out;
}

template <int M>
struct SkeletonSelection {
  double lambda = 2.0;
  double tau = 1.0;
  std::map<long, Domain<M>> h_by_scale;
  double oscillation_budget = 0.0;
  bool distance_ok = false;
  double max_distance = 0.0;
  int tau_candidates_tried = 0;
  CubeFamilyParams<M> params;
  BandSpec<M> band;
  SkeletonSampling sampling;
  std::vector<ScaleEvaluation<M>> scales;  // evaluation of the chosen translations
};

template <int M>
struct SelectionOptions {
  BandSpec<M> band;
  SkeletonSampling sampling{2, 2.0, 0.0};
  std::uint64_t seed = 1;
  ConvolutionQuadrature quadrature;
};

// Translation candidates for one scale: a centered grid, identical for every scale and tau.
template <int M>
std::vector<Domain<M>> translation_candidates(int per_axis) {
  std::vector<Domain<M>> out;
  int total = M == 1 ? per_axis : per_axis * per_axis;
  for (int i = 0; i < total; ++i) {
    Domain<M> h;
    int r = i;
    for (int a = 0; a < M; ++a) {
      h[a] = (double(r % per_axis) + 0.5) / per_axis;
      r /= per_axis;
    }
    out.push_back(h);
  }
  return out;
}

template <int M>
std::vector<double> tau_candidates(double lambda, int budget, std::uint64_t seed) {
  std::vector<double> out;
  int grid = (budget + 1) / 2;
  for (int i = 0; i < grid; ++i) out.push_back(std::pow(lambda, (i + 0.5) / grid));
  RngStream rng(seed, 0x7a75);
  while (int(out.size()) < budget) out.push_back(std::pow(lambda, rng.uniform()));
  return out;
}

// Chooses tau and per-scale translations so that every skeleton sample satisfies
// dist(V, N) <= delta_N / 2, minimizing the summed per-cube gradient sup.
template <int M, class Field>
  requires BoundaryField<Field, M>
SkeletonSelection<M> select_tau_h(const Field& u, double lambda, double tube, const CalibrationConstants& consts,
                                  const SelectionOptions<M>& opt) {
  if (!(lambda >= 2.0)) throw ConfigError("lambda must be >= 2");
  const double limit = tube / 2.0;
  const auto hs = translation_candidates<M>(consts.h_candidates);
  std::optional<SkeletonSelection<M>> best;
  int tried = 0;
  for (double tau : tau_candidates<M>(lambda, consts.selection_budget, opt.seed)) {
    ++tried;
    auto base = family_for<M>(lambda, tau, opt.band, {Domain<M>::Zero()});
    std::vector<ScaleEvaluation<M>> chosen;
    double total = 0.0;
    bool ok = true;
    for (long k = base.k_min; k <= base.k_max && ok; ++k) {
      std::optional<ScaleEvaluation<M>> pick;
      for (const auto& h : hs) {
        CubeFamilyParams<M> p = base;
        p.translations = {h};
        auto ev = evaluate_scale<M>(u, p, k, opt.band, opt.sampling, limit, true, opt.quadrature);
        if (!ev.distance_ok) continue;
        if (!pick || ev.budget < pick->budget) pick = std::move(ev);
        if (pick->budget == 0.0) break;
      }
      if (!pick) {
        ok = false;
        break;
      }
      total += pick->budget;
      chosen.push_back(std::move(*pick));
      if (best && total >= best->oscillation_budget) ok = false;  // cannot improve
    }
    if (!ok) continue;
    SkeletonSelection<M> s;
    s.lambda = lambda;
    s.tau = tau;
    s.oscillation_budget = total;
    s.distance_ok = true;
    s.band = opt.band;
    s.sampling = opt.sampling;
    s.params = base;
    s.params.translations.clear();
    for (const auto& ev : chosen) {
      s.h_by_scale[ev.k] = ev.h;
      s.params.translations.push_back(ev.h);
      s.max_distance = std::max(s.max_distance, ev.max_distance);
    }
    s.scales = std::move(chosen);
    best = std::move(s);
    if (best->oscillation_budget == 0.0) break;
  }
  if (!best)
    throw SelectionFailure("no (tau, h) candidate keeps the convolution extension within delta_N/2 on the skeleton "
                           "(lambda = " + std::to_string(lambda) + "); increase B_lambda");
  best->tau_candidates_tried = tried;
  return *best;
}

template <int M>
struct CubeClassification {
  std::vector<CubeId<M>> good;
  std::vector<CubeId<M>> bad;
  double mu = 0.0;
  std::map<CubeId<M>, double> per_cube_sup;
};

inline double good_threshold(double tube, double lambda, double C_mu, int m) {
  return power(tube / (2.0 * C_mu * (lambda - 1.0)), m + 1);
}

template <int M>
CubeClassification<M> classify_cubes(const SkeletonSelection<M>& sel, double mu) {
  if (!sel.distance_ok) throw SelectionFailure("classification needs a valid selection");
  CubeClassification<M> c;
  c.mu = mu;
  for (const auto& ev : sel.scales)
    for (std::size_t i = 0; i < ev.cubes.size(); ++i) {
      c.per_cube_sup[ev.cubes[i]] = ev.cube_sup[i];
      (ev.cube_sup[i] <= mu ? c.good : c.bad).push_back(ev.cubes[i]);
    }
  return c;
}

template <int M>
CubeClassification<M> classify_cubes(const SkeletonSelection<M>& sel, const CalibrationConstants& consts, double tube) {
  return classify_cubes(sel, good_threshold(tube, sel.lambda, consts.C_mu, M));
}

// ---------------------------------------------------------------------------
// Monte-Carlo skeleton functionals averaged over tau (log-uniform) and h (uniform).

struct FunctionalEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  int draws = 0;
  std::vector<double> values;

  static FunctionalEstimate from(std::vector<double> v) {
    FunctionalEstimate e;
    e.draws = int(v.size());
    CompensatedSum s;
    for (double x : v) s.add(x);
    e.estimate = v.empty() ? 0.0 : s.value() / v.size();
    if (v.size() > 1) {
      CompensatedSum q;
      for (double x : v) q.add((x - e.estimate) * (x - e.estimate));
      e.std_error = std::sqrt(q.value() / (v.size() - 1) / v.size());
    }
    e.values = std::move(v);
    return e;
  }
};

template <int M>
struct FunctionalOptions {
  int draws = 64;
  std::uint64_t seed = 1;
  BandSpec<M> band;
  SkeletonSampling sampling{2, 1.0, 0.0};
  StencilSpec stencil{8};
  ConvolutionQuadrature quadrature;
};

struct FunctionalRequest {
  double delta_mo = -1.0;     // < 0: skip the oscillation functionals
  double p = 2.0;
  double delta_count = -1.0;  // < 0: skip the counting functional
  bool sobolev = false;
};

struct FunctionalReport {
  FunctionalEstimate longitudinal, transversal, combined, count, sobolev;
};

namespace detail {

// Closed-face sample grid of one face: `axis` is fixed at `fixed` (axis M: the bottom face,
// sampled at level 0); lateral faces use every height level with its own horizontal count.
template <int M>
std::vector<Space<M>> face_grid(const Box<M + 1>& b, int axis, double fixed, const SkeletonGrid& g) {
  std::vector<Space<M>> out;
  std::size_t levels = axis == M ? 1 : g.heights.size();
  for (std::size_t lv = 0; lv < levels; ++lv) {
    double z = axis == M ? fixed : g.heights[lv];
    int n = g.horizontal[lv];
    if constexpr (M == 1) {
      if (axis == M) {
        for (double x : edge_coords(b.lo[0], b.hi[0], n)) out.push_back(Space<M>(x, z));
      } else {
        out.push_back(Space<M>(fixed, z));
      }
    } else {
      int other = axis == 0 ? 1 : 0;
      if (axis == M) {
        auto c0 = edge_coords(b.lo[0], b.hi[0], n), c1 = edge_coords(b.lo[1], b.hi[1], n);
        for (double x0 : c0)
          for (double x1 : c1) out.push_back(Space<M>(x0, x1, z));
      } else {
        for (double x : edge_coords(b.lo[other], b.hi[other], n)) {
          Space<M> pt;
          pt[axis] = fixed;
          pt[other] = x;
          pt[M] = z;
          out.push_back(pt);
        }
      }
    }
  }
  return out;
}

}  // namespace detail

template <int M, class Field>
  requires BoundaryField<Field, M>
FunctionalReport skeleton_functionals(const Field& u, double lambda, const FunctionalRequest& req, const FunctionalOptions<M>& opt) {
  if (!(lambda >= 2.0)) throw ConfigError("lambda must be >= 2");
  std::vector<double> L(opt.draws), T(opt.draws), C(opt.draws), S(opt.draws);
  const bool want_mo = req.delta_mo >= 0.0;
  const bool mo_trivial = req.delta_mo >= kPi;
  parallel_for(std::size_t(opt.draws), [&](std::size_t draw) {
    CounterRng rng(opt.seed, 0x5f3759df + draw);
    double tau = std::pow(lambda, rng.uniform(0));
    Domain<M> h;
    for (int a = 0; a < M; ++a) h[a] = rng.uniform(1 + a);
    auto p = family_for<M>(lambda, tau, opt.band, {h});
    auto ids = enumerate_band(p, opt.band);
    CompensatedSum l, t, c, s;
    // Lateral faces are shared by neighbours: key (k, axis, coordinate index).
    std::map<std::tuple<long, int, std::array<long, M>>, double> lateral;
    for (const auto& id : ids) {
      Box<M + 1> b = cube_geometry(p, id);
      SkeletonGrid g = skeleton_grid(p, id.k, opt.sampling);
      auto sup_mo = [&](const std::vector<Space<M>>& pts) {
        double m = 0.0;
        if (mo_trivial) return m;
        for (const auto& x : pts) m = std::max(m, mo<M>(u, HalfSpacePoint<M>(x), req.delta_mo, req.p, opt.stencil));
        return m;
      };
      if (want_mo) {
        l.add(sup_mo(detail::face_grid<M>(b, M, b.lo[M], g)));
        for (int a = 0; a < M; ++a) {
          for (int side = 0; side < 2; ++side) {
            std::array<long, M> key = id.j;
            key[a] += side;
            auto k = std::make_tuple(id.k, a, key);
            if (lateral.count(k)) continue;
            lateral[k] = sup_mo(detail::face_grid<M>(b, a, side ? b.hi[a] : b.lo[a], g));
          }
        }
      }
      if (req.delta_count >= 0.0 || req.sobolev) {
        FaceSamples<M> f = skeleton_samples(p, id, opt.sampling);
        double dmax = 0.0, gsup = 0.0;
        f.for_each([&](const Space<M>& x) {
          if (req.sobolev) {
            auto sm = gradient_convolution<M>(u, HalfSpacePoint<M>(x), opt.quadrature);
            dmax = std::max(dmax, TargetManifold::distance_to_manifold(sm.value));
            gsup = std::max(gsup, power(x[M] * sm.gradient_norm, M + 1));
          } else {
            dmax = std::max(dmax, TargetManifold::distance_to_manifold(extend_convolution<M>(u, HalfSpacePoint<M>(x), opt.quadrature)));
          }
        });
        if (req.delta_count >= 0.0 && dmax >= req.delta_count) c.add(1.0);
        s.add(gsup);
      }
    }
    for (const auto& [k, v] : lateral) t.add(v);
    L[draw] = l.value();
    T[draw] = t.value();
    C[draw] = c.value();
    S[draw] = s.value();
  });
  FunctionalReport r;
  std::vector<double> sum(opt.draws);
  for (int i = 0; i < opt.draws; ++i) sum[i] = L[i] + T[i];
  r.longitudinal = FunctionalEstimate::from(L);
  r.transversal = FunctionalEstimate::from(T);
  r.combined = FunctionalEstimate::from(sum);
  r.count = FunctionalEstimate::from(C);
  r.sobolev = FunctionalEstimate::from(S);
  return r;
}

template <int M, class Field>
  requires BoundaryField<Field, M>
FunctionalEstimate longitudinal_functional(const Field& u, double lambda, double delta, double p, const FunctionalOptions<M>& opt) {
  return skeleton_functionals<M>(u, lambda, FunctionalRequest{delta, p}, opt).longitudinal;
}

template <int M, class Field>
  requires BoundaryField<Field, M>
FunctionalEstimate transversal_functional(const Field& u, double lambda, double delta, double p, const FunctionalOptions<M>& opt) {
  return skeleton_functionals<M>(u, lambda, FunctionalRequest{delta, p}, opt).transversal;
}

template <int M, class Field>
  requires BoundaryField<Field, M>
FunctionalEstimate counting_functional(const Field& u, double lambda, double delta, const FunctionalOptions<M>& opt) {
  if (!(delta > 0.0)) throw ConfigError("counting threshold must be > 0");
  return skeleton_functionals<M>(u, lambda, FunctionalRequest{-1.0, double(M + 1), delta}, opt).count;
}

template <int M, class Field>
  requires BoundaryField<Field, M>
double skeleton_sup_mo(const Field& u, const CubeFamilyParams<M>& p, const CubeId<M>& id, double delta, double pexp,
                       int density, const StencilSpec& stencil = {}) {
  double m = 0.0;
  for (const auto& x : sample_boundary(p, id, density)) m = std::max(m, mo<M>(u, x, delta, pexp, stencil));
  return m;
}

}  // namespace singext
