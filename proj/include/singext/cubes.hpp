#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace singext {

template <int M>
struct CubeId {
  long k = 0;
  std::array<long, M> j{};

  auto operator<=>(const CubeId&) const = default;
  bool operator==(const CubeId&) const = default;

  std::string str() const {
    std::string s = "(k=" + std::to_string(k) + ", j=";
    for (int a = 0; a < M; ++a) s += (a ? "," : "") + std::to_string(j[a]);
    return s + ")";
  }
};

template <int M>
struct CubeIdHash {
  std::size_t operator()(const CubeId<M>& id) const {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(id.k));
    for (int a = 0; a < M; ++a) h = splitmix64(h ^ static_cast<std::uint64_t>(id.j[a]));
    return static_cast<std::size_t>(h);
  }
};

// lambda-adic family: cubes of edge tau * lambda^-k shifted by tau * lambda^-k * h_k,
// stacked over the height band [edge/(lambda-1), lambda*edge/(lambda-1)).
template <int M>
struct CubeFamilyParams {
  double lambda = 2.0;
  double tau = 1.0;
  long k_min = 0;
  long k_max = 0;
  std::vector<Domain<M>> translations = {Domain<M>::Zero()};  // one entry broadcasts to all k

  void validate() const {
    if (!(lambda >= 2.0) || !std::isfinite(lambda)) throw ConfigError("cube family: lambda must be >= 2");
    if (!(tau >= 1.0 && tau <= lambda)) throw ConfigError("cube family: tau must lie in [1, lambda]");
    if (k_max < k_min) throw ConfigError("cube family: empty scale range");
    std::size_t need = std::size_t(k_max - k_min + 1);
    if (translations.size() != 1 && translations.size() != need)
      throw ConfigError("cube family: translations must be broadcast or one per scale");
    for (const auto& h : translations)
      for (int a = 0; a < M; ++a)
        if (!(h[a] >= 0.0 && h[a] <= 1.0)) throw ConfigError("cube family: translation outside [0,1]^m");
  }

  bool has_scale(long k) const { return k >= k_min && k <= k_max; }
  const Domain<M>& h(long k) const { return translations.size() == 1 ? translations[0] : translations[std::size_t(k - k_min)]; }
  double edge(long k) const { return tau * std::pow(lambda, -double(k)); }
  double bottom(long k) const { return edge(k) / (lambda - 1.0); }
  double top(long k) const { return tau * std::pow(lambda, -double(k - 1)) / (lambda - 1.0); }
  double band_bottom() const { return bottom(k_max); }
  double band_top() const { return top(k_min); }
};

template <int M>
Box<M + 1> cube_geometry(const CubeFamilyParams<M>& p, const CubeId<M>& id) {
  if (!p.has_scale(id.k)) throw OutOfRange("cube scale " + std::to_string(id.k) + " outside the active range");
  double e = p.edge(id.k);
  const Domain<M>& h = p.h(id.k);
  Box<M + 1> b;
  for (int a = 0; a < M; ++a) {
    b.lo[a] = e * (double(id.j[a]) + h[a]);
    b.hi[a] = e * (double(id.j[a]) + 1.0 + h[a]);
  }
  b.lo[M] = p.bottom(id.k);
  b.hi[M] = p.top(id.k);
  return b;
}

template <int M>
Space<M> cube_center(const CubeFamilyParams<M>& p, const CubeId<M>& id) {
  return cube_geometry(p, id).center();
}

// Scale whose half-open band [bottom, top) holds the height, ignoring the active range.
template <int M>
long scale_of_height(const CubeFamilyParams<M>& p, double height) {
  double q = height * (p.lambda - 1.0) / p.tau;
  long k = -static_cast<long>(std::floor(std::log(q) / std::log(p.lambda)));
  while (height < p.bottom(k)) ++k;
  while (height >= p.top(k)) --k;
  return k;
}

template <int M>
CubeId<M> locate(const CubeFamilyParams<M>& p, const HalfSpacePoint<M>& x) {
  if (x.height < p.band_bottom())
    throw OutOfBand("height " + std::to_string(x.height) + " below the cube band", p.k_max);
  if (x.height >= p.band_top()) throw OutOfBand("height " + std::to_string(x.height) + " above the cube band", p.k_min);
  CubeId<M> id;
  id.k = std::clamp(scale_of_height(p, x.height), p.k_min, p.k_max);
  double e = p.edge(id.k);
  const Domain<M>& h = p.h(id.k);
  for (int a = 0; a < M; ++a) {
    long j = static_cast<long>(std::floor(x.x_prime[a] / e - h[a]));
    while (x.x_prime[a] < e * (double(j) + h[a])) --j;
    while (x.x_prime[a] >= e * (double(j) + 1.0 + h[a])) ++j;
    id.j[a] = j;
  }
  return id;
}

// All cubes of the active scales whose half-open footprint meets the half-open window.
template <int M>
std::vector<CubeId<M>> enumerate_window(const CubeFamilyParams<M>& p, const Box<M>& window) {
  p.validate();
  std::vector<CubeId<M>> out;
  for (long k = p.k_min; k <= p.k_max; ++k) {
    double e = p.edge(k);
    const Domain<M>& h = p.h(k);
    std::array<long, M> lo, hi;
    for (int a = 0; a < M; ++a) {
      // footprint [e(j+h), e(j+1+h)) meets [w0, w1) iff j > w0/e - 1 - h and j < w1/e - h
      lo[a] = static_cast<long>(std::floor(window.lo[a] / e - 1.0 - h[a])) + 1;
      hi[a] = static_cast<long>(std::ceil(window.hi[a] / e - h[a])) - 1;
      while (e * (double(lo[a]) + 1.0 + h[a]) <= window.lo[a]) ++lo[a];
      while (e * (double(hi[a]) + h[a]) >= window.hi[a]) --hi[a];
      if (hi[a] < lo[a]) goto next_scale;
    }
    if constexpr (M == 1) {
      for (long j = lo[0]; j <= hi[0]; ++j) out.push_back({k, {j}});
    } else {
      for (long j0 = lo[0]; j0 <= hi[0]; ++j0)
        for (long j1 = lo[1]; j1 <= hi[1]; ++j1) out.push_back({k, {j0, j1}});
    }
  next_scale:;
  }
  return out;
}

// Boundary sampling of a cube. density counts intervals per edge (so density + 1 points per
// edge and doubling the density nests the grids). With kappa > 0 the grid is graded: at height
// z the horizontal spacing is refined by doublings until it is at most max(z, min_spacing)/kappa,
// and lateral heights are geometric with ratio at most 1 + 1/kappa. All counts are density times
// a power of two, so coarser levels are sub-grids of finer ones.
struct SkeletonSampling {
  int density = 2;
  double kappa = 0.0;
  double min_spacing = 0.0;
  int max_intervals = 1 << 17;
};

template <int M>
struct FaceSamples {
  std::vector<Space<M>> bottom;   // parallel face
  std::vector<Space<M>> lateral;  // 2m perpendicular faces, without the bottom/top rims
  std::vector<Space<M>> top;

  std::size_t size() const { return bottom.size() + lateral.size() + top.size(); }
  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& x : bottom) fn(x);
    for (const auto& x : top) fn(x);
    for (const auto& x : lateral) fn(x);
  }
};

struct SkeletonGrid {
  std::vector<double> heights;  // bottom .. top
  std::vector<int> horizontal;  // intervals per edge at each height level
  bool graded = false;
};

template <int M>
SkeletonGrid skeleton_grid(const CubeFamilyParams<M>& p, long k, const SkeletonSampling& s) {
  if (s.density < 2) throw ResolutionError("skeleton sampling needs at least 2 intervals per edge");
  SkeletonGrid g;
  g.graded = s.kappa > 0.0;
  const double lo = p.bottom(k), hi = p.top(k), e = p.edge(k);
  int nv = s.density;
  if (g.graded)
    while (std::pow(p.lambda, 1.0 / nv) - 1.0 > 1.0 / s.kappa && nv < s.max_intervals) nv *= 2;
  g.heights.resize(nv + 1);
  for (int i = 0; i <= nv; ++i) g.heights[i] = g.graded ? lo * std::pow(p.lambda, double(i) / nv) : lo + (hi - lo) * i / nv;
  g.heights.front() = lo;
  g.heights.back() = hi;
  g.horizontal.assign(nv + 1, s.density);
  if (g.graded) {
    for (int i = 0; i <= nv; ++i) {
      double target = std::max(g.heights[i], s.min_spacing) / s.kappa;
      int n = s.density;
      while (e / n > target && n < s.max_intervals) n *= 2;
      g.horizontal[i] = n;
    }
  }
  return g;
}

namespace detail {

inline std::vector<double> edge_coords(double lo, double hi, int n) {
  std::vector<double> c(n + 1);
  for (int i = 0; i <= n; ++i) c[i] = lo + (hi - lo) * i / n;
  c.back() = hi;
  return c;
}

}  // namespace detail

template <int M>
FaceSamples<M> skeleton_samples(const CubeFamilyParams<M>& p, const CubeId<M>& id, const SkeletonSampling& s) {
  Box<M + 1> b = cube_geometry(p, id);
  SkeletonGrid g = skeleton_grid(p, id.k, s);
  const std::size_t nv = g.heights.size() - 1;
  FaceSamples<M> out;
  auto level = [&](std::vector<Space<M>>& dst, std::size_t lv, bool full) {
    int n = g.horizontal[lv];
    double z = g.heights[lv];
    auto c0 = detail::edge_coords(b.lo[0], b.hi[0], n);
    if constexpr (M == 1) {
      for (int i = 0; i <= n; ++i)
        if (full || i == 0 || i == n) dst.push_back(Space<M>(c0[i], z));
    } else {
      auto c1 = detail::edge_coords(b.lo[1], b.hi[1], n);
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
          if (full || i == 0 || i == n || j == 0 || j == n) dst.push_back(Space<M>(c0[i], c1[j], z));
    }
  };
  level(out.bottom, 0, true);
  level(out.top, nv, true);
  for (std::size_t v = 1; v < nv; ++v) level(out.lateral, v, false);
  return out;
}

template <int M>
std::vector<HalfSpacePoint<M>> sample_boundary(const CubeFamilyParams<M>& p, const CubeId<M>& id, int density) {
  FaceSamples<M> f = skeleton_samples(p, id, SkeletonSampling{density});
  std::vector<HalfSpacePoint<M>> out;
  out.reserve(f.size());
  f.for_each([&](const Space<M>& x) { out.emplace_back(x); });
  return out;
}

template <int M>
void write_cubes_csv(std::ostream& out, const CubeFamilyParams<M>& p, const std::vector<CubeId<M>>& ids) {
  out << "k";
  for (int a = 0; a < M; ++a) out << ",j" << a;
  for (int a = 0; a <= M; ++a) out << ",x_lo" << a;
  for (int a = 0; a <= M; ++a) out << ",x_hi" << a;
  out << "\n";
  char buf[40];
  for (const auto& id : ids) {
    Box<M + 1> b = cube_geometry(p, id);
    out << id.k;
    for (int a = 0; a < M; ++a) out << "," << id.j[a];
    for (int a = 0; a <= M; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", b.lo[a]);
      out << "," << buf;
    }
    for (int a = 0; a <= M; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", b.hi[a]);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace singext
