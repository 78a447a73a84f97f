#pragma once

#include <limits>

#include "boundary_map.hpp"

namespace singext {

// Regular lattice origin + spacing * k, k integer.
template <int M>
struct Lattice {
  Domain<M> origin;
  double spacing;
};

// Points of a lattice inside the closed ball B(x', x_{m+1}). Only points inside the map's
// window are stored; the others all carry far_value and are only counted.
template <int M>
struct BallStencil {
  std::vector<Domain<M>> points;
  std::vector<Ambient> values;
  long outside = 0;
  Ambient far;

  long total() const { return long(values.size()) + outside; }
};

struct StencilSpec {
  int resolution = 16;            // lattice points per ball radius
  double spacing_cap_radius = 1.0;  // spacing = min(radius, cap) / resolution
};

template <int M>
Lattice<M> centered_lattice(const HalfSpacePoint<M>& x, const StencilSpec& spec) {
  if (spec.resolution < 1) throw ConfigError("stencil resolution must be >= 1");
  double s = std::min(x.height, spec.spacing_cap_radius) / spec.resolution;
  return {Domain<M>(x.x_prime.array() + 0.5 * s), s};
}

template <int M, class Field>
  requires BoundaryField<Field, M>
BallStencil<M> ball_stencil(const Field& u, const HalfSpacePoint<M>& x, const Lattice<M>& lat) {
  BallStencil<M> st;
  st.far = u.far_value();
  const Box<M> w = u.window();
  const double t = x.height, s = lat.spacing;
  auto krange = [&](double center, double half, int axis, long& lo, long& hi) {
    lo = static_cast<long>(std::ceil((center - half - lat.origin[axis]) / s));
    hi = static_cast<long>(std::floor((center + half - lat.origin[axis]) / s));
  };
  auto clip = [&](long lo, long hi, int axis, long& a, long& b) {
    a = std::max(lo, static_cast<long>(std::ceil((w.lo[axis] - lat.origin[axis]) / s)));
    b = std::min(hi, static_cast<long>(std::floor((w.hi[axis] - lat.origin[axis]) / s)));
  };
  if constexpr (M == 1) {
    long lo, hi, a, b;
    krange(x.x_prime[0], t, 0, lo, hi);
    // Exact closed-ball membership, independent of the rounding in krange.
    while (lo <= hi && std::abs(lat.origin[0] + s * lo - x.x_prime[0]) > t) ++lo;
    while (hi >= lo && std::abs(lat.origin[0] + s * hi - x.x_prime[0]) > t) --hi;
    long n = std::max(0L, hi - lo + 1);
    clip(lo, hi, 0, a, b);
    for (long k = a; k <= b; ++k) {
      Domain<M> y;
      y[0] = lat.origin[0] + s * k;
      if (!w.contains(y)) continue;
      st.points.push_back(y);
      st.values.push_back(u(y));
    }
    st.outside = n - long(st.values.size());
  } else {
    long r0, r1;
    krange(x.x_prime[0], t, 0, r0, r1);
    long count = 0;
    for (long r = r0; r <= r1; ++r) {
      double y0 = lat.origin[0] + s * r;
      double dy = y0 - x.x_prime[0];
      double rem = t * t - dy * dy;
      if (rem < 0.0) continue;
      double half = std::sqrt(rem);
      long lo, hi;
      krange(x.x_prime[1], half, 1, lo, hi);
      auto inside = [&](long k) {
        double d1 = lat.origin[1] + s * k - x.x_prime[1];
        return dy * dy + d1 * d1 <= t * t;
      };
      while (lo <= hi && !inside(lo)) ++lo;
      while (hi >= lo && !inside(hi)) --hi;
      if (hi < lo) continue;
      count += hi - lo + 1;
      if (y0 < w.lo[0] || y0 > w.hi[0]) continue;
      long a, b;
      clip(lo, hi, 1, a, b);
      for (long k = a; k <= b; ++k) {
        Domain<M> y(y0, lat.origin[1] + s * k);
        if (!w.contains(y)) continue;
        st.points.push_back(y);
        st.values.push_back(u(y));
      }
    }
    st.outside = count - long(st.values.size());
  }
  return st;
}

template <int M, class Field>
  requires BoundaryField<Field, M>
BallStencil<M> ball_stencil(const Field& u, const HalfSpacePoint<M>& x, const StencilSpec& spec) {
  return ball_stencil<M>(u, x, centered_lattice<M>(x, spec));
}

inline double truncated_power(double d, double delta, double p) {
  double e = d - delta;
  return e > 0.0 ? power(e, p) : 0.0;
}

// Pair average of (d - delta)_+^p over the stencil measure.
template <int M>
double mo(const BallStencil<M>& st, double delta, double p) {
  if (!(p >= 1.0)) throw ConfigError("exponent p must be >= 1");
  if (!(delta >= 0.0)) throw ConfigError("truncation must be >= 0");
  long N = st.total();
  if (N == 0) return 0.0;
  const auto& v = st.values;
  CompensatedSum inner, outer;
  for (std::size_t a = 0; a < v.size(); ++a) {
    for (std::size_t b = a + 1; b < v.size(); ++b)
      inner.add(truncated_power(TargetManifold::distance_unchecked(v[a], v[b]), delta, p));
    if (st.outside > 0) outer.add(truncated_power(TargetManifold::distance_unchecked(v[a], st.far), delta, p));
  }
  double sum = 2.0 * inner.value() + 2.0 * double(st.outside) * outer.value();
  return sum / (double(N) * double(N));
}

// Minimum over stencil points z of the average of (d(u(y), u(z)) - delta)_+^p.
template <int M>
double mo_sharp(const BallStencil<M>& st, double delta, double p) {
  if (!(p >= 1.0)) throw ConfigError("exponent p must be >= 1");
  if (!(delta >= 0.0)) throw ConfigError("truncation must be >= 0");
  long N = st.total();
  if (N == 0) return 0.0;
  const auto& v = st.values;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> to_far(v.size());
  for (std::size_t a = 0; a < v.size(); ++a) to_far[a] = truncated_power(TargetManifold::distance_unchecked(v[a], st.far), delta, p);
  for (std::size_t z = 0; z < v.size(); ++z) {
    CompensatedSum s;
    for (std::size_t y = 0; y < v.size(); ++y)
      if (y != z) s.add(truncated_power(TargetManifold::distance_unchecked(v[y], v[z]), delta, p));
    s.add(double(st.outside) * to_far[z]);
    best = std::min(best, s.value() / double(N));
  }
  if (st.outside > 0) {
    CompensatedSum s;
    for (double f : to_far) s.add(f);
    best = std::min(best, s.value() / double(N));
  }
  return best;
}

template <int M, class Field>
  requires BoundaryField<Field, M>
double mo(const Field& u, const HalfSpacePoint<M>& x, double delta, double p, const StencilSpec& spec = {}) {
  return mo<M>(ball_stencil<M>(u, x, spec), delta, p);
}

template <int M, class Field>
  requires BoundaryField<Field, M>
double mo_sharp(const Field& u, const HalfSpacePoint<M>& x, double delta, double p, const StencilSpec& spec = {}) {
  return mo_sharp<M>(ball_stencil<M>(u, x, spec), delta, p);
}

}  // namespace singext
