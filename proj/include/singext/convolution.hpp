#pragma once

#include "boundary_map.hpp"

namespace singext {

// Polynomial bump c_m (1 - |z|^2)^3 on the unit ball, unit mass.
template <int M>
struct Mollifier {
  static constexpr double normalization = M == 1 ? 35.0 / 32.0 : 4.0 / kPi;

  static double value(double r2) {
    double a = 1.0 - r2;
    return a > 0.0 ? normalization * a * a * a : 0.0;
  }
  // grad phi = gradient_factor(r2) * z
  static double gradient_factor(double r2) {
    double a = 1.0 - r2;
    return a > 0.0 ? -6.0 * normalization * a * a : 0.0;
  }
  // div(z phi) = m phi + z . grad phi
  static double radial_divergence(double r2) {
    double a = 1.0 - r2;
    return a > 0.0 ? normalization * a * a * (M * a - 6.0 * r2) : 0.0;
  }
};

struct ConvolutionQuadrature {
  int gauss_order = 4;
  // For m = 2 panels are split until no side exceeds this fraction of the height.
  double max_panel_fraction = 0.25;
};

template <int M>
struct ConvolutionSample {
  Ambient value;
  Jacobian<M> jacobian;  // columns: d/dx'_1 .. d/dx'_m, d/dx_{m+1}
  double gradient_norm = 0.0;
};

namespace detail {

// Panels of [a, b] cut at the break points.
inline void clipped_panels(const std::vector<double>& breaks, double a, double b, std::vector<std::pair<double, double>>& out) {
  out.clear();
  if (!(b > a)) return;
  auto it = std::upper_bound(breaks.begin(), breaks.end(), a);
  double lo = a;
  for (; it != breaks.end() && *it < b; ++it) {
    if (*it > lo) out.emplace_back(lo, *it);
    lo = *it;
  }
  out.emplace_back(lo, b);
}

// Calls fn(y, weight) for the quadrature nodes of the y-integral over B(x', t) clipped to the
// map window, respecting the map's panel breaks.
template <int M, class Field, class Fn>
void for_each_convolution_node(const Field& u, const HalfSpacePoint<M>& x, const ConvolutionQuadrature& q, Fn&& fn) {
  static thread_local std::array<std::vector<std::pair<double, double>>, M> panels;
  const GaussRule& g = [&]() -> const GaussRule& {
    static thread_local int order = -1;
    static thread_local GaussRule rule;
    if (order != q.gauss_order) {
      rule = gauss_legendre(q.gauss_order);
      order = q.gauss_order;
    }
    return rule;
  }();
  const Box<M> w = u.window();
  const double t = x.height;
  for (int a = 0; a < M; ++a) {
    double lo = std::max(w.lo[a], x.x_prime[a] - t);
    double hi = std::min(w.hi[a], x.x_prime[a] + t);
    clipped_panels(u.breaks(a), lo, hi, panels[a]);
    if (panels[a].empty()) return;
  }
  if constexpr (M == 1) {
    for (auto [lo, hi] : panels[0]) {
      double len = hi - lo;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        Domain<1> y;
        y[0] = lo + len * g.nodes[i];
        fn(y, len * g.weights[i]);
      }
    }
  } else {
    double cap = q.max_panel_fraction * t;
    auto split = [&](const std::vector<std::pair<double, double>>& in) {
      std::vector<std::pair<double, double>> out;
      for (auto [lo, hi] : in) {
        int parts = std::max(1, static_cast<int>(std::ceil((hi - lo) / cap - 1e-12)));
        for (int k = 0; k < parts; ++k) out.emplace_back(lo + (hi - lo) * k / parts, k + 1 == parts ? hi : lo + (hi - lo) * (k + 1) / parts);
      }
      return out;
    };
    auto p0 = split(panels[0]);
    auto p1 = split(panels[1]);
    double t2 = t * t;
    for (auto [a0, b0] : p0) {
      for (auto [a1, b1] : p1) {
        // skip panels entirely outside the ball
        double dx = std::max({a0 - x.x_prime[0], 0.0, x.x_prime[0] - b0});
        double dy = std::max({a1 - x.x_prime[1], 0.0, x.x_prime[1] - b1});
        if (dx * dx + dy * dy >= t2) continue;
        double l0 = b0 - a0, l1 = b1 - a1;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
          for (std::size_t j = 0; j < g.nodes.size(); ++j)
            fn(Domain<2>(a0 + l0 * g.nodes[i], a1 + l1 * g.nodes[j]), l0 * l1 * g.weights[i] * g.weights[j]);
      }
    }
  }
}

}  // namespace detail

// V(x) = integral of u(x' - x_{m+1} z) phi(z) dz, computed as far + t^{-m} * integral of
// (u(y) - far) phi((x' - y)/t) dy over the window, which is exact for constant maps.
template <int M, class Field>
  requires BoundaryField<Field, M>
Ambient extend_convolution(const Field& u, const HalfSpacePoint<M>& x, const ConvolutionQuadrature& q = {}) {
  const Ambient far = u.far_value();
  const double t = x.height, inv_t = 1.0 / t;
  Ambient s0 = Ambient::Zero();
  detail::for_each_convolution_node<M>(u, x, q, [&](const Domain<M>& y, double w) {
    Domain<M> z = (x.x_prime - y) * inv_t;
    double r2 = z.squaredNorm();
    if (r2 >= 1.0) return;
    s0 += (w * Mollifier<M>::value(r2)) * (u(y) - far);
  });
  return far + s0 / power(t, M);
}

template <int M, class Field>
  requires BoundaryField<Field, M>
ConvolutionSample<M> gradient_convolution(const Field& u, const HalfSpacePoint<M>& x, const ConvolutionQuadrature& q = {}) {
  const Ambient far = u.far_value();
  const double t = x.height, inv_t = 1.0 / t;
  Ambient s0 = Ambient::Zero();
  Eigen::Matrix<double, 3, M> sg = Eigen::Matrix<double, 3, M>::Zero();
  Ambient st = Ambient::Zero();
  detail::for_each_convolution_node<M>(u, x, q, [&](const Domain<M>& y, double w) {
    Domain<M> z = (x.x_prime - y) * inv_t;
    double r2 = z.squaredNorm();
    if (r2 >= 1.0) return;
    Ambient g = u(y) - far;
    s0 += (w * Mollifier<M>::value(r2)) * g;
    sg += (w * Mollifier<M>::gradient_factor(r2)) * g * z.transpose();
    st += (w * Mollifier<M>::radial_divergence(r2)) * g;
  });
  double tm = power(t, M);
  ConvolutionSample<M> out;
  out.value = far + s0 / tm;
  out.jacobian.template leftCols<M>() = sg / (tm * t);
  out.jacobian.col(M) = -st / (tm * t);
  out.gradient_norm = spectral_norm<M + 1>(out.jacobian);
  return out;
}

}  // namespace singext
