#pragma once

#include <functional>

#include "boundary_map.hpp"

namespace singext {

// The inversion Psi(x) = 4 (x + e)/|x + e|^2 - 2e sending the unit ball of R^D onto the upper
// half-space {x_D > 0}, with e the last unit vector. Its boundary restriction sends the unit
// sphere minus -e onto the hyperplane x_D = 0.

inline constexpr double kPoleRadius = 1e-8;

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int D>
Vec<D> unit_e() {
  Vec<D> e = Vec<D>::Zero();
  e[D - 1] = 1.0;
  return e;
}

template <int D>
Vec<D> psi(const Vec<D>& x) {
  Vec<D> y = x + unit_e<D>();
  double r2 = y.squaredNorm();
  if (r2 < kPoleRadius * kPoleRadius) throw PoleError("conformal map evaluated at the pole -e");
  return 4.0 * y / r2 - 2.0 * unit_e<D>();
}

template <int D>
Vec<D> psi_inverse(const Vec<D>& x) {
  Vec<D> y = x + 2.0 * unit_e<D>();
  double r2 = y.squaredNorm();
  if (r2 < kPoleRadius * kPoleRadius) throw PoleError("inverse conformal map evaluated at its pole -2e");
  return 4.0 * y / r2 - unit_e<D>();
}

// D Psi(x) = (4/|y|^2) (I - 2 y y^T/|y|^2) with y = x + e: a multiple of a reflection.
template <int D>
Eigen::Matrix<double, D, D> psi_jacobian(const Vec<D>& x) {
  Vec<D> y = x + unit_e<D>();
  double r2 = y.squaredNorm();
  if (r2 < kPoleRadius * kPoleRadius) throw PoleError("conformal map differentiated at the pole -e");
  return (4.0 / r2) * (Eigen::Matrix<double, D, D>::Identity() - 2.0 * y * y.transpose() / r2);
}

// Boundary restriction: unit sphere of R^{M+1} to R^M and back.
template <int M>
Domain<M> sphere_to_plane(const Vec<M + 1>& sigma) {
  if (std::abs(sigma.norm() - 1.0) > 1e-9) throw InvalidPoint("point is not on the unit sphere");
  return psi<M + 1>(sigma).template head<M>();
}

template <int M>
Vec<M + 1> plane_to_sphere(const Domain<M>& y) {
  Vec<M + 1> x = Vec<M + 1>::Zero();
  x.template head<M>() = y;
  return psi_inverse<M + 1>(x);
}

// u o Psi on the unit sphere.
template <int M, class Field>
  requires BoundaryField<Field, M>
class SpherePullback {
 public:
  explicit SpherePullback(const Field& u) : u_(u) {}
  Ambient operator()(const Vec<M + 1>& sigma) const { return u_(sphere_to_plane<M>(sigma)); }
  const TargetManifold& target() const { return u_.target(); }

 private:
  const Field& u_;
};

// g o Psi^{-1} on the plane, for data given on the sphere.
template <int M>
std::function<Ambient(const Domain<M>&)> plane_pushforward(std::function<Ambient(const Vec<M + 1>&)> g) {
  return [g = std::move(g)](const Domain<M>& y) { return g(plane_to_sphere<M>(y)); };
}

// Weighted node set on the unit sphere S^M.
template <int M>
struct SphereNodes {
  std::vector<Vec<M + 1>> points;
  std::vector<double> weights;
};

// Uniform angles on S^1, offset by half a cell from the pole -e.
inline SphereNodes<1> circle_nodes(int n) {
  if (n < 3) throw ResolutionError("circle quadrature needs at least 3 nodes");
  SphereNodes<1> s;
  for (int i = 0; i < n; ++i) {
    double a = -0.5 * kPi + 2.0 * kPi * (i + 0.5) / n;
    s.points.push_back(Vec<2>(std::cos(a), std::sin(a)));
    s.weights.push_back(2.0 * kPi / n);
  }
  return s;
}

namespace detail {

// Area of the spherical triangle with unit vertices a, b, c.
inline double spherical_triangle_area(const Vec<3>& a, const Vec<3>& b, const Vec<3>& c) {
  double num = std::abs(a.dot(b.cross(c)));
  double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
  return 2.0 * std::atan2(num, den);
}

}  // namespace detail

// Geodesic icosahedral nodes on S^2: triangle centroids projected to the sphere, weighted by
// the exact spherical triangle areas after `levels` 4-way subdivisions.
inline SphereNodes<2> icosahedral_nodes(int levels) {
  if (levels < 0 || levels > 8) throw ResolutionError("icosahedral subdivision level must lie in [0, 8]");
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec<3>> v = {{-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g}, {0, 1, g},
                           {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
  for (auto& p : v) p.normalize();
  using Tri = std::array<Vec<3>, 3>;
  const int f[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                        {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  std::vector<Tri> tris;
  for (const auto& t : f) tris.push_back({v[t[0]], v[t[1]], v[t[2]]});
  for (int l = 0; l < levels; ++l) {
    std::vector<Tri> next;
    next.reserve(tris.size() * 4);
    for (const auto& t : tris) {
      Vec<3> ab = (t[0] + t[1]).normalized(), bc = (t[1] + t[2]).normalized(), ca = (t[2] + t[0]).normalized();
      next.push_back({t[0], ab, ca});
      next.push_back({ab, t[1], bc});
      next.push_back({ca, bc, t[2]});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }
  SphereNodes<2> s;
  for (const auto& t : tris) {
    s.points.push_back((t[0] + t[1] + t[2]).normalized());
    s.weights.push_back(detail::spherical_triangle_area(t[0], t[1], t[2]));
  }
  return s;
}

// Sum over ordered node pairs i != j of term(d(g_i, g_j)) w_i w_j / |sigma_i - sigma_j|^{2M}:
// the sphere counterpart of the plane pair integral, with the same kernel.
template <int M, class G, class Term>
double sphere_pair_integral(const G& g, const SphereNodes<M>& nodes, Term&& term) {
  const std::size_t N = nodes.points.size();
  std::vector<Ambient> values(N);
  for (std::size_t i = 0; i < N; ++i) values[i] = g(nodes.points[i]);
  std::vector<double> rows(N, 0.0);
  parallel_for(N, [&](std::size_t a) {
    CompensatedSum s;
    for (std::size_t b = a + 1; b < N; ++b) {
      double t = term(TargetManifold::distance_unchecked(values[a], values[b]));
      if (t == 0.0) continue;
      double r2 = (nodes.points[a] - nodes.points[b]).squaredNorm();
      s.add(t * 2.0 * nodes.weights[a] * nodes.weights[b] / power(r2, M));
    }
    rows[a] = s.value();
  });
  CompensatedSum total;
  for (double r : rows) total.add(r);
  return total.value();
}

template <int M, class G>
double sphere_gagliardo_energy(const G& g, const SphereNodes<M>& nodes, double p) {
  if (!(p >= 1.0)) throw ConfigError("exponent p must be >= 1");
  return sphere_pair_integral<M>(g, nodes, [p](double d) { return d > 0.0 ? power(d, p) : 0.0; });
}

template <int M, class G>
double sphere_gap_potential(const G& g, const SphereNodes<M>& nodes, double delta) {
  if (!(delta > 0.0)) throw ConfigError("gap threshold must be > 0");
  return sphere_pair_integral<M>(g, nodes, [delta](double d) { return d >= delta ? 1.0 : 0.0; });
}

}  // namespace singext
