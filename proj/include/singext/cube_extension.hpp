#pragma once

#include <memory>
#include <unordered_map>

#include "skeleton.hpp"

namespace singext {

enum class CubeKind { good, bad };

inline const char* cube_kind_name(CubeKind k) { return k == CubeKind::good ? "good" : "bad"; }

// Measures of superlevel sets of |DU| are taken in three metrics on the half-space, each
// conformal to the euclidean one with factor c(x): the weighted set is {|DU| / c >= t} with
// volume density c^{m+1}.
enum class Weight { euclidean, hyperbolic, ball };
inline constexpr std::array<Weight, 3> kWeights{Weight::euclidean, Weight::hyperbolic, Weight::ball};

inline const char* weight_name(Weight w) {
  switch (w) {
    case Weight::euclidean: return "euclidean";
    case Weight::hyperbolic: return "hyperbolic";
    case Weight::ball: return "ball";
  }
  return "?";
}

template <int M>
double metric_factor(Weight w, const Space<M>& x) {
  switch (w) {
    case Weight::euclidean: return 1.0;
    case Weight::hyperbolic: return 1.0 / x[M];
    case Weight::ball: {
      double shifted = x[M] + 2.0;
      return 4.0 / (x.template head<M>().squaredNorm() + shifted * shifted);
    }
  }
  return 1.0;
}

// Radial sup-norm rescaling between the cube [-1/2, 1/2]^D and the ball of radius 1/2.
template <int D>
Eigen::Matrix<double, D, 1> cube_to_ball(const Eigen::Matrix<double, D, 1>& x) {
  double n2 = x.norm();
  if (n2 == 0.0) return x;
  return x * (x.cwiseAbs().maxCoeff() / n2);
}

template <int D>
Eigen::Matrix<double, D, 1> ball_to_cube(const Eigen::Matrix<double, D, 1>& y) {
  double ninf = y.cwiseAbs().maxCoeff();
  if (ninf == 0.0) return y;
  return y * (y.norm() / ninf);
}

// ---------------------------------------------------------------------------
// Star-shaped reference domains in the plane (m = 1): the square [-1/2, 1/2]^2, parametrized
// by counterclockwise arc length from the corner (1/2, -1/2), and the unit disk, parametrized
// by angle.

enum class StarShape { square, circle };

inline double shape_period(StarShape s) { return s == StarShape::square ? 4.0 : 2.0 * kPi; }

struct ShapeParam {
  double ell;   // boundary parameter of the ray at this angle, in [0, period)
  double dell;  // d ell / d angle
};

inline ShapeParam shape_param(StarShape s, double angle) {
  if (s == StarShape::circle) {
    double a = angle - 2.0 * kPi * std::floor(angle / (2.0 * kPi));
    return {a, 1.0};
  }
  double a = angle + 0.25 * kPi;
  a -= 2.0 * kPi * std::floor(a / (2.0 * kPi));
  int f = std::min(3, static_cast<int>(a / (0.5 * kPi)));
  double tb = std::tan(a - f * 0.5 * kPi - 0.25 * kPi);
  return {f + 0.5 * (tb + 1.0), 0.5 * (1.0 + tb * tb)};
}

// Boundary point and unit counterclockwise tangent at parameter ell.
inline std::pair<Domain<2>, Domain<2>> shape_point(StarShape s, double ell) {
  if (s == StarShape::circle) return {Domain<2>(std::cos(ell), std::sin(ell)), Domain<2>(-std::sin(ell), std::cos(ell))};
  double p = ell - 4.0 * std::floor(ell / 4.0);
  int f = std::min(3, static_cast<int>(p));
  Domain<2> x(0.5, p - f - 0.5), t(0.0, 1.0);
  for (int i = 0; i < f; ++i) {
    x = Domain<2>(-x[1], x[0]);
    t = Domain<2>(-t[1], t[0]);
  }
  return {x, t};
}

// Ratio of |xi| to the boundary radius along its ray (1 on the boundary), and its gradient.
inline double shape_radius(StarShape s, const Domain<2>& xi, Domain<2>* grad = nullptr) {
  if (s == StarShape::circle) {
    double r = xi.norm();
    if (grad) *grad = r > 0.0 ? Domain<2>(xi / r) : Domain<2>::Zero();
    return r;
  }
  int i = std::abs(xi[0]) >= std::abs(xi[1]) ? 0 : 1;
  if (grad) {
    *grad = Domain<2>::Zero();
    (*grad)[i] = xi[i] >= 0.0 ? 2.0 : -2.0;
  }
  return 2.0 * std::abs(xi[i]);
}

// Boundary cells of a reference domain for radial integration: x = s * omega, s in (0, 1],
// with volume element s^m ds * measure where measure = (omega . normal) d sigma.
template <int M>
struct RadialCell {
  Space<M> omega;
  double measure;
};

inline std::vector<RadialCell<1>> radial_cells(StarShape s, int per_face) {
  if (per_face < 1) throw ResolutionError("radial integration needs at least one cell per face");
  std::vector<RadialCell<1>> out;
  int total = s == StarShape::square ? 4 * per_face : per_face;
  double period = shape_period(s);
  for (int i = 0; i < total; ++i) {
    double ell = period * (i + 0.5) / total;
    auto [x, t] = shape_point(s, ell);
    double normal_dot = s == StarShape::square ? 0.5 : 1.0;
    out.push_back({x, normal_dot * period / total});
  }
  return out;
}

// Faces of the reference cube [-1/2, 1/2]^3, per_face^2 cells each.
inline std::vector<RadialCell<2>> cube_radial_cells3(int per_face) {
  if (per_face < 1) throw ResolutionError("radial integration needs at least one cell per face");
  std::vector<RadialCell<2>> out;
  double area = 1.0 / (double(per_face) * per_face);
  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side < 2; ++side)
      for (int i = 0; i < per_face; ++i)
        for (int j = 0; j < per_face; ++j) {
          Space<2> w;
          int a = (axis + 1) % 3, b = (axis + 2) % 3;
          w[axis] = side ? 0.5 : -0.5;
          w[a] = -0.5 + (i + 0.5) / per_face;
          w[b] = -0.5 + (j + 0.5) / per_face;
          out.push_back({w, 0.5 * area});
        }
  return out;
}

template <int M>
std::vector<RadialCell<M>> cube_radial_cells(int per_face) {
  if constexpr (M == 1) return radial_cells(StarShape::square, per_face);
  else return cube_radial_cells3(per_face);
}

// ---------------------------------------------------------------------------
// Periodic piecewise-cubic Hermite data on a closed loop.

class BoundaryLoop {
 public:
  struct Node {
    double ell;
    Ambient value;
    Ambient d_left;   // d/d ell as seen from the interval ending here
    Ambient d_right;  // d/d ell as seen from the interval starting here
  };

  BoundaryLoop(std::vector<Node> nodes, double period) : nodes_(std::move(nodes)), period_(period) {
    if (nodes_.size() < 3) throw ResolutionError("boundary loop needs at least 3 samples");
    for (auto& n : nodes_) n.ell -= period_ * std::floor(n.ell / period_);
    std::sort(nodes_.begin(), nodes_.end(), [](const Node& a, const Node& b) { return a.ell < b.ell; });
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
      if (!(nodes_[i + 1].ell > nodes_[i].ell)) throw ResolutionError("boundary loop has coincident samples");
    ell_.resize(nodes_.size());
    prefix_.assign(nodes_.size() + 1, Ambient::Zero());
    for (std::size_t i = 0; i < nodes_.size(); ++i) ell_[i] = nodes_[i].ell;
    for (std::size_t i = 0; i < nodes_.size(); ++i) prefix_[i + 1] = prefix_[i] + piece_integral(i, 1.0);
  }

  double period() const { return period_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  Ambient total() const { return prefix_.back(); }
  Ambient mean() const { return prefix_.back() / period_; }

  Ambient value(double ell) const {
    double s, h;
    std::size_t i = locate(ell, s, h);
    const Node &a = nodes_[i], &b = next(i);
    double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * a.value + (s3 - 2 * s2 + s) * h * a.d_right + (-2 * s3 + 3 * s2) * b.value +
           (s3 - s2) * h * b.d_left;
  }

  Ambient derivative(double ell) const {
    double s, h;
    std::size_t i = locate(ell, s, h);
    const Node &a = nodes_[i], &b = next(i);
    double s2 = s * s;
    return ((6 * s2 - 6 * s) * a.value + (-6 * s2 + 6 * s) * b.value) / h + (3 * s2 - 4 * s + 1) * a.d_right +
           (3 * s2 - 2 * s) * b.d_left;
  }

  // Integral over [a, b] of the periodic extension (a <= b, unwrapped parameters).
  Ambient integral(double a, double b) const { return antiderivative(b) - antiderivative(a); }

 private:
  const Node& next(std::size_t i) const { return nodes_[i + 1 == nodes_.size() ? 0 : i + 1]; }

  double interval_length(std::size_t i) const {
    return i + 1 == nodes_.size() ? ell_[0] + period_ - ell_[i] : ell_[i + 1] - ell_[i];
  }

  // Interval holding ell and the local coordinate s in [0, 1].
  std::size_t locate(double ell, double& s, double& h) const {
    double e = ell - period_ * std::floor((ell - ell_[0]) / period_);
    auto it = std::upper_bound(ell_.begin(), ell_.end(), e);
    std::size_t i = it == ell_.begin() ? nodes_.size() - 1 : std::size_t(it - ell_.begin()) - 1;
    h = interval_length(i);
    double local = e - ell_[i];
    if (local < 0.0) local += period_;
    s = std::clamp(local / h, 0.0, 1.0);
    return i;
  }

  Ambient piece_integral(std::size_t i, double S) const {
    const Node &a = nodes_[i], &b = next(i);
    double h = interval_length(i);
    double S2 = S * S, S3 = S2 * S, S4 = S3 * S;
    return h * ((S - S3 + 0.5 * S4) * a.value + (0.5 * S2 - 2.0 / 3.0 * S3 + 0.25 * S4) * h * a.d_right +
                (S3 - 0.5 * S4) * b.value + (-S3 / 3.0 + 0.25 * S4) * h * b.d_left);
  }

  Ambient antiderivative(double ell) const {
    double turns = std::floor((ell - ell_[0]) / period_);
    double s, h;
    std::size_t i = locate(ell, s, h);
    return turns * total() + prefix_[i] + piece_integral(i, s);
  }

  std::vector<Node> nodes_;
  double period_;
  std::vector<double> ell_;
  std::vector<Ambient> prefix_;
};

// Extension of loop data into a planar star domain (reference coordinates).
//   bad:  W(xi) = w(ell(angle(xi)))  (homogeneous of degree 0)
//   good: W(xi) = average of w over the boundary arc between the rays at angle +- theta with
//         theta = pi (1 - r), r the relative radius; the whole loop at the center, w itself on
//         the boundary.
class LoopExtension {
 public:
  LoopExtension(StarShape shape, BoundaryLoop loop, CubeKind kind) : shape_(shape), loop_(std::move(loop)), kind_(kind) {}

  StarShape shape() const { return shape_; }
  CubeKind kind() const { return kind_; }
  const BoundaryLoop& loop() const { return loop_; }

  Ambient value(const Domain<2>& xi) const {
    if (xi.isZero()) {
      if (kind_ == CubeKind::bad) throw SingularPoint("homogeneous extension evaluated at its center");
      return loop_.mean();
    }
    double phi = std::atan2(xi[1], xi[0]);
    ShapeParam sp = shape_param(shape_, phi);
    if (kind_ == CubeKind::bad) return loop_.value(sp.ell);
    double theta = kPi * (1.0 - std::min(1.0, shape_radius(shape_, xi)));
    if (theta < kSmallTheta) return loop_.value(sp.ell);
    Arc arc = arc_of(phi, theta);
    return loop_.integral(arc.lo, arc.hi) / (arc.hi - arc.lo);
  }

  // d W / d xi (3 x 2).
  Eigen::Matrix<double, 3, 2> jacobian(const Domain<2>& xi_in) const {
    Domain<2> xi = xi_in;
    if (xi.isZero()) {
      if (kind_ == CubeKind::bad) throw SingularPoint("homogeneous extension differentiated at its center");
      xi = Domain<2>(1e-12, 0.0);
    }
    double phi = std::atan2(xi[1], xi[0]);
    Domain<2> grad_phi = Domain<2>(-xi[1], xi[0]) / xi.squaredNorm();
    ShapeParam sp = shape_param(shape_, phi);
    if (kind_ == CubeKind::bad) return (loop_.derivative(sp.ell) * sp.dell) * grad_phi.transpose();
    Domain<2> grad_r;
    double r = shape_radius(shape_, xi, &grad_r);
    if (r > 1.0) grad_r.setZero();
    double theta = kPi * (1.0 - std::min(1.0, r));
    Ambient d_phi, d_theta;
    if (theta < kSmallTheta) {
      d_phi = loop_.derivative(sp.ell) * sp.dell;
      d_theta.setZero();
    } else {
      Arc arc = arc_of(phi, theta);
      double len = arc.hi - arc.lo;
      Ambient avg = loop_.integral(arc.lo, arc.hi) / len;
      Ambient wp = loop_.value(arc.hi), wm = loop_.value(arc.lo);
      d_phi = (wp * arc.dhi - wm * arc.dlo - avg * (arc.dhi - arc.dlo)) / len;
      d_theta = (wp * arc.dhi + wm * arc.dlo - avg * (arc.dhi + arc.dlo)) / len;
    }
    return d_phi * grad_phi.transpose() - kPi * d_theta * grad_r.transpose();
  }

 private:
  static constexpr double kSmallTheta = 1e-9;

  struct Arc {
    double lo, hi, dlo, dhi;
  };

  Arc arc_of(double phi, double theta) const {
    ShapeParam p = shape_param(shape_, phi + theta), q = shape_param(shape_, phi - theta);
    double hi = p.ell;
    if (!(hi > q.ell)) hi += loop_.period();
    return {q.ell, hi, q.dell, p.dell};
  }

  StarShape shape_;
  BoundaryLoop loop_;
  CubeKind kind_;
};

// ---------------------------------------------------------------------------
// m = 2: boundary data on the six faces of the reference cube, interpolated linearly.

class FaceData {
 public:
  struct Grid {
    int n = 0;  // intervals per edge
    std::vector<Ambient> v;  // v[i + (n + 1) j], i along the first free axis
  };
  struct Lateral {
    std::vector<double> z;  // reference heights, increasing, z.front() = -1/2, z.back() = 1/2
    std::vector<int> n;
    std::vector<std::vector<Ambient>> v;
  };

  Grid bottom, top;
  std::array<Lateral, 4> lateral;  // index 2 * axis + side

  // Value at a point of the reference cube boundary (|xi|_inf = 1/2).
  Ambient value(const Space<2>& xi) const {
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(xi[a]) > std::abs(xi[axis])) axis = a;
    if (axis == 2) return bilinear(xi[2] > 0 ? top : bottom, xi[0], xi[1]);
    const Lateral& f = lateral[2 * axis + (xi[axis] > 0 ? 1 : 0)];
    double z = std::clamp(xi[2], -0.5, 0.5), o = xi[1 - axis];
    auto it = std::upper_bound(f.z.begin(), f.z.end(), z);
    std::size_t l = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - f.z.begin() - 1, 0), f.z.size() - 2);
    double tz = (z - f.z[l]) / (f.z[l + 1] - f.z[l]);
    return (1.0 - tz) * linear(f.v[l], f.n[l], o) + tz * linear(f.v[l + 1], f.n[l + 1], o);
  }

 private:
  static Ambient linear(const std::vector<Ambient>& v, int n, double c) {
    double q = std::clamp((c + 0.5) * n, 0.0, double(n));
    int i = std::min(n - 1, static_cast<int>(q));
    double t = q - i;
    return (1.0 - t) * v[i] + t * v[i + 1];
  }
  static Ambient bilinear(const Grid& g, double a, double b) {
    double qa = std::clamp((a + 0.5) * g.n, 0.0, double(g.n)), qb = std::clamp((b + 0.5) * g.n, 0.0, double(g.n));
    int i = std::min(g.n - 1, static_cast<int>(qa)), j = std::min(g.n - 1, static_cast<int>(qb));
    double s = qa - i, t = qb - j;
    auto at = [&](int p, int q) { return g.v[std::size_t(p) + std::size_t(g.n + 1) * q]; };
    return (1 - s) * (1 - t) * at(i, j) + s * (1 - t) * at(i + 1, j) + (1 - s) * t * at(i, j + 1) + s * t * at(i + 1, j + 1);
  }
};

// Cube extension for m = 2 over the reference cube: homogeneous (bad) or spherical-cap average
// of the radially projected face data with cap radius pi (1 - 2|xi|_inf) (good).
class FaceExtension {
 public:
  FaceExtension(std::shared_ptr<const FaceData> data, CubeKind kind) : data_(std::move(data)), kind_(kind) {}

  CubeKind kind() const { return kind_; }

  Ambient boundary_value(const Space<2>& dir) const { return data_->value(dir / (2.0 * dir.cwiseAbs().maxCoeff())); }

  Ambient value(const Space<2>& xi) const {
    if (kind_ == CubeKind::bad) {
      if (xi.isZero()) throw SingularPoint("homogeneous extension evaluated at its center");
      return boundary_value(xi);
    }
    double r = 2.0 * xi.cwiseAbs().maxCoeff();
    double theta = kPi * (1.0 - std::min(1.0, r));
    if (theta < 1e-9) return boundary_value(xi);
    Space<2> c = xi.isZero() ? Space<2>(0, 0, 1) : Space<2>(xi.normalized());
    Space<2> a = (std::abs(c[0]) < 0.9 ? Space<2>(1, 0, 0) : Space<2>(0, 1, 0));
    a = (a - a.dot(c) * c).normalized();
    Space<2> b = c.cross(a);
    static const GaussRule g = gauss_legendre(5);
    constexpr int panels = 2, azimuths = 16;
    Ambient sum = Ambient::Zero();
    double mass = 0.0;
    for (int p = 0; p < panels; ++p)
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        double alpha = theta * (p + g.nodes[i]) / panels;
        double w = std::sin(alpha) * g.weights[i] * theta / panels;
        for (int k = 0; k < azimuths; ++k) {
          double beta = 2.0 * kPi * (k + 0.5) / azimuths;
          Space<2> dir = std::cos(alpha) * c + std::sin(alpha) * (std::cos(beta) * a + std::sin(beta) * b);
          sum += w * boundary_value(dir);
          mass += w;
        }
      }
    return sum / mass;
  }

  // Central differences with a fixed reference step.
  Jacobian<2> jacobian(const Space<2>& xi) const {
    if (kind_ == CubeKind::bad && xi.isZero()) throw SingularPoint("homogeneous extension differentiated at its center");
    constexpr double h = 1e-5;
    Jacobian<2> j;
    for (int a = 0; a < 3; ++a) {
      Space<2> p = xi, q = xi;
      p[a] += h;
      q[a] -= h;
      j.col(a) = (value(p) - value(q)) / (2.0 * h);
    }
    return j;
  }

 private:
  std::shared_ptr<const FaceData> data_;
  CubeKind kind_;
};

// ---------------------------------------------------------------------------

template <int M>
struct CubeExtension {
  using Local = std::conditional_t<M == 1, LoopExtension, FaceExtension>;

  CubeId<M> id;
  CubeKind kind;
  Box<M + 1> box;
  Space<M> center;
  double edge;
  double per_cube_sup;
  std::vector<Space<M>> boundary_points;  // V sampled on the cube boundary
  std::vector<Ambient> boundary_values;
  Local local;

  Space<M> reference(const Space<M>& x) const { return (x - center) / edge; }
  Ambient value(const Space<M>& x) const { return local.value(reference(x)); }
  Jacobian<M> jacobian(const Space<M>& x) const { return local.jacobian(reference(x)) / edge; }
};

template <int M, class Field>
  requires BoundaryField<Field, M>
CubeExtension<M> build_cube_extension(const Field& u, const CubeFamilyParams<M>& p, const CubeId<M>& id, CubeKind kind,
                                       double per_cube_sup, const SkeletonSampling& sampling, const ConvolutionQuadrature& q) {
  Box<M + 1> b = cube_geometry(p, id);
  Space<M> c = b.center();
  double e = p.edge(id.k);
  SkeletonGrid g = skeleton_grid(p, id.k, sampling);
  const std::size_t nv = g.heights.size() - 1;
  std::vector<Space<M>> pts;
  std::vector<Ambient> vals;
  if constexpr (M == 1) {
    struct Raw {
      double ell;
      Ambient value;
      Jacobian<1> dv;
    };
    std::vector<Raw> raw;
    auto add = [&](double x, double z, double ell) {
      auto s = gradient_convolution<1>(u, HalfSpacePoint<1>(Space<1>(x, z)), q);
      raw.push_back({ell, s.value, s.jacobian});
      pts.push_back(Space<1>(x, z));
      vals.push_back(s.value);
    };
    auto xs0 = detail::edge_coords(b.lo[0], b.hi[0], g.horizontal[0]);
    for (double x : xs0) add(x, b.lo[1], 3.0 + (x - c[0]) / e + 0.5);
    auto xs1 = detail::edge_coords(b.lo[0], b.hi[0], g.horizontal[nv]);
    for (double x : xs1) add(x, b.hi[1], 1.0 + 0.5 - (x - c[0]) / e);
    for (std::size_t v = 1; v < nv; ++v) {
      double z = g.heights[v], rz = (z - c[1]) / e;
      add(b.hi[0], z, rz + 0.5);
      add(b.lo[0], z, 2.0 + 0.5 - rz);
    }
    for (auto& r : raw) r.ell -= 4.0 * std::floor(r.ell / 4.0);
    std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.ell < b.ell; });
    std::vector<BoundaryLoop::Node> nodes(raw.size());
    auto tangent = [&](double a, double bnd) -> Domain<2> {
      double mid = a < bnd ? 0.5 * (a + bnd) : 0.5 * (a + bnd + 4.0);
      return shape_point(StarShape::square, mid).second * e;  // physical d x / d ell
    };
    for (std::size_t i = 0; i < raw.size(); ++i) {
      std::size_t prev = i == 0 ? raw.size() - 1 : i - 1, nxt = i + 1 == raw.size() ? 0 : i + 1;
      nodes[i].ell = raw[i].ell;
      nodes[i].value = raw[i].value;
      nodes[i].d_left = raw[i].dv * tangent(raw[prev].ell, raw[i].ell);
      nodes[i].d_right = raw[i].dv * tangent(raw[i].ell, raw[nxt].ell);
    }
    return CubeExtension<1>{id, kind, b, c, e, per_cube_sup, std::move(pts), std::move(vals),
                            LoopExtension(StarShape::square, BoundaryLoop(std::move(nodes), 4.0), kind)};
  } else {
    auto data = std::make_shared<FaceData>();
    auto eval = [&](const Space<2>& x) {
      Ambient v = extend_convolution<2>(u, HalfSpacePoint<2>(x), q);
      pts.push_back(x);
      vals.push_back(v);
      return v;
    };
    auto grid = [&](FaceData::Grid& out, int n, double z) {
      out.n = n;
      auto c0 = detail::edge_coords(b.lo[0], b.hi[0], n), c1 = detail::edge_coords(b.lo[1], b.hi[1], n);
      for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) out.v.push_back(eval(Space<2>(c0[i], c1[j], z)));
    };
    grid(data->bottom, g.horizontal[0], b.lo[2]);
    grid(data->top, g.horizontal[nv], b.hi[2]);
    for (int axis = 0; axis < 2; ++axis)
      for (int side = 0; side < 2; ++side) {
        FaceData::Lateral& f = data->lateral[2 * axis + side];
        int other = 1 - axis;
        for (std::size_t v = 0; v <= nv; ++v) {
          f.z.push_back(std::clamp((g.heights[v] - c[2]) / e, -0.5, 0.5));
          f.n.push_back(g.horizontal[v]);
          std::vector<Ambient> row;
          for (double o : detail::edge_coords(b.lo[other], b.hi[other], g.horizontal[v])) {
            Space<2> x;
            x[axis] = side ? b.hi[axis] : b.lo[axis];
            x[other] = o;
            x[2] = g.heights[v];
            row.push_back(eval(x));
          }
          f.v.push_back(std::move(row));
        }
        f.z.front() = -0.5;
        f.z.back() = 0.5;
      }
    return CubeExtension<2>{id, kind, b, c, e, per_cube_sup, std::move(pts), std::move(vals),
                            FaceExtension(std::move(data), kind)};
  }
}

// ---------------------------------------------------------------------------
// Superlevel-set measures.

struct DistributionOptions {
  int per_face = 32;         // boundary cells per face edge of each cube
  int radial = 32;           // radial cells between the inner core and the boundary
  double inner = 0.1;        // relative radius of the analytically integrated core of bad cubes
  int slab_levels = 4;       // height levels in the slab below the cube band
  double slab_spacing = 0.0; // horizontal spacing in the slab (0: map spacing, or window/256 for m = 2)
};

using LevelMeasures = std::array<std::vector<double>, 3>;

inline LevelMeasures empty_levels(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)}; }

namespace detail {

// A cell of euclidean volume `vol` around x where |DU| = g.
template <int M>
void add_sampled(const std::vector<double>& t, const Space<M>& x, double g, double vol, LevelMeasures& acc) {
  for (int w = 0; w < 3; ++w) {
    double c = metric_factor<M>(kWeights[w], x);
    double scaled = g / c, wv = vol * power(c, M + 1);
    for (std::size_t i = 0; i < t.size() && scaled >= t[i]; ++i) acc[w][i] += wv;
  }
}

// Field with |DU|(center + scale s omega) = rate / s on one radial cell, integrated exactly in s;
// the metric factor is frozen at the cell midpoint (at the center inside the core).
template <int M>
void add_homogeneous(const std::vector<double>& t, const Space<M>& center, double scale, const RadialCell<M>& cell,
                     double rate, const DistributionOptions& o, LevelMeasures& acc) {
  const double base = power(scale, M + 1) * cell.measure / (M + 1);
  auto shell = [&](double a, double b, const Space<M>& x) {
    for (int w = 0; w < 3; ++w) {
      double c = metric_factor<M>(kWeights[w], x);
      double cw = power(c, M + 1);
      for (std::size_t i = 0; i < t.size(); ++i) {
        double s_star = rate / (t[i] * c * scale);
        if (!(s_star > a)) break;
        double hi = std::min(b, s_star);
        acc[w][i] += cw * base * (power(hi, M + 1) - power(a, M + 1));
      }
    }
  };
  shell(0.0, o.inner, center);
  for (int k = 0; k < o.radial; ++k) {
    double a = o.inner + (1.0 - o.inner) * k / o.radial, b = o.inner + (1.0 - o.inner) * (k + 1) / o.radial;
    shell(a, b, Space<M>(center + scale * 0.5 * (a + b) * cell.omega));
  }
}

template <int M, class Eval>
void add_sampled_cells(const std::vector<double>& t, const Space<M>& center, double scale,
                       const std::vector<RadialCell<M>>& cells, const DistributionOptions& o, Eval&& eval, LevelMeasures& acc) {
  const int n = o.radial + 1;
  for (const auto& cell : cells)
    for (int k = 0; k < n; ++k) {
      double a = double(k) / n, b = double(k + 1) / n;
      Space<M> x = center + scale * 0.5 * (a + b) * cell.omega;
      double vol = power(scale, M + 1) * cell.measure * (power(b, M + 1) - power(a, M + 1)) / (M + 1);
      add_sampled<M>(t, x, eval(x), vol, acc);
    }
}

inline void validate_levels(const std::vector<double>& t) {
  if (t.empty()) throw ConfigError("threshold grid is empty");
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!(t[i] > 0.0) || (i > 0 && !(t[i] > t[i - 1]))) throw ConfigError("thresholds must be positive and increasing");
}

inline double du_norm(const Ambient& w, const auto& dw) {
  auto j = (TargetManifold::retraction_jacobian(w) * dw).eval();
  return spectral_norm<std::remove_cvref_t<decltype(j)>::ColsAtCompileTime>(j);
}

}  // namespace detail

struct DistributionReport {
  int m = 1;
  std::vector<double> t;
  LevelMeasures measure;
  std::array<double, 3> bound_rhs{0.0, 0.0, 0.0};  // filled by the caller from calibration

  const std::vector<double>& of(Weight w) const { return measure[std::size_t(w)]; }
  // max over the grid of t^{m+1} * measure(t)
  double max_scaled(Weight w) const {
    double best = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) best = std::max(best, power(t[i], m + 1) * of(w)[i]);
    return best;
  }
};

// Distribution of |DU| for the homogeneous extension of loop data on the unit disk (or square)
// centered at the origin of the half-space coordinates shifted to `center`.
inline DistributionReport homogeneous_distribution(const LoopExtension& ext, const Space<1>& center, double scale,
                                                   const std::vector<double>& t, const DistributionOptions& o) {
  if (ext.kind() != CubeKind::bad) throw ConfigError("homogeneous distribution needs a homogeneous extension");
  detail::validate_levels(t);
  DistributionReport r;
  r.t = t;
  r.measure = empty_levels(t.size());
  for (const auto& cell : radial_cells(ext.shape(), o.per_face)) {
    double rate = detail::du_norm(ext.value(cell.omega), ext.jacobian(cell.omega)) / scale;
    detail::add_homogeneous<1>(t, center, scale, cell, rate, o, r.measure);
  }
  return r;
}

// ---------------------------------------------------------------------------

template <int M>
struct AssemblyOptions {
  SkeletonSampling sampling{2, 4.0, 0.0};  // boundary data resolution
  ConvolutionQuadrature quadrature;
  int check_resolution = 8;  // tube-check cells per face edge and radially
};

template <int M, class Field>
  requires BoundaryField<Field, M>
class ExtensionField {
 public:
  ExtensionField(Field u, CubeFamilyParams<M> params, BandSpec<M> band, double tube, ConvolutionQuadrature q)
      : u_(std::move(u)), params_(std::move(params)), band_(std::move(band)), tube_(tube), q_(q) {}

  const Field& map() const { return u_; }
  const CubeFamilyParams<M>& params() const { return params_; }
  const BandSpec<M>& band() const { return band_; }
  double tube() const { return tube_; }
  const std::vector<CubeExtension<M>>& cubes() const { return cubes_; }
  const std::vector<Space<M>>& singular_set() const { return singular_; }
  const std::vector<int>& windings() const { return windings_; }  // per bad cube (m = 1)
  double same_scale_face_mismatch() const { return same_scale_mismatch_; }
  double cross_scale_face_mismatch() const { return cross_scale_mismatch_; }
  double max_tube_distance() const { return max_tube_distance_; }

  // Owning cube of a point of the cube band, if enumerated.
  const CubeExtension<M>* owner(const Space<M>& x) const {
    if (x[M] < params_.band_bottom() || x[M] >= params_.band_top()) return nullptr;
    auto it = index_.find(locate(params_, HalfSpacePoint<M>(x)));
    return it == index_.end() ? nullptr : &cubes_[it->second];
  }

  Ambient W(const Space<M>& x) const {
    if (const auto* c = owner(x)) return c->value(x);
    return extend_convolution<M>(u_, HalfSpacePoint<M>(x), q_);
  }

  Ambient U(const Space<M>& x) const {
    Ambient w = W(x);
    double r = w.norm();
    if (!(r > 0.0)) throw UndefinedRetraction("extension vanishes at a sampled point");
    return w / r;
  }

  double du_norm(const Space<M>& x) const {
    if (const auto* c = owner(x)) return detail::du_norm(c->value(x), c->jacobian(x));
    auto s = gradient_convolution<M>(u_, HalfSpacePoint<M>(x), q_);
    return detail::du_norm(s.value, s.jacobian);
  }

  void add_cube(CubeExtension<M> c) {
    index_[c.id] = cubes_.size();
    if (c.kind == CubeKind::bad) singular_.push_back(c.center);
    cubes_.push_back(std::move(c));
  }
  void set_windings(std::vector<int> w) { windings_ = std::move(w); }
  void set_checks(double same, double cross, double tube_dist) {
    same_scale_mismatch_ = same;
    cross_scale_mismatch_ = cross;
    max_tube_distance_ = tube_dist;
  }
  const ConvolutionQuadrature& quadrature() const { return q_; }

 private:
  Field u_;
  CubeFamilyParams<M> params_;
  BandSpec<M> band_;
  double tube_;
  ConvolutionQuadrature q_;
  std::vector<CubeExtension<M>> cubes_;
  std::unordered_map<CubeId<M>, std::size_t, CubeIdHash<M>> index_;
  std::vector<Space<M>> singular_;
  std::vector<int> windings_;
  double same_scale_mismatch_ = 0.0, cross_scale_mismatch_ = 0.0, max_tube_distance_ = 0.0;
};

namespace detail {

// Points spread over a face of a cube: axis fixed at `fixed`, `count` points per free axis.
template <int M>
std::vector<Space<M>> face_points(const Box<M + 1>& b, int axis, double fixed, int count) {
  std::vector<Space<M>> out;
  std::array<int, M> free{};
  for (int a = 0, i = 0; a <= M; ++a)
    if (a != axis) free[i++] = a;
  int total = M == 1 ? count : count * count;
  for (int i = 0; i < total; ++i) {
    Space<M> x;
    x[axis] = fixed;
    int r = i;
    for (int f = 0; f < M; ++f) {
      int a = free[f];
      x[a] = b.lo[a] + (b.hi[a] - b.lo[a]) * ((r % count) + 0.5) / count;
      r /= count;
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

// Builds W cube by cube from V on the cube boundaries; U = W / |W|.
template <int M, class Field>
  requires BoundaryField<Field, M>
ExtensionField<M, Field> assemble(const Field& u, const SkeletonSelection<M>& sel, const CubeClassification<M>& cls,
                                  double tube, const AssemblyOptions<M>& opt = {}) {
  if (!sel.distance_ok) throw SelectionFailure("assembly needs a valid selection");
  ExtensionField<M, Field> field(u, sel.params, sel.band, tube, opt.quadrature);
  std::vector<std::pair<CubeId<M>, CubeKind>> ids;
  for (const auto& id : cls.good) ids.emplace_back(id, CubeKind::good);
  for (const auto& id : cls.bad) ids.emplace_back(id, CubeKind::bad);
  std::sort(ids.begin(), ids.end());
  std::vector<std::optional<CubeExtension<M>>> built(ids.size());
  std::vector<double> tube_dist(ids.size(), 0.0);
  const auto cells = cube_radial_cells<M>(opt.check_resolution);
  parallel_for(ids.size(), [&](std::size_t i) {
    auto [id, kind] = ids[i];
    auto it = cls.per_cube_sup.find(id);
    double sup = it == cls.per_cube_sup.end() ? 0.0 : it->second;
    CubeExtension<M> c = build_cube_extension<M>(u, sel.params, id, kind, sup, opt.sampling, opt.quadrature);
    double worst = 0.0;
    for (const auto& v : c.boundary_values) worst = std::max(worst, TargetManifold::distance_to_manifold(v));
    if (kind == CubeKind::good) {
      for (const auto& cell : cells)
        for (int k = 0; k < opt.check_resolution; ++k) {
          double s = (k + 0.5) / opt.check_resolution;
          worst = std::max(worst, TargetManifold::distance_to_manifold(c.local.value(Space<M>(s * cell.omega))));
        }
    }
    if (worst > tube)
      throw TubeViolation("cube " + id.str() + ": extension leaves the tube (distance " + std::to_string(worst) +
                          " > " + std::to_string(tube) + ")");
    tube_dist[i] = worst;
    built[i] = std::move(c);
  });
  double tube_max = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    tube_max = std::max(tube_max, tube_dist[i]);
    field.add_cube(std::move(*built[i]));
  }

  // Continuity across faces: same-scale neighbours share their boundary samples exactly,
  // vertically adjacent scales only up to interpolation.
  double same = 0.0, cross = 0.0;
  const int probes = 9;
  for (const auto& c : field.cubes()) {
    for (int a = 0; a < M; ++a) {
      CubeId<M> nb = c.id;
      nb.j[a] += 1;
      for (const auto& x : detail::face_points<M>(c.box, a, c.box.hi[a], probes)) {
        const auto* other = field.owner(x);
        if (other && other->id == nb) same = std::max(same, (c.value(x) - other->value(x)).norm());
      }
    }
    if (c.id.k > sel.params.k_min) {
      for (const auto& x : detail::face_points<M>(c.box, M, c.box.hi[M], probes)) {
        const auto* up = field.owner(x);
        if (up && up != &c) cross = std::max(cross, (c.value(x) - up->value(x)).norm());
      }
    }
  }
  field.set_checks(same, cross, tube_max);

  if constexpr (M == 1) {
    if (u.target().kind() == TargetKind::circle) {
      std::vector<int> w;
      for (const auto& c : field.cubes()) {
        if (c.kind != CubeKind::bad) continue;
        std::vector<Ambient> loop;
        for (const auto& n : c.local.loop().nodes()) loop.push_back(n.value.normalized());
        w.push_back(loop_winding(loop));
      }
      field.set_windings(std::move(w));
    }
  }
  return field;
}

// Weighted measures of {|DU| >= t} over the cube band, plus the slab below it; above the band
// and outside the cone of each scale U = V / |V| is (numerically) constant and not counted.
template <int M, class Field>
  requires BoundaryField<Field, M>
DistributionReport distribution_function(const ExtensionField<M, Field>& field, const std::vector<double>& t,
                                         const DistributionOptions& o = {}) {
  detail::validate_levels(t);
  const auto& cubes = field.cubes();
  const auto cells = cube_radial_cells<M>(o.per_face);
  std::vector<LevelMeasures> part(cubes.size());
  parallel_for(cubes.size(), [&](std::size_t i) {
    const auto& c = cubes[i];
    LevelMeasures acc = empty_levels(t.size());
    if (c.kind == CubeKind::bad) {
      for (const auto& cell : cells) {
        Space<M> x = c.center + c.edge * cell.omega;
        double rate = detail::du_norm(c.value(x), c.jacobian(x));
        detail::add_homogeneous<M>(t, c.center, c.edge, cell, rate, o, acc);
      }
    } else {
      detail::add_sampled_cells<M>(t, c.center, c.edge, cells, o, [&](const Space<M>& x) {
        Ambient w = c.value(x);
        if (TargetManifold::distance_to_manifold(w) > field.tube())
          throw TubeViolation("cube " + c.id.str() + ": extension leaves the tube");
        return detail::du_norm(w, c.jacobian(x));
      }, acc);
    }
    part[i] = std::move(acc);
  });

  // Slab below the band.
  const auto& u = field.map();
  const double floor_h = field.params().band_bottom();
  Box<M> foot = field.band().footprint;
  foot.lo.array() -= floor_h;
  foot.hi.array() += floor_h;
  double spacing = o.slab_spacing > 0.0 ? o.slab_spacing : (M == 1 ? u.window().hi[0] - u.window().lo[0] : 1.0) / (M == 1 ? 1024.0 : 256.0);
  std::array<int, M> cols;
  for (int a = 0; a < M; ++a) cols[a] = std::max(1, static_cast<int>(std::ceil((foot.hi[a] - foot.lo[a]) / spacing)));
  std::size_t columns = 1;
  for (int a = 0; a < M; ++a) columns *= std::size_t(cols[a]);
  std::vector<LevelMeasures> slab(columns);
  parallel_for(columns, [&](std::size_t ci) {
    LevelMeasures acc = empty_levels(t.size());
    Space<M> x;
    double area = 1.0;
    std::size_t r = ci;
    for (int a = 0; a < M; ++a) {
      double w = (foot.hi[a] - foot.lo[a]) / cols[a];
      x[a] = foot.lo[a] + w * (double(r % cols[a]) + 0.5);
      r /= cols[a];
      area *= w;
    }
    for (int l = 0; l < o.slab_levels; ++l) {
      x[M] = floor_h * (l + 0.5) / o.slab_levels;
      auto s = gradient_convolution<M>(u, HalfSpacePoint<M>(x), field.quadrature());
      detail::add_sampled<M>(t, x, detail::du_norm(s.value, s.jacobian), area * floor_h / o.slab_levels, acc);
    }
    slab[ci] = std::move(acc);
  });

  DistributionReport r;
  r.m = M;
  r.t = t;
  r.measure = empty_levels(t.size());
  for (int w = 0; w < 3; ++w)
    for (std::size_t i = 0; i < t.size(); ++i) {
      CompensatedSum s;
      for (const auto& p : part) s.add(p[w][i]);
      for (const auto& p : slab) s.add(p[w][i]);
      r.measure[w][i] = s.value();
    }
  return r;
}

// L^p distance between U at height eps and the boundary map over the window, by the midpoint rule.
template <int M, class Field>
  requires BoundaryField<Field, M>
double trace_error(const ExtensionField<M, Field>& field, double eps, double p = 2.0, int samples = M == 1 ? 2048 : 128) {
  if (!(eps > 0.0)) throw ConfigError("trace height must be > 0");
  if (eps < field.params().band_bottom())
    throw OutOfBand("trace height below the resolved cube band", field.params().k_max);
  const auto& u = field.map();
  const Box<M> w = u.window();
  std::size_t total = 1;
  for (int a = 0; a < M; ++a) total *= std::size_t(samples);
  std::vector<double> terms(total);
  double cell = 1.0;
  for (int a = 0; a < M; ++a) cell *= (w.hi[a] - w.lo[a]) / samples;
  parallel_for(total, [&](std::size_t i) {
    Domain<M> y;
    std::size_t r = i;
    for (int a = 0; a < M; ++a) {
      y[a] = w.lo[a] + (w.hi[a] - w.lo[a]) * (double(r % samples) + 0.5) / samples;
      r /= samples;
    }
    Space<M> x;
    x.template head<M>() = y;
    x[M] = eps;
    terms[i] = power(TargetManifold::distance_unchecked(field.U(x), u(y)), p);
  });
  CompensatedSum s;
  for (double v : terms) s.add(v);
  return std::pow(s.value() * cell, 1.0 / p);
}

}  // namespace singext
