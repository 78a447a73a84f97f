#include <gtest/gtest.h>

#include <random>

#include "singext/cube_extension.hpp"
#include "singext/suite.hpp"

using namespace singext;

namespace {

// Loop sampled from a smooth closed curve f: [0, period) -> R^3 with exact derivatives.
template <class F, class DF>
BoundaryLoop sampled_loop(int n, double period, F f, DF df) {
  std::vector<BoundaryLoop::Node> nodes;
  for (int i = 0; i < n; ++i) {
    double ell = period * i / n;
    nodes.push_back({ell, f(ell), df(ell), df(ell)});
  }
  return BoundaryLoop(std::move(nodes), period);
}

// Degree-d circle data on the square loop.
BoundaryLoop square_degree_loop(int n, int d) {
  double w = 2.0 * kPi * d / 4.0;
  return sampled_loop(
      n, 4.0, [=](double l) { return Ambient(std::cos(w * l), std::sin(w * l), 0.0); },
      [=](double l) { return Ambient(-w * std::sin(w * l), w * std::cos(w * l), 0.0); });
}

BoundaryLoop unit_circle_loop(int n) {
  return sampled_loop(
      n, 2.0 * kPi, [](double l) { return Ambient(std::cos(l), std::sin(l), 0.0); },
      [](double l) { return Ambient(-std::sin(l), std::cos(l), 0.0); });
}

Eigen::Matrix<double, 3, 2> fd_jacobian(const LoopExtension& e, const Domain<2>& xi, double h) {
  Eigen::Matrix<double, 3, 2> j;
  for (int a = 0; a < 2; ++a) {
    Domain<2> d = Domain<2>::Zero();
    d[a] = h;
    j.col(a) = (e.value(xi + d) - e.value(xi - d)) / (2 * h);
  }
  return j;
}

constexpr int kN = 1024;

struct Pipeline {
  BoundaryMap<1> u;
  SkeletonSelection<1> sel;
  CubeClassification<1> cls;
  std::optional<ExtensionField<1, BoundaryMap<1>>> field;
};

Pipeline run_pipeline(BoundaryMap<1> u, double lambda) {
  Pipeline p{std::move(u), {}, {}, std::nullopt};
  BandSpec<1> band;
  band.min_edge = 2.0 / (kN - 1);
  band.top_height = oscillation_top_height<1>(p.u, 2.0, 1e-2, band.footprint);
  CalibrationConstants c;
  SelectionOptions<1> so;
  so.band = band;
  so.sampling.min_spacing = 1.0 / (kN - 1);
  p.sel = select_tau_h<1>(p.u, lambda, 0.5, c, so);
  p.cls = classify_cubes(p.sel, c, 0.5);
  AssemblyOptions<1> ao;
  ao.sampling.min_spacing = 1.0 / (kN - 1);
  p.field.emplace(assemble<1>(p.u, p.sel, p.cls, 0.5, ao));
  return p;
}

const std::vector<double> kLevels{0.25, 0.5, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};

}  // namespace

TEST(CubeBall, RoundTripAndNorms) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d x(d(rng), d(rng), d(rng));
    Eigen::Vector3d y = cube_to_ball<3>(x);
    EXPECT_NEAR(y.norm(), x.cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((ball_to_cube<3>(y) - x).norm(), 1e-15);
  }
  Eigen::Vector2d corner(0.5, 0.5), face(0.5, 0.0);
  EXPECT_NEAR(cube_to_ball<2>(corner).norm(), 0.5, 1e-15);
  EXPECT_LE((cube_to_ball<2>(face) - face).norm(), 0.0);
  EXPECT_EQ(cube_to_ball<2>(Eigen::Vector2d::Zero()), Eigen::Vector2d::Zero());
}

TEST(CubeBall, LipschitzBound) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-0.5, 0.5), small(-1e-3, 1e-3);
  double worst2 = 0.0, worst3 = 0.0;
  for (int i = 0; i < 20000; ++i) {
    Eigen::Vector2d a(d(rng), d(rng)), b = a + Eigen::Vector2d(small(rng), small(rng));
    worst2 = std::max(worst2, (cube_to_ball<2>(a) - cube_to_ball<2>(b)).norm() / (a - b).norm());
    Eigen::Vector3d c(d(rng), d(rng), d(rng)), e = c + Eigen::Vector3d(small(rng), small(rng), small(rng));
    worst3 = std::max(worst3, (cube_to_ball<3>(c) - cube_to_ball<3>(e)).norm() / (c - e).norm());
  }
  EXPECT_LE(worst2, std::sqrt(2.0));
  EXPECT_LE(worst3, std::sqrt(3.0));
}

TEST(StarShape, SquareParametrization) {
  auto [x0, t0] = shape_point(StarShape::square, 0.0);
  EXPECT_LE((x0 - Domain<2>(0.5, -0.5)).norm(), 1e-15);
  EXPECT_LE((t0 - Domain<2>(0.0, 1.0)).norm(), 1e-15);
  auto [x1, t1] = shape_point(StarShape::square, 1.5);
  EXPECT_LE((x1 - Domain<2>(0.0, 0.5)).norm(), 1e-15);
  EXPECT_LE((t1 - Domain<2>(-1.0, 0.0)).norm(), 1e-15);
  for (double ell : {0.1, 0.7, 1.3, 2.2, 2.9, 3.6}) {
    auto [x, t] = shape_point(StarShape::square, ell);
    EXPECT_NEAR(shape_radius(StarShape::square, x), 1.0, 1e-15);
    auto sp = shape_param(StarShape::square, std::atan2(x[1], x[0]));
    EXPECT_NEAR(sp.ell, ell, 1e-12);
    double h = 1e-6, a = std::atan2(x[1], x[0]);
    double fd = (shape_param(StarShape::square, a + h).ell - shape_param(StarShape::square, a - h).ell) / (2 * h);
    EXPECT_NEAR(sp.dell, fd, 1e-6);
  }
  double area = 0.0;
  for (const auto& c : radial_cells(StarShape::square, 16)) area += c.measure;
  EXPECT_NEAR(area / 2.0, 1.0, 1e-14);  // volume of the reference square
  area = 0.0;
  for (const auto& c : cube_radial_cells3(8)) area += c.measure;
  EXPECT_NEAR(area / 3.0, 1.0, 1e-14);
}

TEST(BoundaryLoop, HermiteInterpolationAndIntegrals) {
  BoundaryLoop loop = unit_circle_loop(64);
  for (const auto& n : loop.nodes()) EXPECT_LE((loop.value(n.ell) - Ambient(std::cos(n.ell), std::sin(n.ell), 0)).norm(), 1e-15);
  for (double l : {0.013, 1.7, 3.3, 6.2}) {
    EXPECT_LE((loop.value(l) - Ambient(std::cos(l), std::sin(l), 0)).norm(), 1e-6);
    EXPECT_LE((loop.derivative(l) - Ambient(-std::sin(l), std::cos(l), 0)).norm(), 1e-4);
  }
  for (auto [a, b] : std::vector<std::pair<double, double>>{{0.2, 1.1}, {5.9, 7.0}, {-0.5, 0.4}, {0.0, 2 * kPi}}) {
    Ambient exact(std::sin(b) - std::sin(a), std::cos(a) - std::cos(b), 0.0);
    // composite cubic Hermite: |error| <= (b - a) h^4 / 720 max|f''''| per component
    double h = 2 * kPi / 64;
    EXPECT_LE((loop.integral(a, b) - exact).norm(), std::sqrt(2.0) * (b - a) * std::pow(h, 4) / 720);
  }
  EXPECT_LE(loop.mean().norm(), 1e-12);
  EXPECT_LE((loop.integral(0.3, 0.3 + 2 * kPi) - loop.total()).norm(), 1e-13);
}

TEST(LoopExtension, ConstantDataGivesConstantField) {
  Ambient c(0.0, 1.0, 0.0);
  BoundaryLoop loop = sampled_loop(16, 4.0, [&](double) { return c; }, [](double) { return Ambient::Zero(); });
  LoopExtension good(StarShape::square, loop, CubeKind::good);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (int i = 0; i < 50; ++i) {
    Domain<2> xi(d(rng), d(rng));
    EXPECT_LE((good.value(xi) - c).norm(), 1e-14);
    EXPECT_LE(good.jacobian(xi).norm(), 1e-12);
  }
  EXPECT_LE((good.value(Domain<2>::Zero()) - c).norm(), 1e-14);
}

TEST(LoopExtension, JacobiansMatchFiniteDifferences) {
  BoundaryLoop loop = square_degree_loop(96, 1);
  LoopExtension good(StarShape::square, loop, CubeKind::good);
  LoopExtension bad(StarShape::square, loop, CubeKind::bad);
  for (Domain<2> xi : {Domain<2>(0.31, 0.07), Domain<2>(-0.12, 0.4), Domain<2>(-0.2, -0.05), Domain<2>(0.05, -0.33),
                       Domain<2>(0.01, 0.002)}) {
    auto jg = good.jacobian(xi), fg = fd_jacobian(good, xi, 1e-6);
    EXPECT_LE((jg - fg).norm(), 1e-5 * std::max(1.0, fg.norm())) << xi.transpose();
    auto jb = bad.jacobian(xi), fb = fd_jacobian(bad, xi, 1e-7);
    EXPECT_LE((jb - fb).norm(), 1e-5 * std::max(1.0, fb.norm())) << xi.transpose();
  }
  EXPECT_THROW(bad.value(Domain<2>::Zero()), SingularPoint);
}

TEST(LoopExtension, BadCubeIsHomogeneous) {
  LoopExtension bad(StarShape::square, square_degree_loop(64, 2), CubeKind::bad);
  for (Domain<2> xi : {Domain<2>(0.3, 0.1), Domain<2>(-0.2, 0.45)}) {
    for (double s : {0.1, 0.5, 0.9}) {
      EXPECT_LE((bad.value(s * xi) - bad.value(xi)).norm(), 1e-14);
      EXPECT_LE((s * bad.jacobian(s * xi) - bad.jacobian(xi)).norm(), 1e-10);
    }
  }
}

TEST(LoopExtension, GoodCubeReachesBoundaryData) {
  BoundaryLoop loop = square_degree_loop(64, 1);
  LoopExtension good(StarShape::square, loop, CubeKind::good);
  for (double ell : {0.3, 1.2, 2.75, 3.4}) {
    auto [x, t] = shape_point(StarShape::square, ell);
    Ambient target = loop.value(ell);
    EXPECT_LE((good.value(x) - target).norm(), 1e-14);
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.2, 0.05, 0.0125, 0.003}) {
      double err = (good.value(Domain<2>((1 - eps) * x)) - target).norm();
      EXPECT_LT(err, prev);
      prev = err;
    }
    EXPECT_LT(prev, 0.02);
  }
  EXPECT_LE((good.value(Domain<2>::Zero()) - loop.mean()).norm(), 1e-14);
}

TEST(Distribution, HomogeneousDiskScalesLikeInverseSquare) {
  LoopExtension disk(StarShape::circle, unit_circle_loop(512), CubeKind::bad);
  DistributionOptions o;
  o.per_face = 512;
  std::vector<double> t{0.5, 1.0, 2.0, 4.0};
  auto r = homogeneous_distribution(disk, Space<1>(0.0, 10.0), 1.0, t, o);
  const auto& m = r.of(Weight::euclidean);
  EXPECT_NEAR(m[0], kPi, 0.01 * kPi);
  EXPECT_LE(m[0], 4.0 * kPi);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_NEAR(t[i] * t[i] * m[i], kPi, 0.01 * kPi);
  EXPECT_THROW(homogeneous_distribution(LoopExtension(StarShape::circle, unit_circle_loop(8), CubeKind::good),
                                        Space<1>(0.0, 10.0), 1.0, t, o),
               ConfigError);
  EXPECT_THROW(homogeneous_distribution(disk, Space<1>(0.0, 10.0), 1.0, {1.0, 0.5}, o), ConfigError);
}

TEST(Distribution, MetricFactors) {
  Space<1> x(0.3, 0.25);
  EXPECT_EQ(metric_factor<1>(Weight::euclidean, x), 1.0);
  EXPECT_DOUBLE_EQ(metric_factor<1>(Weight::hyperbolic, x), 4.0);
  EXPECT_DOUBLE_EQ(metric_factor<1>(Weight::ball, x), 4.0 / (0.09 + 2.25 * 2.25));
  Space<2> y(0.0, 0.0, 2.0);
  EXPECT_DOUBLE_EQ(metric_factor<2>(Weight::ball, y), 0.25);
}

class ConstantPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { p_ = new Pipeline(run_pipeline(suite::constant_circle(kN), 2.0)); }
  static void TearDownTestSuite() { delete p_; }
  static Pipeline* p_;
};
Pipeline* ConstantPipeline::p_ = nullptr;

TEST_F(ConstantPipeline, ZeroEnergyEverywhere) {
  const auto& f = *p_->field;
  EXPECT_TRUE(f.singular_set().empty());
  auto r = distribution_function<1>(f, kLevels);
  for (Weight w : kWeights)
    for (double v : r.of(w)) EXPECT_EQ(v, 0.0);
  for (double eps : {1.0 / 16, 1.0 / 64}) EXPECT_EQ(trace_error<1>(f, eps), 0.0);
}

class DegreeOnePipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { p_ = new Pipeline(run_pipeline(suite::degree_map(kN, 1), 20.0)); }
  static void TearDownTestSuite() { delete p_; }
  static Pipeline* p_;
};
Pipeline* DegreeOnePipeline::p_ = nullptr;

TEST_F(DegreeOnePipeline, SingularSetCarriesTheDegree) {
  const auto& f = *p_->field;
  EXPECT_EQ(f.singular_set().size(), p_->cls.bad.size());
  ASSERT_EQ(f.windings().size(), p_->cls.bad.size());
  int sum = 0;
  for (int w : f.windings()) sum += w;
  EXPECT_EQ(sum, winding_number(p_->u));
  EXPECT_EQ(sum, 1);
}

TEST_F(DegreeOnePipeline, FacesAgreeAndStayInTube) {
  const auto& f = *p_->field;
  EXPECT_LE(f.same_scale_face_mismatch(), 1e-6);
  EXPECT_LE(f.max_tube_distance(), 0.5);
  EXPECT_TRUE(std::isfinite(f.cross_scale_face_mismatch()));
}

TEST_F(DegreeOnePipeline, RetractionLandsOnTarget) {
  const auto& f = *p_->field;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> xs(-0.5, 1.5), zs(0.0, 1.0);
  double lo = f.params().band_bottom(), hi = std::min(1.0, f.params().band_top());
  int owned = 0;
  for (int i = 0; i < 500; ++i) {
    Space<1> x(xs(rng), lo * std::pow(hi / lo, zs(rng)));
    if (f.owner(x)) ++owned;
    bool singular = false;
    for (const auto& s : f.singular_set()) singular |= (s - x).norm() < 1e-12;
    if (singular) continue;
    EXPECT_NEAR(f.U(x).norm(), 1.0, 1e-12);
  }
  EXPECT_GT(owned, 0);
}

TEST_F(DegreeOnePipeline, MeasuresDecreaseInThreshold) {
  auto r = distribution_function<1>(*p_->field, kLevels);
  for (Weight w : kWeights) {
    const auto& m = r.of(w);
    EXPECT_GT(m.front(), 0.0);
    for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LE(m[i], m[i - 1]) << weight_name(w);
  }
  EXPECT_GT(r.max_scaled(Weight::euclidean), 0.0);
}

TEST_F(DegreeOnePipeline, TraceApproachesBoundaryMap) {
  const auto& f = *p_->field;
  double coarse = trace_error<1>(f, 1.0 / 16), fine = trace_error<1>(f, 1.0 / 64);
  EXPECT_LT(fine, coarse);
  EXPECT_LT(fine, 0.1);
  EXPECT_THROW(trace_error<1>(f, 0.5 * f.params().band_bottom()), OutOfBand);
}
