#include <gtest/gtest.h>

#include <random>

#include "singext/conformal.hpp"
#include "singext/suite.hpp"

using namespace singext;

namespace {

template <int D>
Vec<D> random_ball_point(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec<D> x;
  for (int i = 0; i < D; ++i) x[i] = n(rng);
  return x.normalized() * std::pow(u(rng), 1.0 / D);
}

template <int D>
void check_identities(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vec<D> e = unit_e<D>();
  for (int i = 0; i < 10000; ++i) {
    Vec<D> x = random_ball_point<D>(rng);
    Vec<D> y = psi<D>(x);
    double lhs = e.dot(y) * (x + e).squaredNorm() + 2.0 * x.squaredNorm() - 2.0;
    EXPECT_NEAR(lhs, 0.0, 1e-12);
    EXPECT_GT(e.dot(y), 0.0);
  }
  for (int i = 0; i < 1000; ++i) {
    Vec<D> x = random_ball_point<D>(rng);
    EXPECT_LE((psi_inverse<D>(psi<D>(x)) - x).norm(), 1e-10);
  }
  for (int i = 0; i < 100; ++i) {
    Vec<D> x = random_ball_point<D>(rng);
    Eigen::JacobiSVD<Eigen::Matrix<double, D, D>> svd(psi_jacobian<D>(x));
    auto s = svd.singularValues();
    EXPECT_LE((s.maxCoeff() - s.minCoeff()) / s.maxCoeff(), 1e-6);
    // against central differences
    Eigen::Matrix<double, D, D> fd;
    for (int c = 0; c < D; ++c) {
      Vec<D> h = Vec<D>::Zero();
      h[c] = 1e-6;
      fd.col(c) = (psi<D>(x + h) - psi<D>(x - h)) / 2e-6;
    }
    EXPECT_LE((fd - psi_jacobian<D>(x)).norm(), 1e-5 * fd.norm());
  }
}

}  // namespace

TEST(Conformal, CenterMapsToTwoE) {
  EXPECT_LE((psi<2>(Vec<2>::Zero()) - Vec<2>(0, 2)).norm(), 0.0);
  EXPECT_LE((psi<3>(Vec<3>::Zero()) - Vec<3>(0, 0, 2)).norm(), 0.0);
  EXPECT_LE((psi<2>(Vec<2>(0, 1))).norm(), 0.0);
}

TEST(Conformal, IdentitiesRoundTripAndConformalityPlane) { check_identities<2>(1); }
TEST(Conformal, IdentitiesRoundTripAndConformalitySpace) { check_identities<3>(2); }

TEST(Conformal, SphereGoesToHyperplane) {
  for (double a : {0.0, 0.7, 2.0, 3.0, -1.0, -1.5}) {
    Vec<2> s(std::cos(a), std::sin(a));
    EXPECT_NEAR(psi<2>(s)[1], 0.0, 1e-12);
    Domain<1> y = sphere_to_plane<1>(s);
    EXPECT_LE((plane_to_sphere<1>(y) - s).norm(), 1e-12);
  }
  Vec<3> s = Vec<3>(0.3, -0.4, 0.5).normalized();
  EXPECT_NEAR(psi<3>(s)[2], 0.0, 1e-12);
  EXPECT_THROW(sphere_to_plane<1>(Vec<2>(0.5, 0.0)), InvalidPoint);
}

TEST(Conformal, PoleIsRejected) {
  EXPECT_THROW(psi<2>(Vec<2>(0, -1)), PoleError);
  EXPECT_THROW(psi<3>(Vec<3>(0, 0, -1 + 1e-9)), PoleError);
  EXPECT_THROW(psi_inverse<2>(Vec<2>(0, -2)), PoleError);
  EXPECT_NO_THROW(psi<2>(Vec<2>(1e-7, -1)));
  auto u = suite::degree_map(64, 1);
  SpherePullback<1, BoundaryMap<1>> pb(u);
  EXPECT_THROW(pb(Vec<2>(0, -1)), PoleError);
}

TEST(Conformal, PullbackOfConstantIsConstant) {
  auto u = suite::constant_circle(64);
  SpherePullback<1, BoundaryMap<1>> pb(u);
  auto nodes = circle_nodes(256);
  for (const auto& s : nodes.points) EXPECT_LE((pb(s) - u.far_value()).norm(), 0.0);
  EXPECT_EQ(sphere_gagliardo_energy<1>(pb, nodes, 2.0), 0.0);
}

TEST(Conformal, PushforwardInvertsPullback) {
  auto u = suite::degree_map(256, 1);
  SpherePullback<1, BoundaryMap<1>> pb(u);
  auto back = plane_pushforward<1>([&](const Vec<2>& s) { return pb(s); });
  for (double y : {0.1, 0.37, 0.8, 1.4}) {
    Domain<1> p = domain_point<1>({y});
    EXPECT_LE((back(p) - u(p)).norm(), 1e-12);
  }
}

TEST(Conformal, NodeSetsCoverTheSphere) {
  double len = 0.0;
  for (double w : circle_nodes(100).weights) len += w;
  EXPECT_NEAR(len, 2 * kPi, 1e-12);
  for (int l : {0, 2, 3}) {
    auto n = icosahedral_nodes(l);
    EXPECT_EQ(n.points.size(), 20u << (2 * l));
    double area = 0.0;
    for (double w : n.weights) area += w;
    EXPECT_NEAR(area, 4 * kPi, 1e-10);
    for (const auto& p : n.points) EXPECT_NEAR(p.norm(), 1.0, 1e-14);
  }
}

TEST(Conformal, EnergyAndGapAreInvariantOnTheCircle) {
  QuadratureSpec q{1024, 0.25, TailMode::analytic};
  auto nodes = circle_nodes(4096);
  for (const auto& u : {suite::degree_map(1024, 1), suite::bump_map(1024, 1.0)}) {
    PairGrid<1> g(u, q);
    SpherePullback<1, BoundaryMap<1>> pb(u);
    double ep = gagliardo_energy<1>(g, 2.0, q), es = sphere_gagliardo_energy<1>(pb, nodes, 2.0);
    double gp = gap_potential<1>(g, 0.125, q), gs = sphere_gap_potential<1>(pb, nodes, 0.125);
    EXPECT_GT(ep, 0.0);
    EXPECT_NEAR(es / ep, 1.0, 0.02);
    EXPECT_NEAR(gs / gp, 1.0, 0.02);
  }
}
