#include <gtest/gtest.h>

#include <random>

#include "singext/mean_oscillation.hpp"
#include "singext/suite.hpp"

using namespace singext;

namespace {

const Ambient kA(1, 0, 0);
const Ambient kB(std::cos(2.0), std::sin(2.0), 0);  // d(a, b) = 2

FunctionField<1> two_valued() {
  FunctionField<1> f(
      TargetManifold(), [](const Domain<1>& y) { return y[0] < 0.5 ? kA : kB; }, kA,
      Box<1>{domain_point<1>({-10.0}), domain_point<1>({10.0})});
  f.set_breaks(0, {-10.0, 0.5, 10.0});
  return f;
}

// Independent pair sum over the centered stencil x' + s(k + 1/2), |s(k + 1/2)| <= t.
template <class Field>
double brute_force_mo(const Field& u, double xp, double t, int P, double delta, double p, double* sharp) {
  double s = std::min(t, 1.0) / P;
  std::vector<Ambient> v;
  for (long k = -10 * P; k <= 10 * P; ++k) {
    double off = s * (k + 0.5);
    if (std::abs(off) <= t) v.push_back(u(domain_point<1>({xp + off})));
  }
  double sum = 0.0;
  double best = 1e300;
  for (const auto& z : v) {
    double row = 0.0;
    for (const auto& y : v) row += truncated_power(TargetManifold::distance_unchecked(y, z), delta, p);
    sum += row;
    best = std::min(best, row / v.size());
  }
  if (sharp) *sharp = best;
  return sum / (double(v.size()) * v.size());
}

std::vector<BoundaryMap<1>> maps() {
  return {suite::degree_map(64, 1), suite::degree_map(64, 3), suite::bump_map(64, 2.0),
          suite::double_vortex(128), suite::degree_map(64, 1, 0.4, 0.6)};
}

}  // namespace

TEST(MeanOscillation, TrivialCases) {
  auto c = suite::constant_circle(32);
  HalfSpacePoint<1> x(domain_point<1>({0.4}), 0.2);
  EXPECT_EQ(mo<1>(c, x, 0.0, 2.0), 0.0);
  EXPECT_EQ(mo_sharp<1>(c, x, 0.0, 2.0), 0.0);
  auto u = suite::degree_map(64, 2);
  EXPECT_EQ(mo<1>(u, x, kPi, 2.0), 0.0);
  EXPECT_EQ(mo_sharp<1>(u, x, kPi, 2.0), 0.0);
}

TEST(MeanOscillation, HalfHalfSplit) {
  auto u = two_valued();
  for (int P : {4, 16, 33}) {
    HalfSpacePoint<1> x(domain_point<1>({0.5}), 0.01);
    StencilSpec spec{P};
    double sharp_bf = 0;
    double bf = brute_force_mo(u, 0.5, 0.01, P, 0.0, 2.0, &sharp_bf);
    EXPECT_NEAR(mo<1>(u, x, 0.0, 2.0, spec), 2.0, 1e-12);  // c^2 / 2 with c = 2
    EXPECT_NEAR(mo<1>(u, x, 0.0, 2.0, spec), bf, 1e-12);
    EXPECT_NEAR(mo_sharp<1>(u, x, 0.0, 2.0, spec), sharp_bf, 1e-12);
    EXPECT_NEAR(mo_sharp<1>(u, x, 0.0, 2.0, spec), 2.0, 1e-12);  // c^p / 2
  }
}

TEST(MeanOscillation, MatchesBruteForceWithFarPoints) {
  auto u = suite::degree_map(40, 1);
  for (double t : {0.05, 0.3, 0.9, 2.5}) {
    for (double xp : {0.0, 0.3, 0.97, 1.4}) {
      HalfSpacePoint<1> x(domain_point<1>({xp}), t);
      for (double delta : {0.0, 0.5}) {
        double sharp = 0;
        double bf = brute_force_mo(u, xp, t, 16, delta, 2.0, &sharp);
        EXPECT_NEAR(mo<1>(u, x, delta, 2.0), bf, 1e-12);
        EXPECT_NEAR(mo_sharp<1>(u, x, delta, 2.0), sharp, 1e-12);
      }
    }
  }
}

TEST(MeanOscillation, TwoDimensionalStencilCounts) {
  auto u = suite::sphere_bubble(12);
  for (double t : {0.07, 0.4, 1.7}) {
    HalfSpacePoint<2> x(Domain<2>(0.31, 0.62), t);
    StencilSpec spec{6};
    auto st = ball_stencil<2>(u, x, spec);
    Lattice<2> lat = centered_lattice<2>(x, spec);
    long count = 0, inside = 0;
    for (long a = -200; a <= 200; ++a)
      for (long b = -200; b <= 200; ++b) {
        Domain<2> y(lat.origin[0] + lat.spacing * a, lat.origin[1] + lat.spacing * b);
        if ((y - x.x_prime).squaredNorm() <= t * t) {
          ++count;
          if (u.window().contains(y)) ++inside;
        }
      }
    EXPECT_EQ(st.total(), count);
    EXPECT_EQ(long(st.values.size()), inside);
  }
}

TEST(MeanOscillation, TruncationAndSharpInequalities) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> xs(-0.3, 1.3), ls(std::log(0.003), std::log(3.0)), ds(0.0, kPi);
  for (const auto& u : maps()) {
    for (int i = 0; i < 60; ++i) {
      HalfSpacePoint<1> x(domain_point<1>({xs(rng)}), std::exp(ls(rng)));
      auto st = ball_stencil<1>(u, x, StencilSpec{12});
      for (double p : {1.0, 2.0, 3.0}) {
        double d0 = ds(rng), d1 = ds(rng);
        double lhs = std::pow(mo<1>(st, d1, p), 1.0 / p);
        double rhs = std::pow(mo<1>(st, d0, p), 1.0 / p) + std::max(d0 - d1, 0.0);
        ASSERT_LE(lhs - rhs, 1e-12);
        ASSERT_LE(mo<1>(st, d0, p) - power(2.0, p) * mo_sharp<1>(st, d0 / 2, p), 1e-12);
        double a = mo<1>(st, std::min(d0, d1), p), b = mo<1>(st, std::max(d0, d1), p);
        ASSERT_LE(b, a);
      }
    }
  }
}

TEST(MeanOscillation, FubiniAveragedComparison) {
  // Nested stencils on one global lattice: the balls of radius t around stencil points of
  // B(x', t) lie inside B(x', 2t).
  for (const auto& u : maps()) {
    for (double t : {0.02, 0.1, 0.4}) {
      for (double xp : {0.2, 0.5, 0.85}) {
        Lattice<1> lat{domain_point<1>({0.0}), t / 16};
        HalfSpacePoint<1> x(domain_point<1>({xp}), t);
        auto outer = ball_stencil<1>(u, x, lat);
        std::vector<double> zs;
        for (long k = -40; k <= 40; ++k) {
          double z = lat.spacing * (std::floor(xp / lat.spacing) + k);
          if (std::abs(z - xp) <= t) zs.push_back(z);
        }
        double avg = 0.0;
        for (double z : zs) avg += mo_sharp<1>(ball_stencil<1>(u, HalfSpacePoint<1>(domain_point<1>({z}), t), lat), 0.0, 2.0);
        avg /= zs.size();
        double rhs = 4.0 * mo<1>(ball_stencil<1>(u, HalfSpacePoint<1>(domain_point<1>({xp}), 2 * t), lat), 0.0, 2.0);
        EXPECT_LE(avg, rhs + 1e-6);
        (void)outer;
      }
    }
  }
}
