#include <gtest/gtest.h>

#include <random>
#include <set>

#include "singext/cubes.hpp"

using namespace singext;

namespace {

CubeFamilyParams<1> family(double lambda, double tau, double h, long k0, long k1) {
  CubeFamilyParams<1> p;
  p.lambda = lambda;
  p.tau = tau;
  p.k_min = k0;
  p.k_max = k1;
  p.translations = {domain_point<1>({h})};
  return p;
}

template <int M>
bool on_boundary(const Box<M + 1>& b, const Space<M>& x) {
  if (!b.contains(x, 1e-12)) return false;
  for (int a = 0; a <= M; ++a)
    if (std::abs(x[a] - b.lo[a]) <= 1e-12 || std::abs(x[a] - b.hi[a]) <= 1e-12) return true;
  return false;
}

template <int M>
std::set<std::vector<double>> as_set(const std::vector<HalfSpacePoint<M>>& pts) {
  std::set<std::vector<double>> s;
  for (const auto& p : pts) {
    Space<M> x = p.full();
    s.insert(std::vector<double>(x.data(), x.data() + M + 1));
  }
  return s;
}

}  // namespace

TEST(Cubes, GeometryExamples) {
  auto p = family(2, 1, 0, 0, 3);
  auto b = cube_geometry(p, CubeId<1>{0, {0}});
  EXPECT_EQ(b.lo, Space<1>(0, 1));
  EXPECT_EQ(b.hi, Space<1>(1, 2));
  auto c = cube_geometry(p, CubeId<1>{1, {3}});
  EXPECT_EQ(c.lo, Space<1>(1.5, 0.5));
  EXPECT_EQ(c.hi, Space<1>(2.0, 1.0));
  EXPECT_THROW(cube_geometry(p, CubeId<1>{4, {0}}), OutOfRange);
  for (double lambda : {2.0, 3.7, 15.0})
    for (double tau : {1.0, 1.9})
      for (long k = -3; k <= 5; ++k) {
        auto q = family(lambda, std::min(tau, lambda), 0.3, -3, 5);
        auto g = cube_geometry(q, CubeId<1>{k, {2}});
        EXPECT_NEAR((g.hi[1] - g.lo[1]) / q.edge(k), 1.0, 1e-12);
        EXPECT_NEAR((g.hi[0] - g.lo[0]) / q.edge(k), 1.0, 1e-12);
      }
}

TEST(Cubes, LocateExamples) {
  auto p = family(2, 1, 0, -2, 4);
  EXPECT_EQ(locate(p, HalfSpacePoint<1>(domain_point<1>({0.5}), 1.5)), (CubeId<1>{0, {0}}));
  EXPECT_EQ(locate(p, HalfSpacePoint<1>(domain_point<1>({3.7}), 0.6)), (CubeId<1>{1, {7}}));
  // shared vertical face belongs to the cube on its right; shared horizontal face to the upper cube
  EXPECT_EQ(locate(p, HalfSpacePoint<1>(domain_point<1>({1.0}), 1.5)), (CubeId<1>{0, {1}}));
  EXPECT_EQ(locate(p, HalfSpacePoint<1>(domain_point<1>({0.25}), 1.0)), (CubeId<1>{0, {0}}));
  try {
    locate(p, HalfSpacePoint<1>(domain_point<1>({0.5}), 1e-4));
    FAIL();
  } catch (const OutOfBand& e) {
    EXPECT_EQ(e.nearest_k(), 4);
  }
  try {
    locate(p, HalfSpacePoint<1>(domain_point<1>({0.5}), 100.0));
    FAIL();
  } catch (const OutOfBand& e) {
    EXPECT_EQ(e.nearest_k(), -2);
  }
}

TEST(Cubes, CoveringAndDisjointness) {
  std::mt19937_64 rng(1);
  for (double lambda : {2.0, 5.5, 23.0}) {
    CubeFamilyParams<1> p = family(lambda, 1.3, 0.0, -1, 6);
    p.translations.clear();
    for (long k = p.k_min; k <= p.k_max; ++k) p.translations.push_back(domain_point<1>({std::fmod(0.37 * k + 0.5, 1.0)}));
    std::uniform_real_distribution<double> xs(-2, 3), ls(std::log(p.band_bottom()), std::log(p.band_top()));
    for (int i = 0; i < 10000; ++i) {
      HalfSpacePoint<1> x(domain_point<1>({xs(rng)}), std::exp(ls(rng)));
      if (x.height >= p.band_top()) continue;
      auto id = locate(p, x);
      auto b = cube_geometry(p, id);
      ASSERT_TRUE(x.x_prime[0] >= b.lo[0] && x.x_prime[0] < b.hi[0] && x.height >= b.lo[1] && x.height < b.hi[1]);
      ASSERT_GE(x.height, p.edge(id.k) / (lambda - 1) * (1 - 1e-15));
    }
  }
}

TEST(Cubes, DisjointInteriorsTwoDimensional) {
  CubeFamilyParams<2> p;
  p.lambda = 3;
  p.tau = 2;
  p.k_min = 0;
  p.k_max = 2;
  p.translations = {Domain<2>(0.2, 0.7)};
  auto ids = enumerate_window(p, Box<2>{Domain<2>(0, 0), Domain<2>(1, 1)});
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  for (int i = 0; i < 2000; ++i) {
    auto a = ids[pick(rng)], b = ids[pick(rng)];
    if (a == b || a.k != b.k) continue;
    auto ba = cube_geometry(p, a), bb = cube_geometry(p, b);
    bool separated = false;
    for (int c = 0; c < 3; ++c) separated = separated || ba.hi[c] <= bb.lo[c] + 1e-12 || bb.hi[c] <= ba.lo[c] + 1e-12;
    ASSERT_TRUE(separated);
  }
  std::mt19937_64 r2(4);
  std::uniform_real_distribution<double> u(0, 1), ls(std::log(p.band_bottom()), std::log(p.band_top()));
  for (int i = 0; i < 10000; ++i) {
    HalfSpacePoint<2> x(Domain<2>(u(r2), u(r2)), std::exp(ls(r2)));
    if (x.height >= p.band_top()) continue;
    auto id = locate(p, x);
    ASSERT_TRUE(std::binary_search(ids.begin(), ids.end(), id));
    ASSERT_TRUE(cube_geometry(p, id).contains(x.full()));
  }
}

TEST(Cubes, EnumerateWindowExamples) {
  Box<1> w{domain_point<1>({0.0}), domain_point<1>({1.0})};
  auto a = enumerate_window(family(2, 1, 0, 0, 0), w);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], (CubeId<1>{0, {0}}));
  auto b = enumerate_window(family(2, 1, 0, 0, 1), w);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[1], (CubeId<1>{1, {0}}));
  EXPECT_EQ(b[2], (CubeId<1>{1, {1}}));
  auto p = family(2, 1, 0.5, 0, 1);
  auto c = enumerate_window(p, w);
  // k = 0 footprints [-0.5, 0.5) and [0.5, 1.5); k = 1 footprints of edge 1/2 offset by 1/4
  ASSERT_EQ(c.size(), 5u);
  EXPECT_EQ(c[0], (CubeId<1>{0, {-1}}));
  EXPECT_EQ(c[1], (CubeId<1>{0, {0}}));
  for (const auto& id : c) {
    auto g = cube_geometry(p, id);
    EXPECT_LT(g.lo[0], 1.0);
    EXPECT_GT(g.hi[0], 0.0);
  }
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
}

TEST(Cubes, SampleBoundary) {
  auto p = family(2, 1, 0, 0, 2);
  CubeId<1> id{1, {2}};
  auto s = sample_boundary(p, id, 2);
  EXPECT_EQ(s.size(), 8u);
  EXPECT_EQ(as_set(s).size(), 8u);
  auto b = cube_geometry(p, id);
  for (int d : {2, 4, 8, 16}) {
    auto fine = sample_boundary(p, id, 2 * d);
    auto coarse = sample_boundary(p, id, d);
    auto fs = as_set(fine), cs = as_set(coarse);
    EXPECT_EQ(fs.size(), fine.size());
    EXPECT_TRUE(std::includes(fs.begin(), fs.end(), cs.begin(), cs.end()));
    for (const auto& x : fine) EXPECT_TRUE(on_boundary<1>(b, x.full()));
  }
  EXPECT_THROW(sample_boundary(p, id, 1), ResolutionError);

  CubeFamilyParams<2> q;
  q.lambda = 4;
  q.k_min = 0;
  q.k_max = 1;
  q.translations = {Domain<2>(0.5, 0.25)};
  CubeId<2> id2{1, {0, -1}};
  auto s2 = sample_boundary(q, id2, 2);
  EXPECT_EQ(s2.size(), 26u);
  EXPECT_EQ(as_set(s2).size(), 26u);
  auto b2 = cube_geometry(q, id2);
  auto f2 = skeleton_samples(q, id2, SkeletonSampling{4});
  EXPECT_EQ(f2.bottom.size(), 25u);
  EXPECT_EQ(f2.top.size(), 25u);
  EXPECT_EQ(f2.lateral.size(), 3u * 16u);
  f2.for_each([&](const Space<2>& x) { EXPECT_TRUE(on_boundary<2>(b2, x)); });
  auto fine2 = as_set(sample_boundary(q, id2, 4));
  auto coarse2 = as_set(s2);
  EXPECT_TRUE(std::includes(fine2.begin(), fine2.end(), coarse2.begin(), coarse2.end()));
}

TEST(Cubes, GradedSamplingNests) {
  auto p = family(20, 3, 0.1, 0, 3);
  CubeId<1> id{2, {1}};
  SkeletonSampling a{2, 2.0, 0.0}, b{4, 2.0, 0.0};
  auto ga = skeleton_grid(p, id.k, a);
  EXPECT_GE(ga.horizontal.front(), 2 * 19);
  EXPECT_LE(ga.horizontal.back(), ga.horizontal.front());
  for (std::size_t i = 1; i < ga.heights.size(); ++i) EXPECT_LE(ga.heights[i] / ga.heights[i - 1], 1.5 + 1e-12);
  auto sa = skeleton_samples(p, id, a), sb = skeleton_samples(p, id, b);
  std::set<std::vector<double>> A, B;
  sa.for_each([&](const Space<1>& x) { A.insert({x[0], x[1]}); });
  sb.for_each([&](const Space<1>& x) { B.insert({x[0], x[1]}); });
  EXPECT_EQ(A.size(), sa.size());
  EXPECT_TRUE(std::includes(B.begin(), B.end(), A.begin(), A.end()));
  auto box = cube_geometry(p, id);
  sb.for_each([&](const Space<1>& x) { EXPECT_TRUE(on_boundary<1>(box, x)); });
}
