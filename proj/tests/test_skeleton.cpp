#include <gtest/gtest.h>

#include "singext/skeleton.hpp"
#include "singext/suite.hpp"

using namespace singext;

namespace {

const Ambient kA(1, 0, 0);
const Ambient kB(std::cos(2.0), std::sin(2.0), 0);

FunctionField<1> two_valued() {
  FunctionField<1> f(
      TargetManifold(), [](const Domain<1>& y) { return y[0] < 0.5 ? kA : kB; }, kA,
      Box<1>{domain_point<1>({-10.0}), domain_point<1>({10.0})});
  f.set_breaks(0, {-10.0, 0.5, 10.0});
  return f;
}

// Independent pair average over the centered stencil x' + s(k + 1/2), |s(k + 1/2)| <= t.
template <class Field>
double brute_force_mo(const Field& u, double xp, double t, int P, double delta, double p) {
  double s = std::min(t, 1.0) / P;
  std::vector<Ambient> v;
  for (long k = -10 * P; k <= 10 * P; ++k) {
    double off = s * (k + 0.5);
    if (std::abs(off) <= t) v.push_back(u(domain_point<1>({xp + off})));
  }
  double sum = 0.0;
  for (const auto& z : v)
    for (const auto& y : v) sum += truncated_power(TargetManifold::distance_unchecked(y, z), delta, p);
  return sum / (double(v.size()) * v.size());
}

constexpr int kN = 1024;

double gap_of(const BoundaryMap<1>& u) {
  QuadratureSpec q{512, 0.25, TailMode::drop};
  PairGrid<1> g(u, q);
  return gap_potential<1>(g, 0.125, q);
}

SelectionOptions<1> selection_options() {
  SelectionOptions<1> o;
  o.band.min_edge = 2.0 / (kN - 1);
  o.band.top_height = 8.0;
  o.sampling.min_spacing = 1.0 / (kN - 1);
  return o;
}

FunctionalOptions<1> functional_options(int draws) {
  FunctionalOptions<1> o;
  o.draws = draws;
  o.seed = 7;
  o.band.min_edge = 1.0 / 32;
  o.band.top_height = 4.0;
  return o;
}

}  // namespace

TEST(SkeletonSupMo, TrivialCases) {
  CubeFamilyParams<1> p{4.0, 1.5, 0, 3};
  CubeId<1> id{2, {1}};
  auto c = suite::constant_circle(64);
  EXPECT_EQ(skeleton_sup_mo<1>(c, p, id, 0.0, 2.0, 4), 0.0);
  auto u = suite::degree_map(64, 2);
  EXPECT_EQ(skeleton_sup_mo<1>(u, p, id, kPi, 2.0, 4), 0.0);
}

TEST(SkeletonSupMo, MatchesBruteForceOnTwoValuedMap) {
  auto u = two_valued();
  CubeFamilyParams<1> p{4.0, 1.0, 0, 2};
  p.translations = {domain_point<1>({0.3})};
  CubeId<1> id = locate(p, HalfSpacePoint<1>(domain_point<1>({0.5}), 0.1));
  const int P = 16;
  double brute = 0.0;
  for (const auto& x : sample_boundary(p, id, 4))
    brute = std::max(brute, brute_force_mo(u, x.x_prime[0], x.height, P, 0.5, 2.0));
  double got = skeleton_sup_mo<1>(u, p, id, 0.5, 2.0, 4, StencilSpec{P});
  EXPECT_GT(got, 0.0);
  EXPECT_NEAR(got, brute, 1e-12 * brute);
}

TEST(SkeletonSupMo, NestedSamplesAreMonotoneInDensity) {
  auto u = suite::degree_map(128, 1);
  CubeFamilyParams<1> p{4.0, 1.3, 0, 3};
  CubeId<1> id = locate(p, HalfSpacePoint<1>(domain_point<1>({0.45}), 0.05));
  double prev = 0.0;
  for (int d : {2, 4, 8, 16}) {
    double v = skeleton_sup_mo<1>(u, p, id, 0.1, 2.0, d);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(ChooseLambda, FloorArithmeticAndCap) {
  CalibrationConstants c;
  c.B_lambda = 0.5;
  EXPECT_EQ(choose_lambda(0.0, c).lambda, 2.0);
  EXPECT_FALSE(choose_lambda(0.0, c).capped);
  EXPECT_NEAR(choose_lambda(std::log(10.0) / 0.5, c).lambda, 10.0, 1e-12);
  auto big = choose_lambda(1e6, c);
  EXPECT_TRUE(big.capped);
  EXPECT_EQ(big.lambda, c.lambda_max);
  EXPECT_THROW(choose_lambda(-1.0, c), ConfigError);
  EXPECT_EQ(choose_lambda(gap_of(suite::constant_circle(kN)), c).lambda, 2.0);
}

TEST(SelectTauH, ConstantMapHasZeroBudget) {
  auto u = suite::constant_circle(kN);
  CalibrationConstants c;
  auto s = select_tau_h<1>(u, 2.0, 0.5, c, selection_options());
  EXPECT_TRUE(s.distance_ok);
  EXPECT_EQ(s.oscillation_budget, 0.0);
  EXPECT_EQ(s.tau_candidates_tried, 1);
  auto cl = classify_cubes(s, c, 0.5);
  EXPECT_TRUE(cl.bad.empty());
  EXPECT_FALSE(cl.good.empty());
}

TEST(SelectTauH, ForcedSmallRatioAndTinyTubeFails) {
  auto u = suite::degree_map(kN, 1);
  CalibrationConstants c;
  EXPECT_THROW(select_tau_h<1>(u, 2.0, 1e-3, c, selection_options()), SelectionFailure);
}

class DegreeOneSelection : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    u_ = new BoundaryMap<1>(suite::degree_map(kN, 1));
    consts_.B_lambda = 0.03;
    lambda_ = choose_lambda(gap_of(*u_), consts_).lambda;
    sel_ = new SkeletonSelection<1>(select_tau_h<1>(*u_, lambda_, 0.5, consts_, selection_options()));
  }
  static void TearDownTestSuite() {
    delete sel_;
    delete u_;
  }
  static BoundaryMap<1>* u_;
  static SkeletonSelection<1>* sel_;
  static CalibrationConstants consts_;
  static double lambda_;
};

BoundaryMap<1>* DegreeOneSelection::u_ = nullptr;
SkeletonSelection<1>* DegreeOneSelection::sel_ = nullptr;
CalibrationConstants DegreeOneSelection::consts_;
double DegreeOneSelection::lambda_ = 0.0;

TEST_F(DegreeOneSelection, SelectionIsValid) {
  EXPECT_GT(lambda_, 2.0);
  EXPECT_TRUE(sel_->distance_ok);
  EXPECT_LE(sel_->max_distance, 0.25);
  EXPECT_LE(sel_->tau_candidates_tried, 200);
  EXPECT_GT(sel_->oscillation_budget, 0.0);
  sel_->params.validate();
  EXPECT_EQ(long(sel_->params.translations.size()), sel_->params.k_max - sel_->params.k_min + 1);
}

TEST_F(DegreeOneSelection, VortexForcesBadCubes) {
  auto cl = classify_cubes(*sel_, consts_, 0.5);
  EXPECT_FALSE(cl.bad.empty());
  std::size_t total = 0;
  for (const auto& ev : sel_->scales) total += ev.cubes.size();
  EXPECT_EQ(cl.good.size() + cl.bad.size(), total);
  EXPECT_TRUE(classify_cubes(*sel_, std::numeric_limits<double>::infinity()).bad.empty());
}

TEST_F(DegreeOneSelection, ClassificationIsMonotoneInThreshold) {
  double prev_good = -1.0;
  for (double mu : {1e-8, 1e-5, 1e-3, 1e-1, 10.0}) {
    auto cl = classify_cubes(*sel_, mu);
    auto bigger = classify_cubes(*sel_, mu * 10.0);
    for (const auto& id : cl.good) EXPECT_NE(std::find(bigger.good.begin(), bigger.good.end(), id), bigger.good.end());
    EXPECT_GE(double(cl.good.size()), prev_good);
    prev_good = double(cl.good.size());
  }
}

TEST_F(DegreeOneSelection, GoodBottomSamplesRespectThreshold) {
  auto cl = classify_cubes(*sel_, consts_, 0.5);
  const double bound = std::pow(cl.mu, 1.0 / 2.0);
  std::size_t checked = 0;
  for (const auto& id : cl.good) {
    FaceSamples<1> f = skeleton_samples(sel_->params, id, sel_->sampling);
    for (const auto& x : f.bottom) {
      auto s = gradient_convolution<1>(*u_, HalfSpacePoint<1>(x));
      EXPECT_LE(x[1] * s.gradient_norm, bound * (1 + 1e-12));
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(SkeletonFunctionals, ConstantMapVanishes) {
  auto u = suite::constant_circle(256);
  auto o = functional_options(4);
  FunctionalRequest req{0.1, 2.0, 0.05, true};
  auto r = skeleton_functionals<1>(u, 4.0, req, o);
  EXPECT_EQ(r.longitudinal.estimate, 0.0);
  EXPECT_EQ(r.longitudinal.std_error, 0.0);
  EXPECT_EQ(r.transversal.estimate, 0.0);
  EXPECT_EQ(r.count.estimate, 0.0);
  EXPECT_EQ(r.sobolev.estimate, 0.0);
}

TEST(SkeletonFunctionals, LargeThresholdsVanish) {
  auto u = suite::degree_map(256, 2);
  auto o = functional_options(4);
  EXPECT_EQ(longitudinal_functional<1>(u, 4.0, kPi, 2.0, o).estimate, 0.0);
  EXPECT_EQ(transversal_functional<1>(u, 4.0, 2.0 * kPi, 2.0, o).estimate, 0.0);
  EXPECT_EQ(counting_functional<1>(u, 4.0, 2.01, o).estimate, 0.0);
  EXPECT_THROW(counting_functional<1>(u, 4.0, 0.0, o), ConfigError);
}

TEST(SkeletonFunctionals, CombinedIsSumOnSharedDraws) {
  auto u = suite::degree_map(256, 1);
  auto o = functional_options(6);
  auto r = skeleton_functionals<1>(u, 4.0, FunctionalRequest{0.1, 2.0}, o);
  ASSERT_EQ(r.combined.values.size(), 6u);
  EXPECT_GT(r.longitudinal.estimate, 0.0);
  EXPECT_GT(r.transversal.estimate, 0.0);
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_EQ(r.combined.values[i], r.longitudinal.values[i] + r.transversal.values[i]);
}

TEST(SkeletonFunctionals, CountIsNonincreasingInThreshold) {
  auto u = suite::degree_map(256, 1);
  auto o = functional_options(6);
  double prev = std::numeric_limits<double>::infinity();
  for (double d : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    auto c = counting_functional<1>(u, 4.0, d, o);
    for (double v : c.values) EXPECT_EQ(v, std::floor(v));
    EXPECT_LE(c.estimate, prev);
    prev = c.estimate;
  }
  EXPECT_GT(counting_functional<1>(u, 4.0, 0.05, o).estimate, 0.0);
}

TEST(SkeletonFunctionals, DrawsAreSeedDeterministic) {
  auto u = suite::bump_map(256, 1.0);
  auto o = functional_options(3);
  auto a = longitudinal_functional<1>(u, 4.0, 0.05, 2.0, o);
  auto b = longitudinal_functional<1>(u, 4.0, 0.05, 2.0, o);
  EXPECT_EQ(a.values, b.values);
}
