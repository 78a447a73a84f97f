#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace singext {

inline constexpr double kPi = std::numbers::pi;

// Ambient points are always 3-vectors; circle targets live in the z = 0 plane.
using Ambient = Eigen::Vector3d;

template <int M>
using Domain = Eigen::Matrix<double, M, 1>;

// Point of the closed half-space: first M coordinates horizontal, last is height.
template <int M>
using Space = Eigen::Matrix<double, M + 1, 1>;

// Columns are partial derivatives along the M + 1 half-space coordinates.
template <int M>
using Jacobian = Eigen::Matrix<double, 3, M + 1>;

template <int D>
struct Box {
  Eigen::Matrix<double, D, 1> lo;
  Eigen::Matrix<double, D, 1> hi;

  bool contains(const Eigen::Matrix<double, D, 1>& x, double tol = 0.0) const {
    for (int i = 0; i < D; ++i)
      if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
  }
  Eigen::Matrix<double, D, 1> center() const { return 0.5 * (lo + hi); }
  double volume() const { return (hi - lo).prod(); }
};

template <int M>
Box<M> unit_window() {
  return {Domain<M>::Zero(), Domain<M>::Ones()};
}

template <int M>
struct HalfSpacePoint {
  Domain<M> x_prime;
  double height = 1.0;

  HalfSpacePoint() : x_prime(Domain<M>::Zero()) {}
  HalfSpacePoint(const Domain<M>& xp, double h) : x_prime(xp), height(h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw InvalidPoint("half-space point needs positive height");
  }
  explicit HalfSpacePoint(const Space<M>& x) : HalfSpacePoint(Domain<M>(x.template head<M>()), x[M]) {}

  Space<M> full() const {
    Space<M> x;
    x.template head<M>() = x_prime;
    x[M] = height;
    return x;
  }
};

template <int M>
Domain<M> domain_point(std::initializer_list<double> c) {
  Domain<M> d;
  int i = 0;
  for (double v : c) d[i++] = v;
  return d;
}

// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// x^p with an exact fast path for small integer exponents.
inline double power(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  if (p == 3.0) return x * x * x;
  if (p == 4.0) {
    double s = x * x;
    return s * s;
  }
  return std::pow(x, p);
}

struct GaussRule {
  std::vector<double> nodes;    // on [0, 1]
  std::vector<double> weights;  // sum to 1
};

// Gauss-Legendre rule mapped to [0, 1].
inline GaussRule gauss_legendre(int order) {
  GaussRule r;
  switch (order) {
    case 1:
      r.nodes = {0.0};
      r.weights = {2.0};
      break;
    case 2: {
      double a = 1.0 / std::sqrt(3.0);
      r.nodes = {-a, a};
      r.weights = {1.0, 1.0};
      break;
    }
    case 3: {
      double a = std::sqrt(0.6);
      r.nodes = {-a, 0.0, a};
      r.weights = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      break;
    }
    case 4: {
      double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(1.2));
      double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(1.2));
      double wa = (18.0 + std::sqrt(30.0)) / 36.0;
      double wb = (18.0 - std::sqrt(30.0)) / 36.0;
      r.nodes = {-b, -a, a, b};
      r.weights = {wb, wa, wa, wb};
      break;
    }
    case 5: {
      double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      double w0 = 128.0 / 225.0;
      double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
      double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
      r.nodes = {-b, -a, 0.0, a, b};
      r.weights = {wb, wa, w0, wa, wb};
      break;
    }
    default:
      throw ResolutionError("gauss_legendre: supported orders are 1..5");
  }
  for (auto& x : r.nodes) x = 0.5 * (x + 1.0);
  for (auto& w : r.weights) w *= 0.5;
  return r;
}

// Counter-based generator: every (seed, stream, index) triple maps to a fixed value,
// so Monte-Carlo draws do not depend on scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t bits(std::uint64_t index) const { return splitmix64(key_ ^ splitmix64(index)); }
  double uniform(std::uint64_t index) const { return static_cast<double>(bits(index) >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
};

// Sequential stream on top of CounterRng.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}
  double uniform() { return rng_.uniform(next_++); }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

inline unsigned worker_count() {
  static const unsigned n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

// Runs fn(i) for i in [0, n). Each index writes only its own slot, so results never
// depend on the number of workers. If any call throws, the exception of the lowest failing
// index is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> failed_at(workers, std::numeric_limits<std::size_t>::max());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
          failed_at[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  auto first = std::min_element(failed_at.begin(), failed_at.end());
  if (*first != std::numeric_limits<std::size_t>::max()) std::rethrow_exception(errors[first - failed_at.begin()]);
}

// Spectral norm of a 3 x D matrix.
template <int D>
double spectral_norm(const Eigen::Matrix<double, 3, D>& a) {
  Eigen::Matrix<double, D, D> g = a.transpose() * a;
  if constexpr (D == 1) {
    return std::sqrt(g(0, 0));
  } else if constexpr (D == 2) {
    double p = 0.5 * (g(0, 0) + g(1, 1));
    double q = 0.5 * (g(0, 0) - g(1, 1));
    return std::sqrt(std::max(0.0, p + std::sqrt(q * q + g(0, 1) * g(0, 1))));
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, D, D>> es(g, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
}

// Stable FNV-1a, used for provenance hashes written into output files.
inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace singext
