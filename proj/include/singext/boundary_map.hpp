#pragma once

#include <concepts>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "manifold.hpp"

namespace singext {

enum class Interpolation { embedded_linear, geodesic };

inline Interpolation interpolation_from_name(const std::string& s) {
  if (s == "embedded_linear" || s == "embedded-linear") return Interpolation::embedded_linear;
  if (s == "geodesic") return Interpolation::geodesic;
  throw ConfigError("unknown interpolation '" + s + "' (expected embedded_linear or geodesic)");
}

inline std::string interpolation_name(Interpolation i) {
  return i == Interpolation::geodesic ? "geodesic" : "embedded_linear";
}

// Anything that can play the role of the boundary map u: constant (far_value) outside
// window(), with kinks only on the lines listed by breaks(axis).
template <class F, int M>
concept BoundaryField = requires(const F& f, const Domain<M>& y, int axis) {
  { f(y) } -> std::convertible_to<Ambient>;
  { f.far_value() } -> std::convertible_to<Ambient>;
  { f.window() } -> std::convertible_to<Box<M>>;
  { f.breaks(axis) } -> std::convertible_to<const std::vector<double>&>;
  { f.target() } -> std::convertible_to<const TargetManifold&>;
};

inline std::vector<double> uniform_breaks(double lo, double hi, int cells) {
  std::vector<double> b(cells + 1);
  for (int i = 0; i <= cells; ++i) b[i] = lo + (hi - lo) * i / cells;
  b.back() = hi;
  return b;
}

// Sampled map on [0,1]^M, n samples per axis, constant outside.
template <int M>
class BoundaryMap {
  static_assert(M == 1 || M == 2);

 public:
  static constexpr double kBoundaryTolerance = 1e-9;

  BoundaryMap(TargetManifold target, int n, std::vector<Ambient> samples,
              Interpolation interpolation = Interpolation::embedded_linear)
      : target_(target), n_(n), samples_(std::move(samples)), interpolation_(interpolation) {
    if (n < 2) throw ConfigError("boundary map needs at least 2 samples per axis");
    std::size_t expected = M == 1 ? std::size_t(n) : std::size_t(n) * std::size_t(n);
    if (samples_.size() != expected) throw ConfigError("boundary map: sample count does not match n^m");
    if (interpolation == Interpolation::geodesic && M != 1)
      throw ConfigError("geodesic interpolation is only available for m = 1");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (!target_.contains(samples_[i]))
        throw InvalidPoint("boundary map sample " + std::to_string(i) + " is not on the target");
    }
    far_ = samples_[0];
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (on_window_boundary(i) && TargetManifold::distance_unchecked(samples_[i], far_) > kBoundaryTolerance)
        throw ConfigError("boundary map sample " + std::to_string(i) +
                          " on the window boundary differs from the far value");
    }
    breaks_ = uniform_breaks(0.0, 1.0, n - 1);
  }

  const TargetManifold& target() const { return target_; }
  int n() const { return n_; }
  double spacing() const { return 1.0 / (n_ - 1); }
  Interpolation interpolation() const { return interpolation_; }
  const std::vector<Ambient>& samples() const { return samples_; }
  const Ambient& far_value() const { return far_; }
  Box<M> window() const { return unit_window<M>(); }
  const std::vector<double>& breaks(int) const { return breaks_; }

  const Ambient& sample(int i, int j = 0) const { return samples_[std::size_t(i) + std::size_t(n_) * j]; }

  Ambient operator()(const Domain<M>& y) const {
    for (int a = 0; a < M; ++a)
      if (!(y[a] >= 0.0 && y[a] <= 1.0)) return far_;
    double scale = n_ - 1;
    std::array<int, M> c;
    std::array<double, M> s;
    for (int a = 0; a < M; ++a) {
      double g = y[a] * scale;
      int ci = std::min(static_cast<int>(g), n_ - 2);
      c[a] = ci;
      s[a] = g - ci;
    }
    if constexpr (M == 1) {
      const Ambient& a = samples_[c[0]];
      const Ambient& b = samples_[c[0] + 1];
      if (s[0] == 0.0) return a;
      if (s[0] == 1.0) return b;
      if (interpolation_ == Interpolation::geodesic) return slerp(a, b, s[0], c[0]);
      return normalize_or_throw((1.0 - s[0]) * a + s[0] * b, c);
    } else {
      const Ambient& a00 = sample(c[0], c[1]);
      const Ambient& a10 = sample(c[0] + 1, c[1]);
      const Ambient& a01 = sample(c[0], c[1] + 1);
      const Ambient& a11 = sample(c[0] + 1, c[1] + 1);
      Ambient v = (1 - s[0]) * (1 - s[1]) * a00 + s[0] * (1 - s[1]) * a10 + (1 - s[0]) * s[1] * a01 + s[0] * s[1] * a11;
      return normalize_or_throw(v, c);
    }
  }

  // Same map with every sample transformed; used for isometry and reflection checks.
  template <class Fn>
  BoundaryMap transformed(Fn&& fn) const {
    std::vector<Ambient> s(samples_.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = fn(samples_[i]);
    return BoundaryMap(target_, n_, std::move(s), interpolation_);
  }

  BoundaryMap reflected() const {
    std::vector<Ambient> s(samples_.size());
    if constexpr (M == 1) {
      for (int i = 0; i < n_; ++i) s[i] = samples_[n_ - 1 - i];
    } else {
      for (int j = 0; j < n_; ++j)
        for (int i = 0; i < n_; ++i) s[i + std::size_t(n_) * j] = sample(n_ - 1 - i, j);
    }
    return BoundaryMap(target_, n_, std::move(s), interpolation_);
  }

 private:
  bool on_window_boundary(std::size_t idx) const {
    int i = static_cast<int>(idx % n_);
    int j = static_cast<int>(idx / n_);
    bool b = i == 0 || i == n_ - 1;
    if constexpr (M == 2) b = b || j == 0 || j == n_ - 1;
    return b;
  }

  static std::string cell_name(const std::array<int, M>& c) {
    std::string s = "cell (";
    for (int a = 0; a < M; ++a) s += (a ? "," : "") + std::to_string(c[a]);
    return s + ")";
  }

  static Ambient normalize_or_throw(const Ambient& v, const std::array<int, M>& c) {
    double r = v.norm();
    if (!(r > 1e-14)) throw InterpolationDegeneracy("interpolation degenerates to the origin in " + cell_name(c));
    return v / r;
  }

  static Ambient slerp(const Ambient& a, const Ambient& b, double s, int cell) {
    double w = TargetManifold::distance_unchecked(a, b);
    if (w < 1e-15) return a;
    if (w > kPi - 1e-12)
      throw InterpolationDegeneracy("antipodal samples in cell (" + std::to_string(cell) + ")");
    double sw = std::sin(w);
    Ambient r = (std::sin((1 - s) * w) / sw) * a + (std::sin(s * w) / sw) * b;
    return r / r.norm();
  }

  TargetManifold target_;
  int n_;
  std::vector<Ambient> samples_;
  Interpolation interpolation_;
  Ambient far_;
  std::vector<double> breaks_;
};

// Closed-form boundary map; used by tests and by the conformal pullback.
template <int M>
class FunctionField {
 public:
  using Fn = std::function<Ambient(const Domain<M>&)>;

  FunctionField(TargetManifold target, Fn fn, Ambient far, Box<M> window, int panels_per_axis = 1)
      : target_(target), fn_(std::move(fn)), far_(far), window_(window) {
    for (int a = 0; a < M; ++a) breaks_[a] = uniform_breaks(window.lo[a], window.hi[a], panels_per_axis);
  }

  // Replace the default panelization of one axis (e.g. to mark a jump).
  void set_breaks(int axis, std::vector<double> b) { breaks_[axis] = std::move(b); }

  Ambient operator()(const Domain<M>& y) const {
    if (!window_.contains(y)) return far_;
    return fn_(y);
  }
  const Ambient& far_value() const { return far_; }
  Box<M> window() const { return window_; }
  const std::vector<double>& breaks(int axis) const { return breaks_[axis]; }
  const TargetManifold& target() const { return target_; }

 private:
  TargetManifold target_;
  Fn fn_;
  Ambient far_;
  Box<M> window_;
  std::array<std::vector<double>, M> breaks_;
};

// ---------------------------------------------------------------------------
// Double-integral functionals on a midpoint pair grid.

enum class TailMode { drop, analytic };

inline TailMode tail_mode_from_name(const std::string& s) {
  if (s == "drop") return TailMode::drop;
  if (s == "analytic" || s == "analytic-constant-tail") return TailMode::analytic;
  throw ConfigError("unknown tail_mode '" + s + "'");
}

struct QuadratureSpec {
  int pair_resolution = 256;  // cells per axis of the pair grid
  double window_margin = 0.25;
  TailMode tail_mode = TailMode::drop;

  void validate() const {
    if (pair_resolution < 2) throw ConfigError("pair_resolution must be >= 2");
    if (!(window_margin >= 0.0)) throw ConfigError("window_margin must be >= 0");
  }
};

namespace detail {

// Integral of |y - z|^{-2M} over z outside the box.
template <int M>
double outside_kernel_mass(const Domain<M>& y, const Box<M>& box) {
  if constexpr (M == 1) {
    return 1.0 / (y[0] - box.lo[0]) + 1.0 / (box.hi[0] - y[0]);
  } else {
    // Polar form: integral of d(theta) / (2 rho(theta)^2); per edge at normal distance d,
    // rho = d / cos(alpha) and the alpha-integral of cos^2 is closed form.
    auto edge = [](double d, double t0, double t1) {
      double a0 = std::atan(t0 / d), a1 = std::atan(t1 / d);
      auto prim = [](double a) { return 0.5 * a + 0.25 * std::sin(2 * a); };
      return (prim(a1) - prim(a0)) / (2 * d * d);
    };
    double x = y[0], z = y[1];
    double sum = 0.0;
    sum += edge(box.hi[0] - x, box.lo[1] - z, box.hi[1] - z);
    sum += edge(x - box.lo[0], box.lo[1] - z, box.hi[1] - z);
    sum += edge(box.hi[1] - z, box.lo[0] - x, box.hi[0] - x);
    sum += edge(z - box.lo[1], box.lo[0] - x, box.hi[0] - x);
    return sum;
  }
}

}  // namespace detail

// Cell midpoints of the pair grid over the window widened by the margin, with u sampled once.
template <int M>
struct PairGrid {
  Box<M> box;
  Domain<M> cell;
  double cell_volume = 0.0;
  std::vector<Domain<M>> centers;
  std::vector<Ambient> values;
  std::vector<char> is_far;  // cell center outside the window: value is exactly far_value
  Ambient far;

  template <class Field>
    requires BoundaryField<Field, M>
  PairGrid(const Field& u, const QuadratureSpec& q) {
    q.validate();
    Box<M> w = u.window();
    box.lo = w.lo.array() - q.window_margin;
    box.hi = w.hi.array() + q.window_margin;
    int P = q.pair_resolution;
    cell = (box.hi - box.lo) / P;
    cell_volume = cell.prod();
    far = u.far_value();
    std::size_t total = M == 1 ? std::size_t(P) : std::size_t(P) * P;
    centers.resize(total);
    values.resize(total);
    is_far.resize(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
      Domain<M> c;
      std::size_t r = idx;
      for (int a = 0; a < M; ++a) {
        c[a] = box.lo[a] + (double(r % P) + 0.5) * cell[a];
        r /= P;
      }
      centers[idx] = c;
      is_far[idx] = !w.contains(c);
      values[idx] = is_far[idx] ? far : Ambient(u(c));
    }
  }
};

// Visits every ordered-pair contribution fn(distance, kernel_weight) of the midpoint rule:
// off-diagonal cell pairs (each unordered pair once, weight already doubled) and, with the
// analytic tail, each cell against the exterior of the grid box (weight also doubled).
template <int M, class Fn>
void for_each_pair_term(const PairGrid<M>& g, const QuadratureSpec& q, Fn&& fn) {
  std::size_t N = g.centers.size();
  double vv = g.cell_volume * g.cell_volume;
  for (std::size_t a = 0; a < N; ++a) {
    for (std::size_t b = a + 1; b < N; ++b) {
      if (g.is_far[a] && g.is_far[b]) continue;
      double d = TargetManifold::distance_unchecked(g.values[a], g.values[b]);
      double r2 = (g.centers[a] - g.centers[b]).squaredNorm();
      double k = M == 1 ? 1.0 / r2 : 1.0 / (r2 * r2);
      fn(d, 2.0 * k * vv);
    }
  }
  if (q.tail_mode == TailMode::analytic) {
    for (std::size_t a = 0; a < N; ++a) {
      if (g.is_far[a]) continue;
      double d = TargetManifold::distance_unchecked(g.values[a], g.far);
      fn(d, 2.0 * detail::outside_kernel_mass<M>(g.centers[a], g.box) * g.cell_volume);
    }
  }
}

// Sum of term(d) * weight over the pair grid. Rows are summed with compensation and then
// merged in row order, so the result does not depend on how rows are scheduled.
template <int M, class Term>
double pair_integral(const PairGrid<M>& g, const QuadratureSpec& q, Term&& term) {
  std::size_t N = g.centers.size();
  double vv = g.cell_volume * g.cell_volume;
  std::vector<double> rows(N, 0.0);
  parallel_for(N, [&](std::size_t a) {
    CompensatedSum s;
    const Domain<M>& ca = g.centers[a];
    const Ambient& ua = g.values[a];
    bool fa = g.is_far[a];
    for (std::size_t b = a + 1; b < N; ++b) {
      if (fa && g.is_far[b]) continue;
      double d = TargetManifold::distance_unchecked(ua, g.values[b]);
      double t = term(d);
      if (t == 0.0) continue;
      double r2 = (ca - g.centers[b]).squaredNorm();
      double k = M == 1 ? 1.0 / r2 : 1.0 / (r2 * r2);
      s.add(t * (2.0 * k * vv));
    }
    if (q.tail_mode == TailMode::analytic && !fa) {
      double d = TargetManifold::distance_unchecked(ua, g.far);
      double t = term(d);
      if (t != 0.0) s.add(t * (2.0 * detail::outside_kernel_mass<M>(ca, g.box) * g.cell_volume));
    }
    rows[a] = s.value();
  });
  CompensatedSum total;
  for (double r : rows) total.add(r);
  return total.value();
}

template <int M>
double gagliardo_energy(const PairGrid<M>& g, double p, const QuadratureSpec& q) {
  if (!(p >= 1.0)) throw ConfigError("exponent p must be >= 1");
  return pair_integral<M>(g, q, [p](double d) { return d > 0.0 ? power(d, p) : 0.0; });
}

template <int M>
double truncated_energy(const PairGrid<M>& g, double delta, double p, const QuadratureSpec& q) {
  if (!(p >= 1.0)) throw ConfigError("exponent p must be >= 1");
  if (!(delta >= 0.0)) throw ConfigError("truncation must be >= 0");
  return pair_integral<M>(g, q, [p, delta](double d) {
    double e = d - delta;
    return e > 0.0 ? power(e, p) : 0.0;
  });
}

template <int M>
double gap_potential(const PairGrid<M>& g, double delta, const QuadratureSpec& q) {
  if (!(delta > 0.0)) throw ConfigError("gap threshold must be > 0");
  return pair_integral<M>(g, q, [delta](double d) { return d >= delta ? 1.0 : 0.0; });
}

template <int M, class Field>
  requires BoundaryField<Field, M>
double gagliardo_energy(const Field& u, double p, const QuadratureSpec& q) {
  return gagliardo_energy<M>(PairGrid<M>(u, q), p, q);
}

template <int M, class Field>
  requires BoundaryField<Field, M>
double truncated_energy(const Field& u, double delta, double p, const QuadratureSpec& q) {
  return truncated_energy<M>(PairGrid<M>(u, q), delta, p, q);
}

template <int M, class Field>
  requires BoundaryField<Field, M>
double gap_potential(const Field& u, double delta, const QuadratureSpec& q) {
  return gap_potential<M>(PairGrid<M>(u, q), delta, q);
}

// ---------------------------------------------------------------------------
// Winding numbers of circle-valued data.

// Wrapped angle from a to b in the plane of the circle target.
inline double angle_increment(const Ambient& a, const Ambient& b) {
  double cross = a[0] * b[1] - a[1] * b[0];
  double dot = a[0] * b[0] + a[1] * b[1];
  return std::atan2(cross, dot);
}

// Degree of a closed polygonal loop of circle values (the last point connects to the first).
inline double loop_winding_real(const std::vector<Ambient>& loop) {
  double total = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Ambient& a = loop[i];
    const Ambient& b = loop[(i + 1) % loop.size()];
    double da = std::hypot(a[0], a[1]), db = std::hypot(b[0], b[1]);
    if (da == 0.0 || db == 0.0) throw AmbiguousLift("loop passes through the origin");
    double cosang = (a[0] * b[0] + a[1] * b[1]) / (da * db);
    if (cosang < -1.0 + 1e-12) throw AmbiguousLift("consecutive loop values are antipodal at index " + std::to_string(i));
    total += angle_increment(a, b);
  }
  return total / (2 * kPi);
}

inline int loop_winding(const std::vector<Ambient>& loop) {
  double w = loop_winding_real(loop);
  long r = std::lround(w);
  if (std::abs(w - double(r)) > 1e-9) throw AmbiguousLift("winding sum is not an integer");
  return static_cast<int>(r);
}

inline int winding_number(const BoundaryMap<1>& u) {
  if (u.target().kind() != TargetKind::circle) throw ConfigError("winding number needs the circle target");
  std::vector<Ambient> loop;
  loop.reserve(u.n() + 1);
  loop.push_back(u.far_value());
  for (const auto& s : u.samples()) loop.push_back(s);
  return loop_winding(loop);
}

// ---------------------------------------------------------------------------
// CSV persistence: header `i[,j],x0..x{nu-1}`, one row per sample.

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": cannot parse number '" + s + "'");
  }
}

inline long parse_long(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": cannot parse integer '" + s + "'");
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Dimension m declared by a boundary-map CSV header (number of index columns).
inline int csv_map_dimension(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open boundary map file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cols = detail::split_csv(line);
    int m = 0;
    while (m < int(cols.size()) && (cols[m] == "i" || cols[m] == "j")) ++m;
    if (m < 1 || m > 2) throw ParseError(path + ":1: header must start with i or i,j");
    return m;
  }
  throw ParseError(path + ": empty file");
}

template <int M>
BoundaryMap<M> read_boundary_map_csv(const std::string& path, const TargetManifold& target,
                                     Interpolation interpolation = Interpolation::embedded_linear) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open boundary map file: " + path);
  std::string line;
  int lineno = 0;
  bool header = false;
  int nu = target.ambient_dim();
  std::map<std::pair<long, long>, Ambient> rows;
  long max_index = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::string where = path + ":" + std::to_string(lineno);
    auto cols = detail::split_csv(line);
    if (!header) {
      std::vector<std::string> expect = {"i"};
      if (M == 2) expect.push_back("j");
      for (int c = 0; c < nu; ++c) expect.push_back("x" + std::to_string(c));
      if (cols != expect) {
        std::string e;
        for (auto& s : expect) e += (e.empty() ? "" : ",") + s;
        throw ParseError(where + ": header must be '" + e + "'");
      }
      header = true;
      continue;
    }
    if (int(cols.size()) != M + nu) throw ParseError(where + ": expected " + std::to_string(M + nu) + " columns");
    long i = detail::parse_long(cols[0], where);
    long j = M == 2 ? detail::parse_long(cols[1], where) : 0;
    if (i < 0 || j < 0) throw ParseError(where + ": negative sample index");
    Ambient x = Ambient::Zero();
    for (int c = 0; c < nu; ++c) x[c] = detail::parse_double(cols[M + c], where);
    if (!rows.emplace(std::make_pair(i, j), x).second) throw ParseError(where + ": duplicate sample index");
    max_index = std::max({max_index, i, j});
  }
  if (!header) throw ParseError(path + ": missing header row");
  long n = max_index + 1;
  std::size_t expected = M == 1 ? std::size_t(n) : std::size_t(n * n);
  if (rows.size() != expected) throw ParseError(path + ": incomplete sample grid");
  std::vector<Ambient> samples(expected);
  for (auto& [key, x] : rows) samples[std::size_t(key.first) + std::size_t(n) * key.second] = x;
  return BoundaryMap<M>(target, static_cast<int>(n), std::move(samples), interpolation);
}

template <int M>
void write_boundary_map_csv(const std::string& path, const BoundaryMap<M>& u) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write boundary map file: " + path);
  int nu = u.target().ambient_dim();
  out << "i";
  if (M == 2) out << ",j";
  for (int c = 0; c < nu; ++c) out << ",x" << c;
  out << "\n";
  int n = u.n();
  int nj = M == 2 ? n : 1;
  for (int j = 0; j < nj; ++j) {
    for (int i = 0; i < n; ++i) {
      out << i;
      if (M == 2) out << "," << j;
      const Ambient& x = u.sample(i, j);
      for (int c = 0; c < nu; ++c) out << "," << detail::format_double(x[c]);
      out << "\n";
    }
  }
}

}  // namespace singext
