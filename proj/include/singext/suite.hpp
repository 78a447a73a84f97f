#pragma once

#include <functional>
#include <string>
#include <vector>

#include "boundary_map.hpp"

namespace singext::suite {

inline double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

inline Ambient circle_point(double angle) { return Ambient(std::cos(angle), std::sin(angle), 0.0); }

// Circle-valued map on [0,1] with the given angle profile (angle(0) = 0, angle(1) in 2 pi Z).
inline BoundaryMap<1> circle_map(int n, const std::function<double(double)>& angle,
                                 Interpolation interp = Interpolation::embedded_linear, double tube = 0.5) {
  std::vector<Ambient> s(n);
  for (int i = 0; i < n; ++i) s[i] = circle_point(angle(double(i) / (n - 1)));
  s.front() = circle_point(0.0);
  s.back() = circle_point(0.0);
  return BoundaryMap<1>(TargetManifold(TargetKind::circle, tube), n, std::move(s), interp);
}

inline BoundaryMap<1> constant_circle(int n, double tube = 0.5) {
  return circle_map(n, [](double) { return 0.0; }, Interpolation::embedded_linear, tube);
}

// Winds d times with a smoothstep profile localized on [a, b].
inline BoundaryMap<1> degree_map(int n, int d, double a = 0.0, double b = 1.0,
                                 Interpolation interp = Interpolation::embedded_linear, double tube = 0.5) {
  return circle_map(
      n, [=](double y) { return 2.0 * kPi * d * smoothstep((y - a) / (b - a)); }, interp, tube);
}

// Two separated degree-one windings.
inline BoundaryMap<1> double_vortex(int n, double tube = 0.5) {
  return circle_map(
      n, [](double y) { return 2.0 * kPi * (smoothstep((y - 0.05) / 0.4) + smoothstep((y - 0.55) / 0.4)); },
      Interpolation::embedded_linear, tube);
}

// Degree-zero excursion of the given angular amplitude.
inline BoundaryMap<1> bump_map(int n, double amplitude, double tube = 0.5) {
  return circle_map(
      n, [=](double y) { return amplitude * std::pow(std::sin(kPi * y), 2); }, Interpolation::embedded_linear, tube);
}

// Sphere-valued map on [0,1]^2: polar angle profile theta(r) around the window center,
// north pole outside radius r0.
inline BoundaryMap<2> sphere_map(int n, const std::function<double(double)>& polar, double r0, double tube = 0.5) {
  std::vector<Ambient> s(std::size_t(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      double x = double(i) / (n - 1) - 0.5, y = double(j) / (n - 1) - 0.5;
      double r = std::hypot(x, y);
      double th = r >= r0 ? 0.0 : polar(r / r0);
      double ph = std::atan2(y, x);
      s[i + std::size_t(n) * j] = Ambient(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
    }
  }
  return BoundaryMap<2>(TargetManifold(TargetKind::sphere, tube), n, std::move(s));
}

inline BoundaryMap<2> constant_sphere(int n, double tube = 0.5) {
  return sphere_map(n, [](double) { return 0.0; }, 0.4, tube);
}

// Covers the sphere once (a smoothed inverse stereographic bubble).
inline BoundaryMap<2> sphere_bubble(int n, double r0 = 0.4, double tube = 0.5) {
  return sphere_map(n, [](double s) { return kPi * (1.0 - smoothstep(s)); }, r0, tube);
}

inline BoundaryMap<2> sphere_bump(int n, double amplitude, double r0 = 0.4, double tube = 0.5) {
  return sphere_map(n, [=](double s) { return amplitude * (1.0 - smoothstep(s)); }, r0, tube);
}

struct NamedMap1 {
  std::string name;
  BoundaryMap<1> map;
};

// Default calibration suite for m = 1.
inline std::vector<NamedMap1> default_suite(int n, double tube = 0.5) {
  std::vector<NamedMap1> out;
  out.push_back({"constant", constant_circle(n, tube)});
  out.push_back({"degree1", degree_map(n, 1, 0.0, 1.0, Interpolation::embedded_linear, tube)});
  out.push_back({"degree1_narrow", degree_map(n, 1, 0.3, 0.7, Interpolation::embedded_linear, tube)});
  out.push_back({"bump", bump_map(n, 1.0, tube)});
  out.push_back({"double_vortex", double_vortex(n, tube)});
  return out;
}

}  // namespace singext::suite
