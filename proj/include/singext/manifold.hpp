#pragma once

#include <string>
#include <string_view>

#include "core.hpp"

namespace singext {

enum class TargetKind { circle, sphere };

struct Retraction {
  Ambient point;
  double distance = 0.0;  // |x - point| = |1 - |x||
  bool flagged = false;   // outside the tube of radius tube_radius
};

// Round unit sphere S^1 (in the z = 0 plane) or S^2.
class TargetManifold {
 public:
  static constexpr double kUnitTolerance = 1e-12;

  explicit TargetManifold(TargetKind kind = TargetKind::circle, double tube_radius = 0.5)
      : kind_(kind), tube_radius_(tube_radius) {
    if (!(tube_radius > 0.0 && tube_radius < 1.0)) throw ConfigError("tube radius must lie in (0, 1)");
  }

  static TargetManifold from_name(std::string_view name, double tube_radius = 0.5) {
    if (name == "s1") return TargetManifold(TargetKind::circle, tube_radius);
    if (name == "s2") return TargetManifold(TargetKind::sphere, tube_radius);
    throw ConfigError("unknown target '" + std::string(name) + "' (expected s1 or s2)");
  }

  TargetKind kind() const { return kind_; }
  std::string name() const { return kind_ == TargetKind::circle ? "s1" : "s2"; }
  int ambient_dim() const { return kind_ == TargetKind::circle ? 2 : 3; }
  int dim() const { return ambient_dim() - 1; }
  double tube_radius() const { return tube_radius_; }
  double diameter() const { return kPi; }

  bool in_ambient_space(const Ambient& x) const { return kind_ == TargetKind::sphere || x[2] == 0.0; }

  bool contains(const Ambient& x, double tol = kUnitTolerance) const {
    return in_ambient_space(x) && std::abs(x.norm() - 1.0) <= tol;
  }

  void check_point(const Ambient& x) const {
    if (!contains(x)) throw InvalidPoint("point is not on the target manifold (|x| = " + std::to_string(x.norm()) + ")");
  }

  double geodesic_distance(const Ambient& a, const Ambient& b) const {
    check_point(a);
    check_point(b);
    return distance_unchecked(a, b);
  }

  // Same value as arccos(a.b) clamped to [0, pi], better conditioned near 0 and pi.
  static double distance_unchecked(const Ambient& a, const Ambient& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
  }

  static double distance_to_manifold(const Ambient& x) { return std::abs(1.0 - x.norm()); }

  Retraction retract(const Ambient& x) const {
    double r = x.norm();
    if (!(r > 0.0)) throw UndefinedRetraction("retraction undefined at the origin");
    Retraction out;
    out.point = x / r;
    out.distance = std::abs(1.0 - r);
    out.flagged = out.distance > tube_radius_;
    return out;
  }

  // Differential of x -> x/|x| at w.
  static Eigen::Matrix3d retraction_jacobian(const Ambient& w) {
    double r = w.norm();
    if (!(r > 0.0)) throw UndefinedRetraction("retraction undefined at the origin");
    Ambient n = w / r;
    return (Eigen::Matrix3d::Identity() - n * n.transpose()) / r;
  }

 private:
  TargetKind kind_;
  double tube_radius_;
};

}  // namespace singext
