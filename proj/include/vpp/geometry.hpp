#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace vpp {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Rigid pose of a camera. Camera frame: +z optical axis, +x right, +y down.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Vec3 to_world(const Vec3& local) const { return position + orientation * local; }
  Vec3 rotate(const Vec3& local) const { return orientation * local; }
  Vec3 forward() const { return orientation * Vec3::UnitZ(); }
};

/// Axis-aligned box. Default-constructed boxes are empty.
struct Aabb {
  Vec3 min = Vec3::Constant(kInf);
  Vec3 max = Vec3::Constant(-kInf);

  static Aabb of(const Vec3& lo, const Vec3& hi) { return {lo, hi}; }

  bool empty() const { return (max.array() < min.array()).any(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const {
    if (empty()) return 0.0;
    Vec3 e = max - min;
    return e.x() * e.y() * e.z();
  }
  Vec3 closest_point(const Vec3& p) const { return p.cwiseMax(min).cwiseMin(max); }
  double distance(const Vec3& p) const { return (p - closest_point(p)).norm(); }
  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void pad(double m) {
    min -= Vec3::Constant(m);
    max += Vec3::Constant(m);
  }
  Aabb intersect(const Aabb& o) const { return {min.cwiseMax(o.min), max.cwiseMin(o.max)}; }
};

/// Clips segment [a,b] to a box in place. Returns false when the segment
/// misses the box entirely.
inline bool clip_segment(const Aabb& box, Vec3& a, Vec3& b) {
  Vec3 d = b - a;
  double t0 = 0.0, t1 = 1.0;
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (a[i] < box.min[i] || a[i] > box.max[i]) return false;
      continue;
    }
    double lo = (box.min[i] - a[i]) / d[i];
    double hi = (box.max[i] - a[i]) / d[i];
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
    if (t0 > t1) return false;
  }
  Vec3 na = a + t0 * d;
  Vec3 nb = a + t1 * d;
  a = na;
  b = nb;
  return true;
}

/// Camera pose at `eye` with the optical axis through `target`. Image up
/// follows world +z; looking straight up or down falls back to world +x.
inline Pose look_at(const Vec3& eye, const Vec3& target) {
  Vec3 z = target - eye;
  double n = z.norm();
  z = (n > 0.0) ? Vec3(z / n) : Vec3(Vec3::UnitZ());
  Vec3 up = Vec3::UnitZ();
  if (std::abs(z.dot(up)) > 0.999) up = Vec3::UnitX();
  Vec3 w = up - z.dot(up) * z;
  Vec3 y = -w.normalized();  // +y is image-down
  Vec3 x = y.cross(z);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {eye, Quat(r)};
}

/// Euclidean camera travel between two poses; orientation is ignored.
inline double move_cost(const Pose& from, const Pose& to) {
  return (to.position - from.position).norm();
}

}  // namespace vpp
