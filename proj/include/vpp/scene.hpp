#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpp/geometry.hpp"
#include "vpp/rng.hpp"
#include "vpp/voxel_map.hpp"

namespace vpp {

struct Fruit {
  int id = 0;
  Vec3 center = Vec3::Zero();
  Vec3 radii = Vec3::Zero();  // axis-aligned ellipsoid semi-axes

  Aabb bbox() const { return {center - radii, center + radii}; }
};

enum class OccluderShape : std::uint8_t { Ellipsoid, RectanglePatch, Cylinder };

/// Leaves, stems and other non-fruit geometry. Extents by shape:
/// ellipsoid radii; rectangle half-sizes in its local xy plane (normal +z);
/// cylinder (radius, radius, half-height) around its local z axis.
struct Occluder {
  OccluderShape shape = OccluderShape::Ellipsoid;
  Pose pose;
  Vec3 extents = Vec3::Zero();
};

struct Scene {
  int scenario_id = 0;
  std::vector<Fruit> fruits;
  std::vector<Occluder> occluders;
  Aabb world_bounds;
};

struct CameraModel {
  double hfov = 60.0 * std::numbers::pi / 180.0;
  double vfov = 60.0 * std::numbers::pi / 180.0;
  int width = 64;
  int height = 64;
  double min_range = 0.05;
  double max_range = 1.2;

  void validate() const {
    if (!(hfov > 0.0 && hfov < std::numbers::pi && vfov > 0.0 && vfov < std::numbers::pi)) {
      throw std::invalid_argument("camera fov out of range");
    }
    if (width < 8 || height < 8) throw std::invalid_argument("camera resolution below 8 px");
    if (!(min_range >= 0.0 && min_range < max_range)) {
      throw std::invalid_argument("camera range invalid");
    }
  }
};

enum class PixelLabel : std::uint8_t { Background, Occluder, Fruit };

struct Pixel {
  PixelLabel label = PixelLabel::Background;
  int fruit_id = -1;
  double depth = kInf;  // range along the (unit) pixel ray
};

struct LabeledImage {
  int width = 0, height = 0;
  std::vector<Pixel> pixels;

  const Pixel& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  Pixel& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Unit ray direction, in the camera frame, through pixel center (px, py).
inline Vec3 pixel_ray(const CameraModel& cam, double px, double py) {
  double x = (2.0 * (px + 0.5) / cam.width - 1.0) * std::tan(0.5 * cam.hfov);
  double y = (2.0 * (py + 0.5) / cam.height - 1.0) * std::tan(0.5 * cam.vfov);
  return Vec3(x, y, 1.0).normalized();
}

namespace detail {

struct RayHitRecord {
  double t = kInf;
  PixelLabel label = PixelLabel::Background;
  int fruit_id = -1;
};

// Smallest root of |(o + t d - c) / r| = 1 that is >= 0; the ellipsoid is
// axis-aligned about c.
inline std::optional<double> intersect_ellipsoid(const Vec3& o, const Vec3& d, const Vec3& c,
                                                 const Vec3& r) {
  Vec3 q = (o - c).cwiseQuotient(r);
  Vec3 dq = d.cwiseQuotient(r);
  double A = dq.squaredNorm();
  double B = 2.0 * q.dot(dq);
  double C = q.squaredNorm() - 1.0;
  double disc = B * B - 4.0 * A * C;
  if (disc < 0.0) return std::nullopt;
  double s = std::sqrt(disc);
  double t0 = (-B - s) / (2.0 * A);
  double t1 = (-B + s) / (2.0 * A);
  if (t0 >= 0.0) return t0;
  if (t1 >= 0.0) return t1;
  return std::nullopt;
}

inline std::optional<double> intersect_occluder(const Vec3& o, const Vec3& d, const Occluder& oc) {
  // into local frame
  Quat inv = oc.pose.orientation.conjugate();
  Vec3 p = inv * (o - oc.pose.position);
  Vec3 v = inv * d;
  switch (oc.shape) {
    case OccluderShape::Ellipsoid:
      return intersect_ellipsoid(p, v, Vec3::Zero(), oc.extents);
    case OccluderShape::RectanglePatch: {
      if (v.z() == 0.0) return std::nullopt;
      double t = -p.z() / v.z();
      if (t < 0.0) return std::nullopt;
      double x = p.x() + t * v.x();
      double y = p.y() + t * v.y();
      if (std::abs(x) <= oc.extents.x() && std::abs(y) <= oc.extents.y()) return t;
      return std::nullopt;
    }
    case OccluderShape::Cylinder: {
      double a = v.x() * v.x() + v.y() * v.y();
      if (a == 0.0) return std::nullopt;
      double b = 2.0 * (p.x() * v.x() + p.y() * v.y());
      double c = p.x() * p.x() + p.y() * p.y() - oc.extents.x() * oc.extents.x();
      double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) return std::nullopt;
      double s = std::sqrt(disc);
      for (double t : {(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)}) {
        if (t < 0.0) continue;
        if (std::abs(p.z() + t * v.z()) <= oc.extents.z()) return t;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

inline BoundingSphere occluder_sphere(const Occluder& oc) {
  return {oc.pose.position, oc.extents.norm()};
}

inline bool sphere_reject(const Vec3& o, const Vec3& d, const BoundingSphere& s, double t_max) {
  Vec3 co = s.center - o;
  double proj = co.dot(d);
  if (proj < -s.radius || proj > t_max + s.radius) return true;
  return co.squaredNorm() - proj * proj > s.radius * s.radius;
}

// Nearest labeled intersection along unit ray, within [t_min, t_max].
inline RayHitRecord trace(const Scene& scene, const Vec3& o, const Vec3& d, double t_min,
                          double t_max) {
  RayHitRecord best;
  best.t = kInf;
  for (const Fruit& f : scene.fruits) {
    BoundingSphere bs{f.center, f.radii.maxCoeff()};
    if (sphere_reject(o, d, bs, t_max)) continue;
    auto t = intersect_ellipsoid(o, d, f.center, f.radii);
    if (t && *t >= t_min && *t <= t_max && *t < best.t) {
      best = {*t, PixelLabel::Fruit, f.id};
    }
  }
  for (const Occluder& oc : scene.occluders) {
    BoundingSphere bs = occluder_sphere(oc);
    if (sphere_reject(o, d, bs, t_max)) continue;
    auto t = intersect_occluder(o, d, oc);
    if (t && *t >= t_min && *t <= t_max && *t < best.t) {
      best = {*t, PixelLabel::Occluder, -1};
    }
  }
  return best;
}

}  // namespace detail

/// Pinhole render against the analytic scene. Per pixel: nearest hit within
/// [min_range, max_range], or Background at infinite depth.
inline LabeledImage render(const Scene& scene, const Pose& pose, const CameraModel& cam) {
  if (!pose.position.allFinite()) throw std::invalid_argument("render: non-finite pose");
  cam.validate();
  LabeledImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.pixels.resize(static_cast<std::size_t>(cam.width) * cam.height);
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      Vec3 dir = pose.rotate(pixel_ray(cam, px, py));
      auto hit = detail::trace(scene, pose.position, dir, cam.min_range, cam.max_range);
      if (hit.t < kInf) {
        img.at(px, py) = {hit.label, hit.fruit_id, hit.t};
      }
    }
  }
  return img;
}

/// Back-projects every non-background pixel of a render into world points
/// with ROI flags; the result feeds RoiOcTree::integrate_scan directly.
inline std::vector<ScanPoint> render_pointcloud(const Scene& scene, const Pose& pose,
                                                const CameraModel& cam) {
  LabeledImage img = render(scene, pose, cam);
  std::vector<ScanPoint> points;
  points.reserve(img.pixels.size() / 4);
  for (int py = 0; py < img.height; ++py) {
    for (int px = 0; px < img.width; ++px) {
      const Pixel& p = img.at(px, py);
      if (p.label == PixelLabel::Background) continue;
      Vec3 dir = pose.rotate(pixel_ray(cam, px, py));
      points.push_back({pose.position + p.depth * dir, p.label == PixelLabel::Fruit});
    }
  }
  return points;
}

/// Nine-camera rig: one central reference plus eight outer cameras on a
/// plane offset along the optical axis, at the grid combinations of
/// (+-o_x, +-o_y). Outer orientations equal the reference (parallel mount).
struct CameraArrayConfig {
  Vec3 offset{0.027, 0.027, 0.03};

  std::array<Vec3, 9> relative_positions() const {
    std::array<Vec3, 9> out;
    out[0] = Vec3::Zero();
    int i = 1;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        out[i++] = Vec3(dx * offset.x(), dy * offset.y(), offset.z());
      }
    }
    return out;
  }

  /// Rows are the unit vectors from the reference camera to each outer one.
  Eigen::Matrix<double, 8, 3> directions() const {
    auto rel = relative_positions();
    Eigen::Matrix<double, 8, 3> v;
    for (int i = 0; i < 8; ++i) v.row(i) = rel[i + 1].normalized().transpose();
    return v;
  }
};

inline std::array<Pose, 9> array_poses(const Pose& reference, const CameraArrayConfig& cfg) {
  std::array<Pose, 9> out;
  auto rel = cfg.relative_positions();
  for (int i = 0; i < 9; ++i) {
    out[i] = Pose{reference.to_world(rel[i]), reference.orientation};
  }
  return out;
}

/// Reachable set of the arm mount. SpherePole: shell around the pole tip
/// (scenario 1). BoxGantry: points within arm reach of the gantry's swept
/// base box (scenarios 2-3). Both exclude poses at or below the ground.
struct Workspace {
  enum class Kind { SpherePole, BoxGantry } kind = Kind::SpherePole;
  Vec3 pole_tip{0.0, 0.0, 0.85};
  double reach = 0.85;
  double min_reach = 0.10;
  Aabb gantry_box = Aabb::of({-1.0, -1.0, 0.8}, {1.0, 1.0, 2.0});
  double ground_z = 0.02;
};

inline bool is_reachable(const Workspace& ws, const Pose& pose) {
  const Vec3& p = pose.position;
  if (p.z() < ws.ground_z) return false;
  if (ws.kind == Workspace::Kind::SpherePole) {
    double d = (p - ws.pole_tip).norm();
    return d >= ws.min_reach && d <= ws.reach;
  }
  return ws.gantry_box.distance(p) <= ws.reach;
}

struct SceneParams {
  double occlusion_density = 0.5;  // the experimental lever: scales leaf count and size
  double fruit_radius_min = 0.03;
  double fruit_radius_max = 0.05;
  double leaf_scale = 1.0;
  double ring_radius = 0.40;  // scenario 1: plant distance from the pole
  double corner_offset = 0.75;  // scenario 2: |x| = |y| of the four plants
  double row_gap = 0.8;   // scenario 3: distance between the two rows
  double col_gap = 0.4;   // scenario 3: spacing along a row
};

namespace detail {

inline void add_plant(Scene& scene, Rng& rng, const Vec3& base, bool fruiting,
                      const SceneParams& sp, int& next_fruit_id) {
  const double stem_h = rng.uniform(0.55, 0.70);
  const double stem_r = 0.015;
  Occluder stem;
  stem.shape = OccluderShape::Cylinder;
  stem.pose.position = base + Vec3(0.0, 0.0, 0.5 * stem_h);
  stem.extents = Vec3(stem_r, stem_r, 0.5 * stem_h);
  scene.occluders.push_back(stem);

  int leaves = 0;
  if (fruiting) {
    // Fruits must stay clusterable one-to-one: keep surface gaps well above
    // the 26-neighborhood merge distance of the map resolution.
    const double min_gap = 0.03;
    std::vector<std::pair<Vec3, double>> placed;  // center, max radius
    for (int k = 0; k < 7; ++k) {
      Vec3 radii, center;
      Vec3 best_center = Vec3::Zero(), best_radii = Vec3::Zero();
      double best_clearance = -kInf;
      bool ok = false;
      for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
        double theta = 2.0 * std::numbers::pi * ((k + 0.15 + 0.7 * rng.uniform()) / 7.0);
        double zf = stem_h * rng.uniform(0.22, 0.85);
        radii = Vec3(rng.uniform(sp.fruit_radius_min, sp.fruit_radius_max),
                     rng.uniform(sp.fruit_radius_min, sp.fruit_radius_max),
                     rng.uniform(sp.fruit_radius_min, sp.fruit_radius_max));
        Vec3 outward(std::cos(theta), std::sin(theta), 0.0);
        center = base + outward * (stem_r + 0.8 * std::max(radii.x(), radii.y())) +
                 Vec3(0.0, 0.0, zf);
        double clearance = kInf;
        for (const auto& [pc, pr] : placed) {
          clearance = std::min(clearance,
                               (pc - center).norm() - pr - radii.maxCoeff());
        }
        if (clearance >= min_gap || placed.empty()) {
          ok = true;
        } else if (clearance > best_clearance) {
          best_clearance = clearance;
          best_center = center;
          best_radii = radii;
        }
      }
      if (!ok) {
        // take the best attempt with the smallest fruit size that still fits
        center = best_center;
        radii = Vec3::Constant(sp.fruit_radius_min);
      }
      placed.emplace_back(center, radii.maxCoeff());
      scene.fruits.push_back({next_fruit_id++, center, radii});
      Vec3 outward = (center - base);
      outward.z() = 0.0;
      outward = outward.norm() > 1e-9 ? Vec3(outward.normalized()) : Vec3(1.0, 0.0, 0.0);

      // leaves shadowing this fruit from the outward hemisphere
      int n_leaf = 1 + static_cast<int>(std::floor(sp.occlusion_density * 3.0 +
                                                   0.999 * rng.uniform()));
      for (int l = 0; l < n_leaf; ++l) {
        double yaw = rng.uniform(-0.9, 0.9);
        double pitch = rng.uniform(-0.5, 0.5);
        Eigen::AngleAxisd rot_yaw(yaw, Vec3::UnitZ());
        Vec3 dir = rot_yaw * outward;
        dir.z() += std::tan(pitch);
        dir.normalize();
        double dist = radii.maxCoeff() + rng.uniform(0.012, 0.05);
        Occluder leaf;
        leaf.shape = OccluderShape::RectanglePatch;
        leaf.pose = look_at(center + dir * dist, center + dir * (dist + 1.0));
        double size = sp.leaf_scale * (0.70 + 0.6 * sp.occlusion_density + 0.2 * rng.uniform());
        leaf.extents = Vec3(0.04 * size, 0.06 * size, 0.0);
        scene.occluders.push_back(leaf);
        ++leaves;
      }
    }
  }
  // canopy leaves to round the plant out
  int canopy = fruiting ? std::max(0, 10 - leaves) : 8;
  for (int l = 0; l < canopy; ++l) {
    double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double zf = stem_h * rng.uniform(0.45, 1.0);
    double dist = rng.uniform(0.05, 0.12);
    Vec3 pos = base + Vec3(dist * std::cos(theta), dist * std::sin(theta), zf);
    Occluder leaf;
    leaf.shape = OccluderShape::RectanglePatch;
    Vec3 n = rng.unit_vector();
    if (n.norm() < 1e-9) n = Vec3::UnitX();
    leaf.pose = look_at(pos, pos + n);
    double size = sp.leaf_scale * rng.uniform(0.8, 1.2);
    leaf.extents = Vec3(0.04 * size, 0.06 * size, 0.0);
    scene.occluders.push_back(leaf);
  }
}

}  // namespace detail

/// Deterministic synthetic world for a scenario. Fruit counts are fixed by
/// construction: 14 (scenario 1), 28 (scenario 2), 42 (scenario 3).
inline Scene generate_scene(int scenario, std::uint64_t seed, const SceneParams& sp = {}) {
  if (scenario < 1 || scenario > 3) {
    throw std::invalid_argument("unknown scenario " + std::to_string(scenario) +
                                " (valid: 1, 2, 3)");
  }
  Rng rng(splitmix64(seed) ^ (0x51ED270B * static_cast<std::uint64_t>(scenario)));
  Scene scene;
  scene.scenario_id = scenario;
  int next_id = 0;

  std::vector<std::pair<Vec3, bool>> plants;  // base position, fruiting
  if (scenario == 1) {
    const double r = sp.ring_radius * std::numbers::sqrt2 / 2.0;
    plants = {{{r, r, 0.0}, true}, {{-r, r, 0.0}, false}, {{-r, -r, 0.0}, true},
              {{r, -r, 0.0}, false}};
    // static pole carrying the arm
    Occluder pole;
    pole.shape = OccluderShape::Cylinder;
    pole.pose.position = Vec3(0.0, 0.0, 0.425);
    pole.extents = Vec3(0.04, 0.04, 0.425);
    scene.occluders.push_back(pole);
  } else if (scenario == 2) {
    const double c = sp.corner_offset;
    plants = {{{c, c, 0.0}, true}, {{-c, c, 0.0}, true}, {{-c, -c, 0.0}, true},
              {{c, -c, 0.0}, true}};
  } else {
    for (int row = 0; row < 2; ++row) {
      double y = (row == 0 ? -0.5 : 0.5) * sp.row_gap;
      for (int col = 0; col < 6; ++col) {
        double x = (col - 2.5) * sp.col_gap;
        bool fruiting = (col % 2) == (row % 2);
        plants.push_back({{x, y, 0.0}, fruiting});
      }
    }
  }

  for (const auto& [base, fruiting] : plants) {
    detail::add_plant(scene, rng, base, fruiting, sp, next_id);
  }

  Aabb wb;
  for (const auto& [base, fruiting] : plants) wb.expand(base);
  wb.pad(0.35);
  wb.min.z() = 0.0;
  wb.max.z() = 1.0;
  scene.world_bounds = wb;
  return scene;
}

inline Workspace workspace_for_scenario(int scenario) {
  Workspace ws;
  if (scenario == 1) {
    ws.kind = Workspace::Kind::SpherePole;
  } else if (scenario == 2 || scenario == 3) {
    ws.kind = Workspace::Kind::BoxGantry;
  } else {
    throw std::invalid_argument("unknown scenario " + std::to_string(scenario));
  }
  return ws;
}

/// Deterministic initial camera pose used at the start of every trial.
inline Pose start_pose_for_scenario(int scenario) {
  if (scenario == 1) return look_at({0.05, -0.45, 0.95}, {0.35, 0.35, 0.35});
  if (scenario == 2) return look_at({0.0, 0.0, 1.0}, {0.75, 0.75, 0.35});
  if (scenario == 3) return look_at({0.0, 0.0, 1.0}, {0.2, 0.4, 0.35});
  throw std::invalid_argument("unknown scenario " + std::to_string(scenario));
}

/// Fruit list export, line oriented: header rows then one
/// `fruit <id> <cx> <cy> <cz> <rx> <ry> <rz>` row per fruit.
inline void export_scene(std::ostream& os, const Scene& scene, std::uint64_t seed) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "scenario %d\nseed %llu\nfruit_count %zu\n", scene.scenario_id,
                static_cast<unsigned long long>(seed), scene.fruits.size());
  os << buf;
  for (const Fruit& f : scene.fruits) {
    std::snprintf(buf, sizeof(buf), "fruit %d %.17g %.17g %.17g %.17g %.17g %.17g\n", f.id,
                  f.center.x(), f.center.y(), f.center.z(), f.radii.x(), f.radii.y(),
                  f.radii.z());
    os << buf;
  }
}

inline std::vector<Fruit> import_scene_fruits(std::istream& is) {
  std::vector<Fruit> fruits;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line.rfind("fruit ", 0) != 0) continue;
    std::istringstream ls(line);
    std::string tag;
    Fruit f;
    if (!(ls >> tag >> f.id >> f.center.x() >> f.center.y() >> f.center.z() >> f.radii.x() >>
          f.radii.y() >> f.radii.z())) {
      throw std::runtime_error("scene file: bad fruit row at line " + std::to_string(line_no));
    }
    fruits.push_back(f);
  }
  return fruits;
}

}  // namespace vpp
