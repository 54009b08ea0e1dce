#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>

#include "vpp/detection.hpp"
#include "vpp/scene.hpp"

namespace vpp {

/// Rows are the unit direction vectors from the reference camera to the
/// outer array cameras.
using DirectionMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

inline void validate_directions(const DirectionMatrix& v) {
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (std::abs(v.row(i).norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("direction matrix row is not unit length");
    }
  }
}

/// Least-squares gradient of the objective over camera directions, solved
/// through the normal equations g = (V^T V)^-1 V^T df.
inline Vec3 estimate_gradient(const DirectionMatrix& v, const Eigen::VectorXd& delta_f) {
  if (v.rows() != delta_f.size()) {
    throw std::invalid_argument("estimate_gradient: row count mismatch");
  }
  validate_directions(v);
  Eigen::Matrix3d m = v.transpose() * v;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m);
  double lo = eig.eigenvalues().minCoeff();
  double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e8) {
    throw std::runtime_error("estimate_gradient: V^T V is singular or ill-conditioned");
  }
  return m.ldlt().solve(v.transpose() * delta_f);
}

/// Per-camera weights w = V g: positive for cameras aligned with the
/// gradient, negative for opposing ones.
inline Eigen::VectorXd camera_weights(const DirectionMatrix& v, const Vec3& gradient) {
  return v * gradient;
}

inline double weighted_delta(const Eigen::VectorXd& weights, const Eigen::VectorXd& delta_f) {
  if (weights.size() != delta_f.size()) {
    throw std::invalid_argument("weighted_delta: length mismatch");
  }
  return weights.dot(delta_f);
}

struct GradientResult {
  Vec3 gradient = Vec3::Zero();
  Eigen::VectorXd camera_weights;
  double weighted_delta = 0.0;
};

inline GradientResult solve_gradient(const DirectionMatrix& v, const Eigen::VectorXd& delta_f) {
  GradientResult r;
  r.gradient = estimate_gradient(v, delta_f);
  r.camera_weights = camera_weights(v, r.gradient);
  r.weighted_delta = weighted_delta(r.camera_weights, delta_f);
  return r;
}

struct MtsConfig {
  // Threshold on the weighted delta, which is quadratic in the
  // area-normalized objective: a half-occluded fruit filling a few percent
  // of the frame lands around 3e-4..2e-3, a symmetric plateau an order of
  // magnitude lower.
  double delta_thresh = 1e-4;
  double step_length = 0.02;  // meters per accepted move
  int max_moves = 10;         // per local episode
};

struct MtsStepResult {
  enum class Kind { Move, LocalMax, Unreachable, NoTarget } kind = Kind::NoTarget;
  Pose pose;                      // proposed pose, Move only
  double ref_objective = 0.0;
  double weighted_delta = 0.0;
  Vec3 gradient = Vec3::Zero();
  std::array<double, 9> objectives{};  // reference first, trace/debug
};

/// Mean back-projected world point of a cluster's pixels.
inline Vec3 cluster_world_point(const PixelCluster& cluster, const LabeledImage& img,
                                const Pose& pose, const CameraModel& cam) {
  Vec3 sum = Vec3::Zero();
  for (int idx : cluster.pixel_indices) {
    int x = idx % img.width, y = idx / img.width;
    const Pixel& p = img.pixels[idx];
    sum += pose.position + p.depth * pose.rotate(pixel_ray(cam, x, y));
  }
  return sum / static_cast<double>(cluster.pixel_indices.size());
}

/// One 3D-Move-to-See step: renders the nine array images, forms objective
/// deltas against the reference target, estimates the gradient and proposes
/// a step along it. Emits LocalMax when the weighted delta falls to the
/// threshold or the per-episode move allowance is spent, Unreachable when
/// the workspace blocks the step, NoTarget when the reference sees no fruit.
inline MtsStepResult mts_step(const Scene& scene, const Pose& reference, const Workspace& ws,
                              const CameraArrayConfig& array_cfg, const CameraModel& cam,
                              const DetectionConfig& det_cfg, const MtsConfig& cfg,
                              int moves_so_far) {
  if (!(cfg.step_length > 0.0) || cfg.max_moves < 1) {
    throw std::invalid_argument("mts_step: bad config");
  }
  MtsStepResult result;
  const auto poses = array_poses(reference, array_cfg);

  LabeledImage ref_img = render(scene, poses[0], cam);
  auto ref_clusters = detect_clusters(ref_img, det_cfg.min_cluster_px);
  const PixelCluster* ref_target =
      select_reference_target(ref_clusters, ref_img.width, ref_img.height);
  if (ref_target == nullptr) {
    result.kind = MtsStepResult::Kind::NoTarget;
    return result;
  }
  const double f_ref = objective(ref_img, ref_target);
  result.ref_objective = f_ref;
  result.objectives[0] = f_ref;

  const double min_size = det_cfg.match_min_frac * ref_target->pixel_count;
  TargetMatch match;
  match.per_camera[0] = ref_target;
  std::array<std::vector<PixelCluster>, 9> clusters_by_camera;
  Eigen::VectorXd delta_f(8);
  for (int i = 0; i < 8; ++i) {
    LabeledImage img = render(scene, poses[i + 1], cam);
    clusters_by_camera[i + 1] = detect_clusters(img, det_cfg.min_cluster_px);
    match.per_camera[i + 1] = match_target(*ref_target, clusters_by_camera[i + 1], min_size);
    double f_i = objective(img, match.per_camera[i + 1]);
    result.objectives[i + 1] = f_i;
    delta_f(i) = f_i - f_ref;
  }

  GradientResult grad = solve_gradient(array_cfg.directions(), delta_f);
  result.gradient = grad.gradient;
  result.weighted_delta = grad.weighted_delta;

  if (moves_so_far >= cfg.max_moves || grad.weighted_delta <= cfg.delta_thresh ||
      grad.gradient.norm() == 0.0) {
    result.kind = MtsStepResult::Kind::LocalMax;
    return result;
  }

  const Vec3 target_point = cluster_world_point(*ref_target, ref_img, poses[0], cam);
  const Vec3 new_pos =
      reference.position + reference.rotate(grad.gradient.normalized()) * cfg.step_length;
  Pose proposal = look_at(new_pos, target_point);
  if (!is_reachable(ws, proposal)) {
    result.kind = MtsStepResult::Kind::Unreachable;
    return result;
  }
  result.kind = MtsStepResult::Kind::Move;
  result.pose = proposal;
  return result;
}

}  // namespace vpp
