#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vpp/kdtree.hpp"
#include "vpp/mts.hpp"
#include "vpp/rng.hpp"
#include "vpp/scene.hpp"
#include "vpp/voxel_map.hpp"

namespace vpp {

enum class ViewpointKind { RoiTargeted, Exploration };

struct Viewpoint {
  Pose pose;
  Vec3 target = Vec3::Zero();
  double ig = 0.0;
  double cost = 0.0;
  double utility = 0.0;
  ViewpointKind origin_kind = ViewpointKind::RoiTargeted;
};

struct PlannerConfig {
  double alpha = 0.2;          // cost weight, per meter
  double d_max = 0.3;          // ROI proximity falloff for IG weights
  int n_vps = 30;              // accepted viewpoints per sampling round
  double utility_thresh = 0.05;
  double sensor_range = 0.4;   // viewpoint distance to target, and IG ray length
  int ig_rays_x = 16;
  int ig_rays_y = 16;
  int attempt_factor = 10;     // sampling attempt budget = factor * n_vps

  void validate() const {
    if (!(alpha >= 0.0 && d_max > 0.0 && n_vps >= 1 && sensor_range > 0.0 && ig_rays_x >= 1 &&
          ig_rays_y >= 1 && attempt_factor >= 1)) {
      throw std::invalid_argument("planner config invalid");
    }
  }
};

/// Proximity-count weight of an unknown voxel: 1 at a ROI, falling to the
/// 0.5 base weight at d_max or when no ROI is within reach.
inline double proximity_weight(std::optional<double> d, double d_max) {
  if (!(d_max > 0.0)) throw std::invalid_argument("proximity_weight: d_max must be > 0");
  if (!d.has_value()) return 0.5;
  if (*d < 0.0) throw std::invalid_argument("proximity_weight: negative distance");
  return 0.5 + 0.5 * (d_max - *d) / d_max;
}

inline double utility(double ig, double cost, double alpha) { return ig - alpha * cost; }

/// Per-snapshot context for information-gain queries: a nearest-ROI index
/// plus a weight cache keyed by voxel. The map must stay unchanged while an
/// evaluator is alive.
class IgEvaluator {
 public:
  IgEvaluator(const RoiOcTree& map, const PlannerConfig& cfg) : map_(map), cfg_(cfg) {
    cfg_.validate();
    std::vector<Vec3> pts;
    for (const VoxelKey& k : map.roi_voxel_keys()) pts.push_back(map.center_of(k));
    roi_index_ = KdTree3(std::move(pts));
  }

  /// Mean over a FOV-spanning ray grid of W_r / N_r, where rays stop at the
  /// first Occupied voxel, unknown voxels contribute their proximity weight
  /// and known voxels contribute 0. Rays are clipped to the map bounds:
  /// voxels that can never be observed carry no gain.
  double info_gain(const Pose& pose, const CameraModel& cam) const {
    const double res = map_.resolution();
    const VoxelKey origin_key = map_.key_at(pose.position);
    const int nx = cfg_.ig_rays_x, ny = cfg_.ig_rays_y;
    const double tan_h = std::tan(0.5 * cam.hfov), tan_v = std::tan(0.5 * cam.vfov);
    double total = 0.0;
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        Vec3 dir_cam((2.0 * (ix + 0.5) / nx - 1.0) * tan_h, (2.0 * (iy + 0.5) / ny - 1.0) * tan_v,
                     1.0);
        Vec3 dir = pose.rotate(dir_cam.normalized());
        Vec3 a = pose.position;
        Vec3 b = a + dir * cfg_.sensor_range;
        if (map_.bounds() && !clip_segment(*map_.bounds(), a, b)) continue;  // counts as 0
        long n_r = 0;
        double w_r = 0.0;
        walk_ray(res, a, b, [&](const VoxelKey& k) {
          if (k == origin_key) return true;
          VoxelClass c = map_.classify(k);
          ++n_r;
          if (c.occupancy == Occupancy::Occupied) return false;  // ray stops, voxel counted
          if (c.occupancy == Occupancy::Unknown) w_r += weight_of(k);
          return true;
        });
        if (n_r > 0) total += w_r / static_cast<double>(n_r);
      }
    }
    return total / static_cast<double>(nx * ny);
  }

 private:
  double weight_of(const VoxelKey& k) const {
    auto it = cache_.find(k);
    if (it != cache_.end()) return it->second;
    double w = proximity_weight(roi_index_.nearest_within(map_.center_of(k), cfg_.d_max),
                                cfg_.d_max);
    cache_.emplace(k, w);
    return w;
  }

  const RoiOcTree& map_;
  PlannerConfig cfg_;
  KdTree3 roi_index_;
  mutable std::unordered_map<VoxelKey, double, VoxelKeyHash> cache_;
};

inline double info_gain(const RoiOcTree& map, const Pose& pose, const CameraModel& cam,
                        const PlannerConfig& cfg) {
  return IgEvaluator(map, cfg).info_gain(pose, cam);
}

/// Samples viewpoints around frontier targets: random direction at sensor
/// range, aimed back at the target, kept only when reachable and when the
/// line of sight to the target crosses no Occupied voxel.
inline std::vector<Viewpoint> sample_viewpoints(const RoiOcTree& map, const Workspace& ws,
                                                const std::vector<VoxelKey>& targets, int n,
                                                const PlannerConfig& cfg, Rng& rng,
                                                ViewpointKind kind) {
  cfg.validate();
  std::vector<Viewpoint> out;
  if (targets.empty() || n < 1) return out;

  // random subset of up to n targets, assigned round-robin
  std::vector<VoxelKey> subset(targets);
  if (static_cast<int>(subset.size()) > n) {
    for (int i = 0; i < n; ++i) {
      int j = i + rng.uniform_int(static_cast<int>(subset.size()) - i);
      std::swap(subset[i], subset[j]);
    }
    subset.resize(n);
  }

  long budget = static_cast<long>(cfg.attempt_factor) * n;
  std::size_t next = 0;
  while (static_cast<int>(out.size()) < n && budget-- > 0) {
    const VoxelKey target_key = subset[next++ % subset.size()];
    const Vec3 target = map.center_of(target_key);
    const Vec3 dir = rng.unit_vector();
    const Vec3 pos = target + cfg.sensor_range * dir;
    Pose pose = look_at(pos, target);
    if (!is_reachable(ws, pose)) continue;
    const double dist = (target - pos).norm();
    RayHit hit = map.cast_ray(pos, (target - pos) / dist, dist, RayStop::AtOccupied);
    if (hit.kind == RayHit::Kind::Occupied && !(hit.key == target_key)) continue;
    Viewpoint vp;
    vp.pose = pose;
    vp.target = target;
    vp.origin_kind = kind;
    out.push_back(vp);
  }
  return out;
}

/// ROI-targeted sampling first; exploration sampling joins when ROI
/// candidates are absent or none clears the utility threshold. Candidates
/// are scored and returned best-first (utility desc, then cost, then sample
/// order).
inline std::vector<Viewpoint> sample_global(const RoiOcTree& map, const Workspace& ws,
                                            const CameraModel& cam, const PlannerConfig& cfg,
                                            const Pose& current, Rng& rng) {
  IgEvaluator ig_eval(map, cfg);
  auto score = [&](std::vector<Viewpoint>& vps) {
    for (Viewpoint& vp : vps) {
      vp.ig = ig_eval.info_gain(vp.pose, cam);
      vp.cost = move_cost(current, vp.pose);
      vp.utility = utility(vp.ig, vp.cost, cfg.alpha);
    }
  };

  std::vector<Viewpoint> pool;
  const auto roi_targets = map.roi_frontiers();
  if (!roi_targets.empty()) {
    pool = sample_viewpoints(map, ws, roi_targets, cfg.n_vps, cfg, rng,
                             ViewpointKind::RoiTargeted);
    score(pool);
  }
  double best_roi = -kInf;
  for (const Viewpoint& vp : pool) best_roi = std::max(best_roi, vp.utility);

  if (roi_targets.empty() || pool.empty() || best_roi <= cfg.utility_thresh) {
    auto explo = sample_viewpoints(map, ws, map.exploration_frontiers(), cfg.n_vps, cfg, rng,
                                   ViewpointKind::Exploration);
    score(explo);
    pool.insert(pool.end(), explo.begin(), explo.end());
  }

  std::stable_sort(pool.begin(), pool.end(), [](const Viewpoint& a, const Viewpoint& b) {
    if (a.utility != b.utility) return a.utility > b.utility;
    return a.cost < b.cost;
  });
  return pool;
}

enum class PlanActionKind { MtsMove, GlobalMove, Stalled };

struct PlanAction {
  PlanActionKind kind = PlanActionKind::Stalled;
  Pose pose;
  std::optional<Viewpoint> viewpoint;  // GlobalMove only
  std::optional<MtsStepResult> mts;    // MtsMove only, for the trial trace
};

struct PlanState {
  int m2s_moves = 0;
};

/// Component hooks, so the selection loop can run against scripted stubs as
/// well as the live planner. `mts` may be empty (global-only variant).
/// `sample(round)` returns ranked candidates; round 1 is the single resample.
struct PlannerHooks {
  std::function<MtsStepResult(int moves_so_far)> mts;
  std::function<std::vector<Viewpoint>(int round)> sample;
  std::function<bool(const Pose&)> try_move;
};

/// One iteration of the combined selection loop: follow the local gradient
/// while it clears the threshold and the move allowance, otherwise take the
/// best admissible sampled viewpoint; a single resample before giving up.
inline PlanAction plan_episode(PlanState& state, const PlannerHooks& hooks, int max_mts_moves,
                               double utility_thresh) {
  if (hooks.mts && state.m2s_moves < max_mts_moves) {
    MtsStepResult r = hooks.mts(state.m2s_moves);
    if (r.kind == MtsStepResult::Kind::Move) {
      ++state.m2s_moves;
      PlanAction a;
      a.kind = PlanActionKind::MtsMove;
      a.pose = r.pose;
      a.mts = std::move(r);
      return a;
    }
  }
  state.m2s_moves = 0;
  for (int round = 0; round < 2; ++round) {
    std::vector<Viewpoint> candidates = hooks.sample(round);
    for (const Viewpoint& vp : candidates) {
      if (!(vp.utility > utility_thresh)) break;  // ranked: the rest are no better
      if (hooks.try_move(vp.pose)) {
        PlanAction a;
        a.kind = PlanActionKind::GlobalMove;
        a.pose = vp.pose;
        a.viewpoint = vp;
        return a;
      }
    }
  }
  return {};  // Stalled
}

/// Straight-line motion stand-in: the segment must stay inside the
/// workspace, checked at 2 cm steps.
inline bool straight_line_reachable(const Workspace& ws, const Pose& from, const Pose& to,
                                    double step = 0.02) {
  const double len = (to.position - from.position).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    double t = static_cast<double>(i) / n;
    Pose p;
    p.position = from.position + t * (to.position - from.position);
    if (!is_reachable(ws, p)) return false;
  }
  return true;
}

}  // namespace vpp
