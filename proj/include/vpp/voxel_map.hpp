#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vpp/geometry.hpp"

namespace vpp {

struct VoxelKey {
  std::int32_t x = 0, y = 0, z = 0;
  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.x)) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.y)) * 19349669ULL;
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.z)) * 83492791ULL;
    h ^= h >> 13;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 31;
    return static_cast<std::size_t>(h);
  }
};

using VoxelKeySet = std::unordered_set<VoxelKey, VoxelKeyHash>;

enum class Occupancy : std::uint8_t { Unknown, Free, Occupied };

struct VoxelClass {
  Occupancy occupancy = Occupancy::Unknown;
  bool is_roi = false;
};

struct VoxelNode {
  double occ_logodds = 0.0;
  double roi_logodds = 0.0;
};

struct RoiCluster {
  std::vector<VoxelKey> voxel_keys;
  Vec3 centroid = Vec3::Zero();
  Aabb bbox;
};

struct MapParams {
  double resolution = 0.01;   // meters per voxel edge
  double hit_logodds = 0.85;  // endpoint occupancy increment (p = 0.7)
  double miss_logodds = 0.4;  // along-ray occupancy decrement (p ~ 0.4)
  double roi_hit_logodds = 0.85;
  double roi_miss_logodds = 0.4;
  double clamp_min = -2.0;
  double clamp_max = 3.5;
  double roi_threshold = 0.0;  // roi log-odds must exceed this
};

/// One back-projected sensor return; directly consumable by integrate_scan.
struct ScanPoint {
  Vec3 point = Vec3::Zero();
  bool is_roi = false;
};

enum class RayStop { AtOccupied, AtOccupiedOrUnknown };

struct RayHit {
  enum class Kind { Occupied, Unknown, Clear } kind = Kind::Clear;
  VoxelKey key{};
};

inline VoxelKey voxel_key(const Vec3& p, double resolution) {
  return {static_cast<std::int32_t>(std::floor(p.x() / resolution)),
          static_cast<std::int32_t>(std::floor(p.y() / resolution)),
          static_cast<std::int32_t>(std::floor(p.z() / resolution))};
}

inline Vec3 voxel_center(const VoxelKey& k, double resolution) {
  return {(k.x + 0.5) * resolution, (k.y + 0.5) * resolution, (k.z + 0.5) * resolution};
}

/// Visits, in order, every voxel the segment [a,b] intersects, both end
/// voxels included (Amanatides-Woo stepping). The visitor returns false to
/// stop early.
template <typename Fn>
void walk_ray(double resolution, const Vec3& a, const Vec3& b, Fn&& visit) {
  VoxelKey key = voxel_key(a, resolution);
  const VoxelKey end = voxel_key(b, resolution);
  if (!visit(key)) return;
  if (key == end) return;

  const Vec3 d = b - a;
  std::int32_t step[3];
  double t_max[3], t_delta[3];
  std::int32_t kcur[3] = {key.x, key.y, key.z};
  const std::int32_t kend[3] = {end.x, end.y, end.z};
  for (int i = 0; i < 3; ++i) {
    if (d[i] > 0.0) {
      step[i] = 1;
      t_max[i] = ((kcur[i] + 1) * resolution - a[i]) / d[i];
      t_delta[i] = resolution / d[i];
    } else if (d[i] < 0.0) {
      step[i] = -1;
      t_max[i] = (kcur[i] * resolution - a[i]) / d[i];
      t_delta[i] = -resolution / d[i];
    } else {
      step[i] = 0;
      t_max[i] = kInf;
      t_delta[i] = kInf;
    }
  }

  long guard = 8 + 3 * (std::abs(static_cast<long>(kend[0]) - kcur[0]) +
                        std::abs(static_cast<long>(kend[1]) - kcur[1]) +
                        std::abs(static_cast<long>(kend[2]) - kcur[2]));
  while (guard-- > 0) {
    int ax = 0;
    if (t_max[1] < t_max[ax]) ax = 1;
    if (t_max[2] < t_max[ax]) ax = 2;
    if (t_max[ax] > 1.0) {
      // Rounding kept us from reaching the endpoint's voxel; report it so the
      // visited set matches floor(b).
      VoxelKey k{kcur[0], kcur[1], kcur[2]};
      if (!(k == end)) visit(end);
      return;
    }
    kcur[ax] += step[ax];
    t_max[ax] += t_delta[ax];
    VoxelKey k{kcur[0], kcur[1], kcur[2]};
    if (!visit(k)) return;
    if (k == end) return;
  }
}

inline std::vector<VoxelKey> ray_voxels(double resolution, const Vec3& a, const Vec3& b) {
  std::vector<VoxelKey> out;
  walk_ray(resolution, a, b, [&](const VoxelKey& k) {
    out.push_back(k);
    return true;
  });
  return out;
}

/// Sparse voxel map with per-voxel occupancy and ROI log-odds. Keys absent
/// from storage classify Unknown. Backed by a hash grid; the contract is on
/// classification semantics, not tree internals.
class RoiOcTree {
 public:
  explicit RoiOcTree(MapParams params = {}, std::optional<Aabb> bounds = std::nullopt)
      : params_(params), bounds_(bounds) {
    if (!(params_.resolution > 0.0)) throw std::invalid_argument("resolution must be > 0");
  }

  const MapParams& params() const { return params_; }
  double resolution() const { return params_.resolution; }
  const std::optional<Aabb>& bounds() const { return bounds_; }
  std::size_t size() const { return nodes_.size(); }
  const std::unordered_map<VoxelKey, VoxelNode, VoxelKeyHash>& nodes() const { return nodes_; }

  VoxelKey key_at(const Vec3& p) const { return voxel_key(p, params_.resolution); }
  Vec3 center_of(const VoxelKey& k) const { return voxel_center(k, params_.resolution); }

  const VoxelNode* find(const VoxelKey& k) const {
    auto it = nodes_.find(k);
    return it == nodes_.end() ? nullptr : &it->second;
  }

  /// Direct write, clamped; mainly for tests and snapshot import.
  void set_logodds(const VoxelKey& k, double occ, double roi) {
    VoxelNode& n = nodes_[k];
    n.occ_logodds = clamp(occ);
    n.roi_logodds = clamp(roi);
  }

  VoxelClass classify(const VoxelKey& k) const {
    const VoxelNode* n = find(k);
    if (n == nullptr) return {Occupancy::Unknown, false};
    if (n->occ_logodds > 0.0) {
      return {Occupancy::Occupied, n->roi_logodds > params_.roi_threshold};
    }
    if (n->occ_logodds < 0.0) return {Occupancy::Free, false};
    return {Occupancy::Unknown, false};  // an even split is not knowledge
  }

  /// Integrates one scan: rays from `origin` to each point carve free space,
  /// endpoints gain occupancy, ROI evidence updates at endpoints only.
  /// Within a scan every voxel receives at most one occupancy update and
  /// endpoint (hit) status wins over miss. Non-finite points are skipped;
  /// out-of-bounds rays are truncated at the bounds. Returns the number of
  /// voxels touched.
  std::size_t integrate_scan(const Vec3& origin, std::span<const ScanPoint> points) {
    if (!origin.allFinite()) throw std::invalid_argument("integrate_scan: non-finite origin");
    const VoxelKey origin_key = key_at(origin);

    VoxelKeySet misses;
    VoxelKeySet hits;
    std::vector<std::pair<VoxelKey, bool>> roi_updates;  // endpoint observations, point order
    std::vector<VoxelKey> scratch;

    for (const ScanPoint& sp : points) {
      if (!sp.point.allFinite()) continue;
      Vec3 a = origin, b = sp.point;
      bool truncated = false;
      if (bounds_) {
        Vec3 cb = b;
        if (!clip_segment(*bounds_, a, b)) continue;  // entirely outside
        truncated = (b - cb).squaredNorm() > 0.0;
      }
      scratch.clear();
      walk_ray(params_.resolution, a, b, [&](const VoxelKey& k) {
        scratch.push_back(k);
        return true;
      });
      if (scratch.empty()) continue;
      const VoxelKey end_key = scratch.back();
      if (!truncated) {
        hits.insert(end_key);
        roi_updates.emplace_back(end_key, sp.is_roi);
      }
      for (const VoxelKey& k : scratch) {
        if (k == origin_key) continue;  // origin's voxel is not between origin and endpoint
        if (!truncated && k == end_key) continue;
        misses.insert(k);
      }
    }

    std::size_t touched = 0;
    for (const VoxelKey& k : misses) {
      if (hits.contains(k)) continue;  // hit precedence
      VoxelNode& n = nodes_[k];
      n.occ_logodds = clamp(n.occ_logodds - params_.miss_logodds);
      ++touched;
    }
    for (const VoxelKey& k : hits) {
      VoxelNode& n = nodes_[k];
      n.occ_logodds = clamp(n.occ_logodds + params_.hit_logodds);
      ++touched;
    }
    for (const auto& [k, is_roi] : roi_updates) {
      VoxelNode& n = nodes_[k];
      n.roi_logodds = clamp(n.roi_logodds +
                            (is_roi ? params_.roi_hit_logodds : -params_.roi_miss_logodds));
    }
    return touched;
  }

  /// First Occupied voxel along the ray, or first Unknown when the mode stops
  /// at unknown space, or Clear after max_range of free/unknown traversal.
  /// The voxel containing the origin itself is skipped.
  RayHit cast_ray(const Vec3& origin, const Vec3& dir, double max_range,
                  RayStop mode = RayStop::AtOccupied) const {
    if (std::abs(dir.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("cast_ray: direction must be a unit vector");
    }
    if (!(max_range > 0.0)) throw std::invalid_argument("cast_ray: max_range must be > 0");
    const VoxelKey origin_key = key_at(origin);
    RayHit hit;
    walk_ray(params_.resolution, origin, Vec3(origin + dir * max_range),
             [&](const VoxelKey& k) {
               if (k == origin_key) return true;
               VoxelClass c = classify(k);
               if (c.occupancy == Occupancy::Occupied) {
                 hit = {RayHit::Kind::Occupied, k};
                 return false;
               }
               if (c.occupancy == Occupancy::Unknown && mode == RayStop::AtOccupiedOrUnknown) {
                 hit = {RayHit::Kind::Unknown, k};
                 return false;
               }
               return true;
             });
    return hit;
  }

  /// Free voxels with at least one ROI neighbor and one Unknown neighbor
  /// (6-connectivity). Sorted by key for deterministic downstream sampling.
  std::vector<VoxelKey> roi_frontiers() const { return frontiers(/*roi_neighbor=*/true); }

  /// Free voxels with at least one Occupied neighbor and one Unknown neighbor.
  std::vector<VoxelKey> exploration_frontiers() const { return frontiers(/*roi_neighbor=*/false); }

  /// Maximal 26-connected components of ROI voxels.
  std::vector<RoiCluster> roi_clusters() const {
    std::vector<VoxelKey> roi = roi_voxel_keys();
    VoxelKeySet pending(roi.begin(), roi.end());
    std::vector<RoiCluster> out;
    std::deque<VoxelKey> queue;
    for (const VoxelKey& seed : roi) {
      if (!pending.contains(seed)) continue;
      RoiCluster cluster;
      pending.erase(seed);
      queue.push_back(seed);
      while (!queue.empty()) {
        VoxelKey k = queue.front();
        queue.pop_front();
        cluster.voxel_keys.push_back(k);
        for (int dx = -1; dx <= 1; ++dx) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dz = -1; dz <= 1; ++dz) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              VoxelKey nb{k.x + dx, k.y + dy, k.z + dz};
              auto it = pending.find(nb);
              if (it != pending.end()) {
                pending.erase(it);
                queue.push_back(nb);
              }
            }
          }
        }
      }
      std::sort(cluster.voxel_keys.begin(), cluster.voxel_keys.end());
      Vec3 sum = Vec3::Zero();
      for (const VoxelKey& k : cluster.voxel_keys) {
        Vec3 c = center_of(k);
        sum += c;
        cluster.bbox.expand(c);
      }
      cluster.centroid = sum / static_cast<double>(cluster.voxel_keys.size());
      cluster.bbox.pad(0.5 * params_.resolution);
      out.push_back(std::move(cluster));
    }
    return out;
  }

  /// Center-to-center distance to the nearest ROI voxel if within d_max.
  /// Linear scan; batch callers should build a RoiDistanceIndex instead.
  std::optional<double> distance_to_nearest_roi(const VoxelKey& key, double d_max) const {
    if (!(d_max > 0.0)) throw std::invalid_argument("distance_to_nearest_roi: d_max must be > 0");
    const Vec3 p = center_of(key);
    double best_sq = d_max * d_max;
    bool found = false;
    for (const auto& [k, n] : nodes_) {
      if (!(n.occ_logodds > 0.0 && n.roi_logodds > params_.roi_threshold)) continue;
      double dsq = (center_of(k) - p).squaredNorm();
      if (dsq <= best_sq) {
        best_sq = dsq;
        found = true;
      }
    }
    if (!found) return std::nullopt;
    return std::sqrt(best_sq);
  }

  /// All keys currently classified as ROI, sorted.
  std::vector<VoxelKey> roi_voxel_keys() const {
    std::vector<VoxelKey> out;
    for (const auto& [k, n] : nodes_) {
      if (n.occ_logodds > 0.0 && n.roi_logodds > params_.roi_threshold) out.push_back(k);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Line-oriented snapshot: `resolution <r>` header, then one
  /// `kx ky kz occ_logodds roi_logodds` row per stored voxel, key-sorted.
  void export_snapshot(std::ostream& os) const {
    std::vector<VoxelKey> keys;
    keys.reserve(nodes_.size());
    for (const auto& [k, n] : nodes_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    char buf[160];
    std::snprintf(buf, sizeof(buf), "resolution %.17g\n", params_.resolution);
    os << buf;
    for (const VoxelKey& k : keys) {
      const VoxelNode& n = nodes_.at(k);
      std::snprintf(buf, sizeof(buf), "%d %d %d %.17g %.17g\n", k.x, k.y, k.z, n.occ_logodds,
                    n.roi_logodds);
      os << buf;
    }
  }

  static RoiOcTree import_snapshot(std::istream& is, MapParams params = {}) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("snapshot: missing header");
    {
      std::istringstream ls(line);
      std::string tag;
      double res = 0.0;
      if (!(ls >> tag >> res) || tag != "resolution" || !(res > 0.0)) {
        throw std::runtime_error("snapshot: bad header: " + line);
      }
      params.resolution = res;
    }
    RoiOcTree map(params);
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      VoxelKey k;
      double occ = 0.0, roi = 0.0;
      if (!(ls >> k.x >> k.y >> k.z >> occ >> roi)) {
        throw std::runtime_error("snapshot: bad row at line " + std::to_string(line_no));
      }
      map.set_logodds(k, occ, roi);
    }
    return map;
  }

 private:
  double clamp(double v) const { return std::clamp(v, params_.clamp_min, params_.clamp_max); }

  std::vector<VoxelKey> frontiers(bool roi_neighbor) const {
    static constexpr std::int32_t kFace[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                                 {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
    std::vector<VoxelKey> out;
    for (const auto& [k, n] : nodes_) {
      if (!(n.occ_logodds < 0.0)) continue;  // frontier candidates are Free
      bool has_special = false, has_unknown = false;
      for (const auto& d : kFace) {
        VoxelKey nb{k.x + d[0], k.y + d[1], k.z + d[2]};
        VoxelClass c = classify(nb);
        if (c.occupancy == Occupancy::Unknown) {
          has_unknown = true;
        } else if (c.occupancy == Occupancy::Occupied && (c.is_roi || !roi_neighbor)) {
          has_special = true;
        }
        if (has_special && has_unknown) break;
      }
      if (has_special && has_unknown) out.push_back(k);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  MapParams params_;
  std::optional<Aabb> bounds_;
  std::unordered_map<VoxelKey, VoxelNode, VoxelKeyHash> nodes_;
};

}  // namespace vpp
