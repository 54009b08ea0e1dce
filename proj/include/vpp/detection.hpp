#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <set>
#include <vector>

#include "vpp/scene.hpp"

namespace vpp {

struct DetectionConfig {
  int min_cluster_px = 4;       // components below this are noise
  double match_min_frac = 0.25;  // min cluster size for matching, relative to the reference
};

struct PixelCluster {
  int pixel_count = 0;
  Eigen::Vector2d centroid_px = Eigen::Vector2d::Zero();
  std::set<int> fruit_ids;          // ground-truth ids, diagnostics only
  std::vector<int> pixel_indices;   // linear indices into the source image
};

/// 4-connected components of Fruit-labeled pixels; components smaller than
/// min_cluster_px are discarded. Scan order makes the result deterministic.
inline std::vector<PixelCluster> detect_clusters(const LabeledImage& img,
                                                 int min_cluster_px = 4) {
  const int w = img.width, h = img.height;
  std::vector<bool> seen(static_cast<std::size_t>(w) * h, false);
  std::vector<PixelCluster> out;
  std::deque<int> queue;
  for (int start = 0; start < w * h; ++start) {
    if (seen[start] || img.pixels[start].label != PixelLabel::Fruit) continue;
    PixelCluster cluster;
    double sx = 0.0, sy = 0.0;
    seen[start] = true;
    queue.push_back(start);
    while (!queue.empty()) {
      int idx = queue.front();
      queue.pop_front();
      int x = idx % w, y = idx / w;
      cluster.pixel_indices.push_back(idx);
      cluster.fruit_ids.insert(img.pixels[idx].fruit_id);
      sx += x;
      sy += y;
      const int nbs[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (const auto& nb : nbs) {
        if (nb[0] < 0 || nb[0] >= w || nb[1] < 0 || nb[1] >= h) continue;
        int nidx = nb[1] * w + nb[0];
        if (seen[nidx] || img.pixels[nidx].label != PixelLabel::Fruit) continue;
        seen[nidx] = true;
        queue.push_back(nidx);
      }
    }
    cluster.pixel_count = static_cast<int>(cluster.pixel_indices.size());
    if (cluster.pixel_count < min_cluster_px) continue;
    cluster.centroid_px = {sx / cluster.pixel_count, sy / cluster.pixel_count};
    out.push_back(std::move(cluster));
  }
  return out;
}

/// Cross-camera association of one target across the array; entry 0 is the
/// reference camera. Null entries mean no acceptable match in that frame.
struct TargetMatch {
  static constexpr int reference_index = 0;
  std::array<const PixelCluster*, 9> per_camera{};
};

/// Largest cluster; ties resolved toward the image center, then scan order.
inline const PixelCluster* select_reference_target(const std::vector<PixelCluster>& clusters,
                                                   int width, int height) {
  const Eigen::Vector2d center(0.5 * (width - 1), 0.5 * (height - 1));
  const PixelCluster* best = nullptr;
  double best_center_d = kInf;
  for (const PixelCluster& c : clusters) {
    double d = (c.centroid_px - center).squaredNorm();
    if (best == nullptr || c.pixel_count > best->pixel_count ||
        (c.pixel_count == best->pixel_count && d < best_center_d)) {
      best = &c;
      best_center_d = d;
    }
  }
  return best;
}

/// Among clusters at least min_size pixels big, the one whose centroid is
/// closest to the reference cluster's.
inline const PixelCluster* match_target(const PixelCluster& ref,
                                        const std::vector<PixelCluster>& clusters,
                                        double min_size) {
  const PixelCluster* best = nullptr;
  double best_d = kInf;
  for (const PixelCluster& c : clusters) {
    if (c.pixel_count < min_size) continue;
    double d = (c.centroid_px - ref.centroid_px).squaredNorm();
    if (d < best_d) {
      best = &c;
      best_d = d;
    }
  }
  return best;
}

/// Target size objective: matched cluster pixels normalized by image area,
/// 0 when there is no match.
inline double objective(const LabeledImage& img, const PixelCluster* matched) {
  if (matched == nullptr) return 0.0;
  return static_cast<double>(matched->pixel_count) /
         (static_cast<double>(img.width) * img.height);
}

}  // namespace vpp
