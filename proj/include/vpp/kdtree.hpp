#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "vpp/geometry.hpp"

namespace vpp {

/// Static 3-d tree for nearest-neighbor queries over a fixed point set.
class KdTree3 {
 public:
  KdTree3() = default;

  explicit KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
    index_.resize(points_.size());
    for (std::size_t i = 0; i < index_.size(); ++i) index_[i] = static_cast<int>(i);
    if (!index_.empty()) root_ = build(0, static_cast<int>(index_.size()), 0);
  }

  bool empty() const { return points_.empty(); }

  /// Distance to the nearest point if within max_dist, otherwise nullopt.
  std::optional<double> nearest_within(const Vec3& q, double max_dist) const {
    if (empty()) return std::nullopt;
    double best_sq = max_dist * max_dist;
    bool found = false;
    search(root_, q, best_sq, found);
    if (!found) return std::nullopt;
    return std::sqrt(best_sq);
  }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1, right = -1;
  };

  int build(int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    int axis = depth % 3;
    int mid = (lo + hi) / 2;
    std::nth_element(index_.begin() + lo, index_.begin() + mid, index_.begin() + hi,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    Node n;
    n.point = index_[mid];
    n.axis = axis;
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    int left = build(lo, mid, depth + 1);
    int right = build(mid + 1, hi, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search(int node, const Vec3& q, double& best_sq, bool& found) const {
    if (node < 0) return;
    const Node& n = nodes_[node];
    const Vec3& p = points_[n.point];
    double dsq = (p - q).squaredNorm();
    if (dsq <= best_sq) {
      best_sq = dsq;
      found = true;
    }
    double delta = q[n.axis] - p[n.axis];
    int near = delta < 0.0 ? n.left : n.right;
    int far = delta < 0.0 ? n.right : n.left;
    search(near, q, best_sq, found);
    if (delta * delta <= best_sq) search(far, q, best_sq, found);
  }

  std::vector<Vec3> points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace vpp
