#pragma once

#include <span>
#include <vector>

#include "scene_align/geometry.hpp"

namespace scene_align {

// Static 3D kd-tree for nearest-neighbor queries. Small sets are searched
// exhaustively. Ties resolve to the lowest point index.
class KdTree {
 public:
  static constexpr std::size_t kBruteForceBelow = 200;

  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  struct Hit {
    int index = -1;
    double dist2 = 0;
  };
  Hit nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;      // -1 for leaves
    double split = 0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Exhaustive nearest neighbor; the reference the tree must agree with.
KdTree::Hit brute_force_nearest(std::span<const Vec3> points, const Vec3& q);

}  // namespace scene_align
