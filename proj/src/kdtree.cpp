#include "scene_align/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace scene_align {
namespace {
constexpr int kLeafSize = 8;

void consider(const Vec3& p, int idx, const Vec3& q, KdTree::Hit& best) {
  const double d2 = (p - q).squaredNorm();
  if (best.index < 0 || d2 < best.dist2 || (d2 == best.dist2 && idx < best.index)) {
    best.index = idx;
    best.dist2 = d2;
  }
}
}  // namespace

KdTree::Hit brute_force_nearest(std::span<const Vec3> points, const Vec3& q) {
  KdTree::Hit best;
  for (std::size_t i = 0; i < points.size(); ++i) consider(points[i], static_cast<int>(i), q, best);
  return best;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (points_.size() >= kBruteForceBelow) root_ = build(0, static_cast<int>(order_.size()));
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin <= kLeafSize) {
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  // Split on the widest axis of the range.
  Vec3 lo = points_[order_[begin]], hi = lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_[a](axis), pb = points_[b](axis);
                     return pa < pb || (pa == pb && a < b);
                   });
  node.axis = axis;
  node.split = points_[order_[mid]](axis);
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

void KdTree::search(int id, const Vec3& q, Hit& best) const {
  const Node& n = nodes_[id];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) consider(points_[order_[i]], order_[i], q, best);
    return;
  }
  const double diff = q(n.axis) - n.split;
  const int first = diff < 0 ? n.left : n.right;
  const int second = diff < 0 ? n.right : n.left;
  search(first, q, best);
  // <= keeps equal-distance candidates on the far side reachable for the
  // lowest-index tie rule.
  if (diff * diff <= best.dist2) search(second, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& q) const {
  if (points_.empty()) return {};
  if (root_ < 0) return brute_force_nearest(points_, q);
  Hit best;
  search(root_, q, best);
  return best;
}

}  // namespace scene_align
