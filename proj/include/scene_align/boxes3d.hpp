#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "scene_align/geometry.hpp"
#include "scene_align/mesh.hpp"

namespace scene_align {

// Gravity-aligned box in world coordinates: rotated by `yaw` about +y.
// half_extents are along the box's local x, y (vertical), z axes.
struct OrientedBox3D {
  double yaw = 0;
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();

  double volume() const { return 8 * half_extents.prod(); }
  bool contains(const Vec3& p, double tol = 1e-9) const;
  void validate() const;
};

// Floor-plane coordinates of a world point: (x, -z), so a positive yaw is a
// counter-clockwise rotation in the plane.
inline Vec2 top_view(const Vec3& w) { return {w.x(), -w.z()}; }

struct Rect2D {
  double yaw = 0;  // in [0, pi/2)
  Vec2 center = Vec2::Zero();
  Vec2 half_extents = Vec2::Zero();  // along (cos yaw, sin yaw) and its normal
  double area() const { return 4 * half_extents.x() * half_extents.y(); }
};

// Counter-clockwise convex hull (monotone chain), collinear points dropped.
std::vector<Vec2> convex_hull(std::span<const Vec2> points);

// Area of the axis-aligned bounding rectangle of the points after rotating the
// frame by -yaw; the objective the min-area search minimizes.
double rect_area_at(std::span<const Vec2> points, double yaw);

// Minimum-area enclosing rectangle by rotating calipers over the hull edges.
// Zero widths are widened to 1e-6.
Rect2D min_area_rect(std::span<const Vec2> points);

// Linear interpolation between order statistics; pct in [0, 100].
double percentile(std::vector<double> values, double pct);

// Box around world points: percentile trimming in the floor plane, min-area
// yaw on the trimmed points, extents from the [delta, 100-delta] percentiles
// of the rotated coordinates, bottom on the floor, top at the (100-delta)
// height percentile.
OrientedBox3D box_from_points(std::span<const Vec3> world, double floor_height, double delta = 2.0);

OrientedBox3D box_from_segment(const Mask& mask, const DepthImage& depth, const CameraIntrinsics& k,
                               const GeocentricFrame& frame, double delta = 2.0);

// Tight box of the placed mesh's vertices at the placement's yaw.
OrientedBox3D box_from_model(const TriangleMesh& mesh, const Placement& placement);

// Convex polygon clipping (Sutherland-Hodgman); both inputs counter-clockwise.
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip);
double polygon_area(std::span<const Vec2> poly);
std::vector<Vec2> footprint(const OrientedBox3D& b);

double box_iou3d(const OrientedBox3D& a, const OrientedBox3D& b);

nlohmann::json box_to_json(const OrientedBox3D& b);
OrientedBox3D box_from_json(const nlohmann::json& j);

}  // namespace scene_align
