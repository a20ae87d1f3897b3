#include "scene_align/boxes3d.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scene_align/error.hpp"

namespace scene_align {

namespace {
constexpr double kMinHalfWidth = 0.5e-6;

Vec2 rotate(const Vec2& p, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}
}  // namespace

bool OrientedBox3D::contains(const Vec3& p, double tol) const {
  const Vec3 local = yaw_rotation(-yaw) * (p - center);
  return (local.cwiseAbs() - half_extents).maxCoeff() <= tol;
}

void OrientedBox3D::validate() const {
  if (!(half_extents.minCoeff() > 0)) throw InputError("box: half extents must be positive");
  if (!center.allFinite() || !std::isfinite(yaw)) throw InputError("box: non-finite value");
}

std::vector<Vec2> convex_hull(std::span<const Vec2> points) {
  std::vector<Vec2> p(points.begin(), points.end());
  std::sort(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Vec2> hull(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
    hull[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
    hull[k++] = p[i];
  }
  hull.resize(k - 1);
  return hull;
}

double rect_area_at(std::span<const Vec2> points, double yaw) {
  double lo_u = INFINITY, hi_u = -INFINITY, lo_v = INFINITY, hi_v = -INFINITY;
  for (const auto& p : points) {
    const Vec2 q = rotate(p, -yaw);
    lo_u = std::min(lo_u, q.x());
    hi_u = std::max(hi_u, q.x());
    lo_v = std::min(lo_v, q.y());
    hi_v = std::max(hi_v, q.y());
  }
  return (hi_u - lo_u) * (hi_v - lo_v);
}

namespace {
Rect2D rect_at(std::span<const Vec2> points, double yaw) {
  double lo_u = INFINITY, hi_u = -INFINITY, lo_v = INFINITY, hi_v = -INFINITY;
  for (const auto& p : points) {
    const Vec2 q = rotate(p, -yaw);
    lo_u = std::min(lo_u, q.x());
    hi_u = std::max(hi_u, q.x());
    lo_v = std::min(lo_v, q.y());
    hi_v = std::max(hi_v, q.y());
  }
  Rect2D r;
  r.yaw = yaw;
  r.center = rotate(Vec2(0.5 * (lo_u + hi_u), 0.5 * (lo_v + hi_v)), yaw);
  r.half_extents = {0.5 * (hi_u - lo_u), 0.5 * (hi_v - lo_v)};
  return r;
}
}  // namespace

Rect2D min_area_rect(std::span<const Vec2> points) {
  if (points.empty()) throw InputError("min_area_rect: no points");
  const auto hull = convex_hull(points);
  constexpr double kQuarter = std::numbers::pi / 2;

  // Every hull edge direction, folded into [0, pi/2), is a candidate; the
  // optimum has a side collinear with some hull edge.
  std::vector<double> candidates{0.0};
  for (std::size_t i = 0; i < hull.size() && hull.size() > 1; ++i) {
    const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
    double a = std::fmod(std::atan2(e.y(), e.x()), kQuarter);
    if (a < 0) a += kQuarter;
    if (a >= kQuarter) a -= kQuarter;
    candidates.push_back(a);
  }
  std::sort(candidates.begin(), candidates.end());

  Rect2D best = rect_at(hull, candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const Rect2D r = rect_at(hull, candidates[i]);
    if (r.area() < best.area()) best = r;  // strict: ties keep the smaller yaw
  }
  best.half_extents = best.half_extents.cwiseMax(Vec2(kMinHalfWidth, kMinHalfWidth));
  return best;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw InputError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(values.size() - 1, lo + 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

OrientedBox3D box_from_points(std::span<const Vec3> world, double floor_height, double delta) {
  if (world.empty()) throw InputError("box_from_points: no points");
  if (!(delta >= 0 && delta < 50)) throw InputError("box_from_points: delta must be in [0, 50)");
  std::vector<Vec2> top;
  std::vector<double> xs, ys, heights;
  for (const auto& p : world) {
    top.push_back(top_view(p));
    xs.push_back(top.back().x());
    ys.push_back(top.back().y());
    heights.push_back(p.y());
  }
  const double x_lo = percentile(xs, delta), x_hi = percentile(xs, 100 - delta);
  const double y_lo = percentile(ys, delta), y_hi = percentile(ys, 100 - delta);
  std::vector<Vec2> trimmed;
  for (const auto& q : top)
    if (q.x() >= x_lo && q.x() <= x_hi && q.y() >= y_lo && q.y() <= y_hi) trimmed.push_back(q);
  if (trimmed.empty()) trimmed = top;

  const double yaw = min_area_rect(trimmed).yaw;
  std::vector<double> us, vs;
  for (const auto& q : top) {
    const Vec2 r = rotate(q, -yaw);
    us.push_back(r.x());
    vs.push_back(r.y());
  }
  const double u_lo = percentile(us, delta), u_hi = percentile(us, 100 - delta);
  const double v_lo = percentile(vs, delta), v_hi = percentile(vs, 100 - delta);
  const double top_h = std::max(percentile(heights, 100 - delta), floor_height + 2 * kMinHalfWidth);

  const Vec2 c2 = rotate(Vec2(0.5 * (u_lo + u_hi), 0.5 * (v_lo + v_hi)), yaw);
  OrientedBox3D box;
  box.yaw = yaw;
  box.center = {c2.x(), 0.5 * (floor_height + top_h), -c2.y()};
  box.half_extents = {std::max(0.5 * (u_hi - u_lo), kMinHalfWidth), 0.5 * (top_h - floor_height),
                      std::max(0.5 * (v_hi - v_lo), kMinHalfWidth)};
  return box;
}

OrientedBox3D box_from_segment(const Mask& mask, const DepthImage& depth, const CameraIntrinsics& k,
                               const GeocentricFrame& frame, double delta) {
  const PointCloud pts = backproject(depth, k, &mask, &frame);
  if (pts.empty()) throw InputError("box_from_segment: mask has no valid depth");
  return box_from_points(pts.points, frame.floor_height, delta);
}

OrientedBox3D box_from_model(const TriangleMesh& mesh, const Placement& placement) {
  placement.validate();
  const Mat3 inv = yaw_rotation(-placement.yaw);
  Vec3 lo = Vec3::Constant(INFINITY), hi = Vec3::Constant(-INFINITY);
  for (const auto& v : mesh.canonical_vertices()) {
    const Vec3 local = inv * placement.apply(v);
    lo = lo.cwiseMin(local);
    hi = hi.cwiseMax(local);
  }
  OrientedBox3D box;
  box.yaw = wrap_angle(placement.yaw);
  box.center = yaw_rotation(placement.yaw) * (0.5 * (lo + hi));
  box.half_extents = (0.5 * (hi - lo)).cwiseMax(Vec3::Constant(kMinHalfWidth));
  return box;
}

std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip) {
  std::vector<Vec2> out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Vec2& a = clip[i];
    const Vec2& b = clip[(i + 1) % clip.size()];
    std::vector<Vec2> in = std::move(out);
    out.clear();
    for (std::size_t j = 0; j < in.size(); ++j) {
      const Vec2& p = in[j];
      const Vec2& q = in[(j + 1) % in.size()];
      const double dp = cross(a, b, p), dq = cross(a, b, q);
      if (dp >= 0) out.push_back(p);
      if ((dp >= 0) != (dq >= 0)) out.push_back(p + (dp / (dp - dq)) * (q - p));
    }
  }
  return out;
}

double polygon_area(std::span<const Vec2> poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

std::vector<Vec2> footprint(const OrientedBox3D& b) {
  // Local x maps to (cos, sin) in the top view and local z to (sin, -cos).
  const Vec2 c = top_view(b.center);
  const Vec2 u = rotate(Vec2(b.half_extents.x(), 0), b.yaw);
  const Vec2 v = rotate(Vec2(0, b.half_extents.z()), b.yaw);
  return {c - u - v, c + u - v, c + u + v, c - u + v};
}

double box_iou3d(const OrientedBox3D& a, const OrientedBox3D& b) {
  const double area = polygon_area(clip_convex(footprint(a), footprint(b)));
  const double lo = std::max(a.center.y() - a.half_extents.y(), b.center.y() - b.half_extents.y());
  const double hi = std::min(a.center.y() + a.half_extents.y(), b.center.y() + b.half_extents.y());
  const double inter = area * std::max(0.0, hi - lo);
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

nlohmann::json box_to_json(const OrientedBox3D& b) {
  return {{"yaw", b.yaw},
          {"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"half_extents", {b.half_extents.x(), b.half_extents.y(), b.half_extents.z()}}};
}

OrientedBox3D box_from_json(const nlohmann::json& j) {
  OrientedBox3D b;
  try {
    b.yaw = j.at("yaw").get<double>();
    const auto c = j.at("center").get<std::vector<double>>();
    const auto h = j.at("half_extents").get<std::vector<double>>();
    if (c.size() != 3 || h.size() != 3) throw InputError("box: center and half_extents need 3 values");
    b.center = {c[0], c[1], c[2]};
    b.half_extents = {h[0], h[1], h[2]};
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("box JSON: ") + e.what());
  }
  b.validate();
  return b;
}

}  // namespace scene_align
