#include "scene_align/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scene_align/error.hpp"

namespace scene_align {
namespace {

struct ScreenVertex {
  double x, y;   // pixel coordinates
  double inv_z;  // 1 / camera depth
};

double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// With positive signed area under `edge`, the interior lies where edge() > 0:
// below a rightward horizontal edge (a top edge, y grows downward) and right
// of an upward edge (a left edge).
bool top_left(const ScreenVertex& a, const ScreenVertex& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  return (dy == 0 && dx > 0) || dy < 0;
}

// Clips a camera-space polygon against z >= near.
std::vector<Vec3> clip_near(const std::array<Vec3, 3>& tri, double near_plane) {
  std::vector<Vec3> out;
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = tri[i];
    const Vec3& b = tri[(i + 1) % 3];
    const bool ain = a.z() >= near_plane, bin = b.z() >= near_plane;
    if (ain) out.push_back(a);
    if (ain != bin) {
      const double t = (near_plane - a.z()) / (b.z() - a.z());
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

void raster_triangle(const std::array<Vec3, 3>& cam, const Vec3& normal, const CameraIntrinsics& k,
                     RenderOutput& out) {
  std::array<ScreenVertex, 3> s;
  for (int i = 0; i < 3; ++i) {
    const Vec2 px = k.project(cam[i]);
    s[i] = {px.x(), px.y(), 1.0 / cam[i].z()};
  }
  double area = edge(s[0], s[1], s[2].x, s[2].y);
  if (area == 0 || !std::isfinite(area)) return;
  if (area < 0) {
    std::swap(s[1], s[2]);
    area = -area;
  }

  const int w = k.width, h = k.height;
  const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({s[0].x, s[1].x, s[2].x}))));
  const int u1 = std::min(w - 1, static_cast<int>(std::floor(std::max({s[0].x, s[1].x, s[2].x}))));
  const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({s[0].y, s[1].y, s[2].y}))));
  const int v1 = std::min(h - 1, static_cast<int>(std::floor(std::max({s[0].y, s[1].y, s[2].y}))));
  const bool tl0 = top_left(s[1], s[2]), tl1 = top_left(s[2], s[0]), tl2 = top_left(s[0], s[1]);

  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const double e0 = edge(s[1], s[2], u, v);
      const double e1 = edge(s[2], s[0], u, v);
      const double e2 = edge(s[0], s[1], u, v);
      if (e0 < 0 || e1 < 0 || e2 < 0) continue;
      if ((e0 == 0 && !tl0) || (e1 == 0 && !tl1) || (e2 == 0 && !tl2)) continue;
      const double inv_z = (e0 * s[0].inv_z + e1 * s[1].inv_z + e2 * s[2].inv_z) / area;
      if (!(inv_z > 0)) continue;
      const double z = 1.0 / inv_z;
      if (out.mask(u, v) && out.depth.at(u, v) <= z) continue;
      out.depth.set(u, v, z);
      out.mask(u, v) = 1;
      if (out.normals) {
        out.normals->normal(u, v) = normal;
        out.normals->valid(u, v) = 1;
      }
    }
  }
}

}  // namespace

RenderOutput empty_render(const CameraIntrinsics& k, bool with_normals) {
  RenderOutput out{DepthImage(k.width, k.height), Mask(k.width, k.height, 0), std::nullopt};
  if (with_normals)
    out.normals = NormalField{Grid<Vec3>(k.width, k.height, Vec3::Zero()), Mask(k.width, k.height, 0)};
  return out;
}

void rasterize_world(const std::vector<Vec3>& world_vertices,
                     const std::vector<std::array<int, 3>>& triangles,
                     const GeocentricFrame& frame, const CameraIntrinsics& k,
                     const RenderOptions& opt, RenderOutput& out) {
  const Mat3 axes = frame.axes();
  std::vector<Vec3> cam(world_vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = axes * world_vertices[i];

  for (const auto& t : triangles) {
    const std::array<Vec3, 3> tri{cam[t[0]], cam[t[1]], cam[t[2]]};
    Vec3 n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
    if (n.norm() == 0) continue;
    n.normalize();
    if (n.dot(tri[0]) > 0) n = -n;

    if (tri[0].z() >= opt.near_plane && tri[1].z() >= opt.near_plane && tri[2].z() >= opt.near_plane) {
      raster_triangle(tri, n, k, out);
      continue;
    }
    const auto poly = clip_near(tri, opt.near_plane);
    for (std::size_t i = 2; i < poly.size(); ++i) raster_triangle({poly[0], poly[i - 1], poly[i]}, n, k, out);
  }
}

RenderOutput render(const TriangleMesh& mesh, const Placement& p, const GeocentricFrame& frame,
                    const CameraIntrinsics& k, const RenderOptions& opt) {
  p.validate();
  RenderOutput out = empty_render(k, opt.with_normals);
  std::vector<Vec3> world = mesh.canonical_vertices();
  for (auto& v : world) v = p.apply(v);
  rasterize_world(world, mesh.triangles, frame, k, opt, out);
  return out;
}

RenderOutput composite(const RenderOutput& front, const RenderOutput& back) {
  const int w = front.depth.width(), h = front.depth.height();
  if (back.depth.width() != w || back.depth.height() != h)
    throw InputError("composite: size mismatch");
  RenderOutput out = back;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!front.mask(u, v)) {
        out.mask(u, v) = 0;
        continue;
      }
      if (back.mask(u, v) && back.depth.at(u, v) < front.depth.at(u, v)) {
        out.mask(u, v) = 0;
        continue;
      }
      out.depth.set(u, v, front.depth.at(u, v));
      out.mask(u, v) = 1;
      if (out.normals && front.normals) {
        out.normals->normal(u, v) = front.normals->normal(u, v);
        out.normals->valid(u, v) = 1;
      }
    }
  }
  return out;
}

double top_view_area(const TriangleMesh& mesh, double s) {
  if (mesh.vertices.empty()) throw InputError("top_view_area: empty mesh");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double zmin = xmin, zmax = -xmin;
  for (const auto& v : mesh.canonical_vertices()) {
    xmin = std::min(xmin, v.x());
    xmax = std::max(xmax, v.x());
    zmin = std::min(zmin, v.z());
    zmax = std::max(zmax, v.z());
  }
  return s * s * (xmax - xmin) * (zmax - zmin);
}

double scale_to_area(const TriangleMesh& mesh, double target_area) {
  if (!(target_area > 0)) throw InputError("scale_to_area: target area must be positive");
  const double base = top_view_area(mesh, 1.0);
  if (!(base > 0)) throw InputError("scale_to_area: mesh has zero footprint");
  return std::sqrt(target_area / base);
}

}  // namespace scene_align
