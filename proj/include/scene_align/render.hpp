#pragma once

#include <optional>

#include "scene_align/geometry.hpp"
#include "scene_align/mesh.hpp"

namespace scene_align {

struct RenderOutput {
  DepthImage depth;
  Mask mask;
  // Face normals in camera coordinates, oriented toward the camera.
  std::optional<NormalField> normals;
};

struct RenderOptions {
  double near_plane = 0.05;  // meters
  bool with_normals = false;
};

// Z-buffer rasterization of the placed mesh at sensor resolution. A pixel is
// covered when its center lies inside the projected triangle (top-left rule
// on ties); depth is interpolated perspective-correctly. No back-face culling.
RenderOutput render(const TriangleMesh& mesh, const Placement& p, const GeocentricFrame& frame,
                    const CameraIntrinsics& k, const RenderOptions& opt = {});

// Rasterizes world-space triangles into an existing buffer, keeping the nearest
// surface. `out` must already be sized to the camera.
void rasterize_world(const std::vector<Vec3>& world_vertices,
                     const std::vector<std::array<int, 3>>& triangles,
                     const GeocentricFrame& frame, const CameraIntrinsics& k,
                     const RenderOptions& opt, RenderOutput& out);

RenderOutput empty_render(const CameraIntrinsics& k, bool with_normals = false);

// Per pixel, keeps whichever of the two renders is nearer. Mask bits follow
// the winning layer (so `front`'s mask shows only where it is visible).
RenderOutput composite(const RenderOutput& front, const RenderOutput& back);

// Area of the axis-aligned footprint rectangle of the canonical mesh at scale s.
double top_view_area(const TriangleMesh& mesh, double s);

// Scale giving the requested footprint area.
double scale_to_area(const TriangleMesh& mesh, double target_area);

}  // namespace scene_align
