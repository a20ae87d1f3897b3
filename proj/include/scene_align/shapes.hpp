#pragma once

#include "scene_align/mesh.hpp"

namespace scene_align::shapes {

// Axis-aligned box in model coordinates.
TriangleMesh box(const Vec3& center, const Vec3& half_extents);
TriangleMesh sphere(const Vec3& center, double radius, int rings = 24, int segments = 48);
// Concatenates meshes; keeps the first mesh's front.
TriangleMesh merge(const std::vector<TriangleMesh>& parts);

// Simple furniture, feet at y = 0, footprint centered on the origin, facing +z.
// Dimensions in meters.
TriangleMesh chair(double width, double depth, double seat_height, double back_height);
TriangleMesh table(double width, double depth, double height);
TriangleMesh bed(double width, double length, double height, double headboard);

// Large horizontal square at world height `height`, centered below the camera.
TriangleMesh floor_plane(double height, double half_size = 50.0);

}  // namespace scene_align::shapes
