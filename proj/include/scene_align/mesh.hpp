#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "scene_align/geometry.hpp"

namespace scene_align {

// Model-frame geometry. Model y is up; `front` is the horizontal direction the
// model faces, which defines azimuth zero.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  Vec3 front = Vec3::UnitZ();

  // Vertices rotated about model y so that `front` maps to +z.
  std::vector<Vec3> canonical_vertices() const;
  void validate() const;
};

// Drops triangles with out-of-range indices or zero area.
void remove_degenerate(TriangleMesh& mesh);

// Wavefront OBJ subset: `v` and `f` records; polygons are fan-triangulated.
TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

// Rotation by `yaw` radians about the world up axis (+y).
Mat3 yaw_rotation(double yaw);
// Rotation by `angle` radians about an arbitrary unit axis.
Mat3 axis_rotation(const Vec3& axis, double angle);
// Wraps into (-pi, pi].
double wrap_angle(double a);

// World placement of a canonical model: v -> R_y(yaw) * (scale * v) + translation.
struct Placement {
  double scale = 1.0;
  double yaw = 0.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& canonical) const {
    return yaw_rotation(yaw) * (scale * canonical) + translation;
  }
  void validate() const;
};

struct LibraryEntry {
  std::string category;
  std::string name;
  TriangleMesh mesh;
};

class ModelLibrary {
 public:
  void add(LibraryEntry e) { entries_.push_back(std::move(e)); }
  const std::vector<LibraryEntry>& entries() const { return entries_; }
  // Categories in order of first appearance.
  std::vector<std::string> categories() const;
  std::vector<const LibraryEntry*> models(const std::string& category) const;
  const LibraryEntry& find(const std::string& name) const;
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<LibraryEntry> entries_;
};

// Manifest JSON: [{category, name, path, front:[3]}]; relative paths resolve
// against the manifest's directory.
ModelLibrary load_library(const std::filesystem::path& manifest);

}  // namespace scene_align
