#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "scene_align/geometry.hpp"
#include "scene_align/mesh.hpp"
#include "scene_align/shapes.hpp"
#include "scene_align/synthgen.hpp"

namespace test_support {

using namespace scene_align;

// Quarter-VGA-ish sensor, level camera 1.2 m above the floor.
inline CameraIntrinsics small_camera(int width = 160, int height = 120) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = k.fy = 140.0 * width / 160.0;
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  return k;
}

inline GeocentricFrame level_frame(double floor = -1.2) {
  GeocentricFrame f;
  f.gravity = {0, -1, 0};
  f.floor_height = floor;
  return f;
}

inline DepthImage constant_depth(const CameraIntrinsics& k, double z) {
  DepthImage d(k.width, k.height);
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) d.set(u, v, z);
  return d;
}

inline ModelLibrary small_library() {
  ModelLibrary lib;
  lib.add({"chair", "chair_a", shapes::chair(0.5, 0.5, 0.45, 0.9)});
  lib.add({"chair", "chair_b", shapes::chair(0.45, 0.55, 0.5, 0.8)});
  lib.add({"table", "table_a", shapes::table(1.2, 0.7, 0.75)});
  lib.add({"table", "table_b", shapes::table(0.9, 0.9, 0.72)});
  return lib;
}

inline StatsTable small_stats() {
  StatsTable s;
  s["chair"] = {0.25, 0.03, 1.8, 3.0};
  s["table"] = {0.8, 0.1, 2.2, 3.2};
  return s;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("scene_align_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace test_support
