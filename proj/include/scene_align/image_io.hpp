#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "scene_align/geometry.hpp"

namespace scene_align {

namespace fs = std::filesystem;

// 16-bit grayscale PNG, millimeters, 0 = missing.
DepthImage read_depth_png(const fs::path& path);
void write_depth_png(const fs::path& path, const DepthImage& depth);

// 8-bit grayscale PNG, nonzero = set.
Mask read_mask_png(const fs::path& path);
void write_mask_png(const fs::path& path, const Mask& mask);

// 8-bit RGB PNG for the angle bytes plus a 1-channel validity PNG.
void write_normal_png(const fs::path& rgb_path, const fs::path& valid_path,
                      const NormalImage& img);
NormalImage read_normal_png(const fs::path& rgb_path, const fs::path& valid_path);

// Camera document: fx, fy, cx, cy, width, height, disparity_constant,
// gravity [3], floor_height.
struct CameraSetup {
  CameraIntrinsics intrinsics;
  GeocentricFrame frame;
};

CameraSetup camera_from_json(const nlohmann::json& j);
nlohmann::json camera_to_json(const CameraSetup& cam);
CameraSetup load_camera(const fs::path& path);

nlohmann::json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const nlohmann::json& j);

}  // namespace scene_align
