#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "scene_align/grid.hpp"

namespace scene_align {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Pinhole camera. Pixel (u, v) has its center at integer coordinates; the
// camera frame is x right, y down, z forward.
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  // Disparity d = C / z, in meter * disparity-units.
  double disparity_constant = 315.0;

  void validate() const;
  Vec3 backproject(double u, double v, double z) const {
    return {(u - cx) * z / fx, (v - cy) * z / fy, z};
  }
  Vec2 project(const Vec3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
};

double disparity(double z, const CameraIntrinsics& k);

// The world frame used throughout: x and z span the floor plane, y is up
// (along gravity's opposite, i.e. the given `gravity` up vector). The origin
// is the camera center. All points handed between modules are in this frame
// unless a function says otherwise.
struct GeocentricFrame {
  Vec3 gravity{0, -1, 0};  // up direction, in camera coordinates
  double floor_height = 0;  // floor plane height along `gravity`

  void validate() const;

  // Columns are the world x, y (up), z axes expressed in camera coordinates.
  // x is camera x projected onto the floor plane (camera z if degenerate).
  Mat3 axes() const;
  Vec3 world_from_camera(const Vec3& p) const { return axes().transpose() * p; }
  Vec3 camera_from_world(const Vec3& w) const { return axes() * w; }
};

// Depth in meters; missing pixels are stored as 0 and flagged in valid().
class DepthImage {
 public:
  DepthImage() = default;
  DepthImage(int width, int height);

  int width() const { return depth_.width(); }
  int height() const { return depth_.height(); }
  bool valid(int u, int v) const { return valid_(u, v) != 0; }
  double at(int u, int v) const { return depth_(u, v); }
  // z <= 0 or non-finite marks the pixel missing.
  void set(int u, int v, double z);
  void clear(int u, int v) { set(u, v, 0.0); }

  const Grid<double>& values() const { return depth_; }
  const Mask& valid_mask() const { return valid_; }
  std::size_t valid_count() const { return count(valid_); }

  bool operator==(const DepthImage&) const = default;

 private:
  Grid<double> depth_;
  Mask valid_;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> pixel;  // source pixel index (v * width + u), if any
  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

// One point per valid pixel of `mask` (all pixels if no mask). Points are in
// camera coordinates, or world coordinates when a frame is given.
PointCloud backproject(const DepthImage& depth, const CameraIntrinsics& k,
                       const Mask* mask = nullptr,
                       const GeocentricFrame* frame = nullptr);

// Per-pixel unit normals in camera coordinates.
struct NormalField {
  Grid<Vec3> normal;
  Mask valid;
};

struct NormalOptions {
  int window_radius = 3;
  // Neighbors whose depth differs from the center by more than this fraction
  // of the center depth are excluded from the fit.
  double max_relative_jump = 0.05;
  int min_neighbors = 4;
};

NormalField estimate_normals(const DepthImage& depth, const CameraIntrinsics& k,
                             const NormalOptions& opt = {});

using Rgb8 = std::array<std::uint8_t, 3>;

// Three bytes per pixel: angle (degrees) of the normal with the world x, y, z
// axes, shifted by +38 so that 90 degrees lands on byte 128.
struct NormalImage {
  Grid<Rgb8> bytes;
  Mask valid;

  int width() const { return bytes.width(); }
  int height() const { return bytes.height(); }
  bool operator==(const NormalImage&) const = default;
};

constexpr double kAngleByteShift = 38.0;

std::uint8_t encode_angle(double degrees);
double decode_angle(std::uint8_t byte);

NormalImage encode_normal_image(const NormalField& normals,
                                const GeocentricFrame& frame);

enum class Resample { kNearest, kBilinear };

// Resamples `box` to out_size x out_size. Samples outside the image (or whose
// contributing neighbors are all invalid) come out invalid with byte 0.
NormalImage crop_and_warp(const NormalImage& img, const PixelBox& box,
                          int out_size, Resample mode = Resample::kBilinear);

}  // namespace scene_align
