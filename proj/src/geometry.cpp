#include "scene_align/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "scene_align/error.hpp"

namespace scene_align {

double box_iou(const PixelBox& a, const PixelBox& b) {
  PixelBox inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0),
                 std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  const double i = static_cast<double>(inter.area());
  const double u = static_cast<double>(a.area() + b.area()) - i;
  return u > 0 ? i / u : 0.0;
}

PixelBox mask_bounds(const Mask& m) {
  PixelBox box{m.width(), m.height(), 0, 0};
  bool any = false;
  for (int v = 0; v < m.height(); ++v)
    for (int u = 0; u < m.width(); ++u)
      if (m(u, v)) {
        any = true;
        box.x0 = std::min(box.x0, u);
        box.y0 = std::min(box.y0, v);
        box.x1 = std::max(box.x1, u + 1);
        box.y1 = std::max(box.y1, v + 1);
      }
  return any ? box : PixelBox{};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0 && fy > 0)) throw InputError("camera: fx and fy must be positive");
  if (width <= 0 || height <= 0) throw InputError("camera: image size must be positive");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
    throw InputError("camera: principal point must lie inside the image");
  if (!(disparity_constant > 0)) throw InputError("camera: disparity_constant must be positive");
}

double disparity(double z, const CameraIntrinsics& k) {
  if (!(z > 0) || !std::isfinite(z)) return std::numeric_limits<double>::quiet_NaN();
  return k.disparity_constant / z;
}

void GeocentricFrame::validate() const {
  if (!gravity.allFinite() || std::abs(gravity.norm() - 1.0) > 1e-9)
    throw InputError("frame: gravity must be a unit vector");
  if (!std::isfinite(floor_height)) throw InputError("frame: floor_height must be finite");
}

Mat3 GeocentricFrame::axes() const {
  const Vec3 up = gravity;
  Vec3 x = Vec3::UnitX() - up.dot(Vec3::UnitX()) * up;
  if (x.norm() < 1e-6) x = Vec3::UnitZ() - up.dot(Vec3::UnitZ()) * up;
  x.normalize();
  Mat3 r;
  r.col(0) = x;
  r.col(1) = up;
  r.col(2) = x.cross(up);
  return r;
}

DepthImage::DepthImage(int width, int height)
    : depth_(width, height, 0.0), valid_(width, height, 0) {}

void DepthImage::set(int u, int v, double z) {
  const bool ok = z > 0 && std::isfinite(z);
  depth_(u, v) = ok ? z : 0.0;
  valid_(u, v) = ok ? 1 : 0;
}

PointCloud backproject(const DepthImage& depth, const CameraIntrinsics& k,
                       const Mask* mask, const GeocentricFrame* frame) {
  PointCloud cloud;
  const Mat3 rot = frame ? Mat3(frame->axes().transpose()) : Mat3(Mat3::Identity());
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      if (mask && !(*mask)(u, v)) continue;
      if (!depth.valid(u, v)) continue;
      const Vec3 p = k.backproject(u, v, depth.at(u, v));
      cloud.points.push_back(frame ? Vec3(rot * p) : p);
      cloud.pixel.push_back(v * depth.width() + u);
    }
  }
  return cloud;
}

NormalField estimate_normals(const DepthImage& depth, const CameraIntrinsics& k,
                             const NormalOptions& opt) {
  if (opt.window_radius < 1) throw InputError("estimate_normals: window_radius must be >= 1");
  const int w = depth.width(), h = depth.height();
  NormalField out{Grid<Vec3>(w, h, Vec3::Zero()), Mask(w, h, 0)};
  const int r = opt.window_radius;

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!depth.valid(u, v)) continue;
      const double z0 = depth.at(u, v);
      const double jump = opt.max_relative_jump * z0;

      Vec3 sum = Vec3::Zero();
      Mat3 outer = Mat3::Zero();
      int n = 0;
      for (int dv = -r; dv <= r; ++dv) {
        for (int du = -r; du <= r; ++du) {
          const int uu = u + du, vv = v + dv;
          if (!depth.values().contains(uu, vv) || !depth.valid(uu, vv)) continue;
          const double z = depth.at(uu, vv);
          if (std::abs(z - z0) > jump) continue;
          // Relative to the center point for conditioning.
          const Vec3 p = k.backproject(uu, vv, z) - k.backproject(u, v, z0);
          sum += p;
          outer += p * p.transpose();
          ++n;
        }
      }
      if (n < std::max(3, opt.min_neighbors)) continue;

      const Vec3 mean = sum / n;
      const Mat3 cov = outer / n - mean * mean.transpose();
      Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
      const Vec3 ev = eig.eigenvalues();  // ascending
      if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300))) continue;  // rank < 2

      Vec3 normal = eig.eigenvectors().col(0).normalized();
      const Vec3 ray = k.backproject(u, v, z0);
      if (normal.dot(ray) > 0) normal = -normal;
      out.normal(u, v) = normal;
      out.valid(u, v) = 1;
    }
  }
  return out;
}

std::uint8_t encode_angle(double degrees) {
  const double b = std::clamp(degrees + kAngleByteShift, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::lround(b));
}

double decode_angle(std::uint8_t byte) { return byte - kAngleByteShift; }

NormalImage encode_normal_image(const NormalField& normals, const GeocentricFrame& frame) {
  frame.validate();
  const int w = normals.normal.width(), h = normals.normal.height();
  NormalImage img{Grid<Rgb8>(w, h, Rgb8{0, 0, 0}), Mask(w, h, 0)};
  const Mat3 axes = frame.axes();
  constexpr double kDeg = 180.0 / std::numbers::pi;
  for (std::size_t i = 0; i < normals.normal.size(); ++i) {
    if (!normals.valid[i]) continue;
    const Vec3& n = normals.normal[i];
    Rgb8 px;
    for (int c = 0; c < 3; ++c) {
      const double a = std::acos(std::clamp(n.dot(axes.col(c)), -1.0, 1.0)) * kDeg;
      px[c] = encode_angle(a);
    }
    img.bytes[i] = px;
    img.valid[i] = 1;
  }
  return img;
}

NormalImage crop_and_warp(const NormalImage& img, const PixelBox& box, int out_size,
                          Resample mode) {
  if (box.area() == 0) throw InputError("crop_and_warp: zero-area box");
  if (out_size <= 0) throw InputError("crop_and_warp: out_size must be positive");
  NormalImage out{Grid<Rgb8>(out_size, out_size, Rgb8{0, 0, 0}), Mask(out_size, out_size, 0)};
  const double sx = static_cast<double>(box.width()) / out_size;
  const double sy = static_cast<double>(box.height()) / out_size;

  auto usable = [&](int u, int v) { return img.bytes.contains(u, v) && img.valid(u, v); };

  for (int j = 0; j < out_size; ++j) {
    for (int i = 0; i < out_size; ++i) {
      // Pixel-center mapping; equal sizes give an exact integer grid.
      const double x = box.x0 + (i + 0.5) * sx - 0.5;
      const double y = box.y0 + (j + 0.5) * sy - 0.5;
      if (mode == Resample::kNearest) {
        const int u = static_cast<int>(std::floor(x + 0.5));
        const int v = static_cast<int>(std::floor(y + 0.5));
        if (usable(u, v)) {
          out.bytes(i, j) = img.bytes(u, v);
          out.valid(i, j) = 1;
        }
        continue;
      }
      const int u0 = static_cast<int>(std::floor(x));
      const int v0 = static_cast<int>(std::floor(y));
      const double fx = x - u0, fy = y - v0;
      const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int us[4] = {u0, u0 + 1, u0, u0 + 1};
      const int vs[4] = {v0, v0, v0 + 1, v0 + 1};
      double acc[3] = {0, 0, 0};
      double wsum = 0;
      for (int t = 0; t < 4; ++t) {
        if (wts[t] <= 0 || !usable(us[t], vs[t])) continue;
        const Rgb8& px = img.bytes(us[t], vs[t]);
        for (int c = 0; c < 3; ++c) acc[c] += wts[t] * px[c];
        wsum += wts[t];
      }
      if (wsum <= 0) continue;
      Rgb8 px;
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(acc[c] / wsum), 0L, 255L));
      out.bytes(i, j) = px;
      out.valid(i, j) = 1;
    }
  }
  return out;
}

}  // namespace scene_align
