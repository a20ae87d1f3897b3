#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "scene_align/error.hpp"
#include "scene_align/geometry.hpp"
#include "scene_align/image_io.hpp"
#include "scene_align/render.hpp"
#include "support.hpp"

using namespace scene_align;
using test_support::small_camera;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

double angle_between_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * kDeg;
}

// Depth of the plane {p : n.p = d} along each pixel ray.
DepthImage plane_depth(const CameraIntrinsics& k, const Vec3& n, double d) {
  DepthImage img(k.width, k.height);
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Vec3 ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      img.set(u, v, d / n.dot(ray));
    }
  return img;
}

}  // namespace

TEST_CASE("backproject follows the pinhole model") {
  const auto k = small_camera();
  DepthImage d(k.width, k.height);
  d.set(static_cast<int>(k.cx), static_cast<int>(k.cy), 2.0);
  auto cloud = backproject(d, k);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.points[0].isApprox(Vec3(0, 0, 2)));

  // Unit slope ray: u = cx + fx.
  CameraIntrinsics wide = k;
  wide.fx = 40;
  DepthImage d2(k.width, k.height);
  d2.set(static_cast<int>(wide.cx + wide.fx), static_cast<int>(wide.cy), 1.0);
  cloud = backproject(d2, wide);
  REQUIRE(cloud.size() == 1);
  CHECK((cloud.points[0] - Vec3(1, 0, 1)).norm() < 1e-12);
}

TEST_CASE("backproject then project is the identity") {
  const auto k = small_camera();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uu(0, k.width - 1), vv(0, k.height - 1), zz(0.5, 8.0);
  for (int i = 0; i < 100; ++i) {
    const double u = uu(rng), v = vv(rng);
    const Vec2 back = k.project(k.backproject(u, v, zz(rng)));
    CHECK(std::abs(back.x() - u) < 1e-6);
    CHECK(std::abs(back.y() - v) < 1e-6);
  }
}

TEST_CASE("backproject honors mask, missing depth and the world frame") {
  const auto k = small_camera();
  auto d = test_support::constant_depth(k, 2.0);
  Mask m(k.width, k.height, 0);
  m(10, 10) = 1;
  m(11, 10) = 1;
  d.clear(11, 10);
  auto cloud = backproject(d, k, &m);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.pixel[0] == 10 * k.width + 10);

  Mask only_missing(k.width, k.height, 0);
  only_missing(11, 10) = 1;
  CHECK(backproject(d, k, &only_missing).empty());

  const auto frame = test_support::level_frame();
  Mask center(k.width, k.height, 0);
  center(static_cast<int>(k.cx), static_cast<int>(k.cy)) = 1;
  cloud = backproject(d, k, &center, &frame);
  REQUIRE(cloud.size() == 1);
  // Straight ahead in camera coordinates is -z in the world.
  CHECK((cloud.points[0] - Vec3(0, 0, -2)).norm() < 1e-12);
}

TEST_CASE("geocentric axes are orthonormal with y along gravity") {
  GeocentricFrame f;
  f.gravity = Vec3(0.1, -0.98, 0.15).normalized();
  const Mat3 a = f.axes();
  CHECK((a.transpose() * a - Mat3::Identity()).norm() < 1e-12);
  CHECK((a.col(1) - f.gravity).norm() < 1e-15);
  CHECK(a.determinant() == doctest::Approx(1.0));
  const Vec3 p(0.3, -0.2, 2.5);
  CHECK((f.camera_from_world(f.world_from_camera(p)) - p).norm() < 1e-12);

  GeocentricFrame bad;
  bad.gravity = {0, -2, 0};
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("normals of a fronto-parallel plane") {
  const auto k = small_camera();
  const auto nf = estimate_normals(test_support::constant_depth(k, 2.0), k);
  const int r = NormalOptions{}.window_radius;
  for (int v = r; v < k.height - r; ++v)
    for (int u = r; u < k.width - r; ++u) {
      REQUIRE(nf.valid(u, v));
      CHECK((nf.normal(u, v) - Vec3(0, 0, -1)).norm() < 1e-6);
    }
}

TEST_CASE("normals of a 45 degree plane match the analytic normal") {
  const auto k = small_camera();
  const Vec3 n = Vec3(1, 0, -1).normalized();
  const auto depth = plane_depth(k, n, n.dot(Vec3(0, 0, 2)));
  const auto nf = estimate_normals(depth, k);
  const int r = NormalOptions{}.window_radius;
  int checked = 0;
  for (int v = r; v < k.height - r; ++v)
    for (int u = r; u < k.width - r; ++u) {
      if (!nf.valid(u, v)) continue;
      ++checked;
      CHECK(angle_between_deg(nf.normal(u, v), n) < 0.5);
      CHECK(std::abs(nf.normal(u, v).norm() - 1.0) < 1e-6);
    }
  CHECK(checked > (k.width - 2 * r) * (k.height - 2 * r) * 9 / 10);
}

TEST_CASE("normals of a rendered sphere are radial") {
  const auto k = small_camera();
  const auto frame = test_support::level_frame();
  const double radius = 0.5;
  const auto mesh = shapes::sphere(Vec3::Zero(), radius, 96, 192);
  Placement p;
  p.translation = {0, 0, -2.0};
  const auto out = render(mesh, p, frame, k);
  const auto nf = estimate_normals(out.depth, k);
  const Vec3 center_cam = frame.camera_from_world(p.translation);
  const int margin = NormalOptions{}.window_radius + 1;

  int checked = 0;
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      bool interior = out.mask(u, v) != 0;
      for (int dv = -margin; interior && dv <= margin; ++dv)
        for (int du = -margin; interior && du <= margin; ++du)
          interior = out.mask.contains(u + du, v + dv) && out.mask(u + du, v + dv);
      if (!interior) continue;
      REQUIRE(nf.valid(u, v));
      const Vec3 surface = k.backproject(u, v, out.depth.at(u, v));
      const Vec3 radial = (surface - center_cam).normalized();
      CHECK(angle_between_deg(nf.normal(u, v), radial) < 3.0);
      CHECK(nf.normal(u, v).dot(surface) < 0);
      ++checked;
    }
  CHECK(checked > 200);
}

TEST_CASE("degenerate neighborhoods are invalid") {
  const auto k = small_camera();
  DepthImage d(k.width, k.height);
  d.set(50, 50, 2.0);
  for (int i = 1; i <= 3; ++i) d.set(50 + i, 50, 2.0);  // collinear pixels
  const auto nf = estimate_normals(d, k);
  CHECK(count(nf.valid) == 0);
  CHECK_THROWS_AS(estimate_normals(d, k, NormalOptions{0, 0.05, 4}), InputError);
}

TEST_CASE("angle encoding") {
  CHECK(encode_angle(90) == 128);
  CHECK(encode_angle(0) == 38);
  CHECK(encode_angle(180) == 218);
  CHECK(encode_angle(-100) == 0);
  CHECK(encode_angle(300) == 255);
  for (double a = 0; a <= 180; a += 0.37) CHECK(std::abs(decode_angle(encode_angle(a)) - a) <= 0.5);
}

TEST_CASE("normal image bytes stay in the valid band") {
  const auto k = small_camera();
  const auto frame = test_support::level_frame();
  const auto out = render(shapes::sphere(Vec3::Zero(), 0.5), Placement{1, 0, {0, 0, -2}}, frame, k);
  const auto img = encode_normal_image(estimate_normals(out.depth, k), frame);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < img.bytes.size(); ++i) {
    if (!img.valid[i]) {
      CHECK(img.bytes[i] == Rgb8{0, 0, 0});
      continue;
    }
    ++valid;
    for (auto b : img.bytes[i]) {
      CHECK(b >= 38);
      CHECK(b <= 218);
    }
  }
  CHECK(valid > 0);

  // A floor seen from above points along +y: angles 90, 0, 90.
  NormalField up{Grid<Vec3>(1, 1, frame.axes().col(1)), Mask(1, 1, 1)};
  const auto floor_img = encode_normal_image(up, frame);
  CHECK(floor_img.bytes(0, 0) == Rgb8{128, 38, 128});
}

TEST_CASE("disparity") {
  CameraIntrinsics k = small_camera();
  CHECK(disparity(3.0, k) == doctest::Approx(105.0).epsilon(1e-12));
  CHECK(disparity(1.5, k) == doctest::Approx(210.0).epsilon(1e-12));
  const double gap = std::abs(disparity(3.0, k) - disparity(3.2, k));
  CHECK(gap >= 6.0);
  CHECK(gap <= 8.0);
  CHECK(std::isnan(disparity(0.0, k)));
  for (double z = 0.1; z < 10; z += 0.1) CHECK(disparity(z, k) > disparity(z + 0.05, k));
}

TEST_CASE("crop_and_warp") {
  NormalImage img{Grid<Rgb8>(12, 10), Mask(12, 10, 1)};
  for (int v = 0; v < 10; ++v)
    for (int u = 0; u < 12; ++u)
      img.bytes(u, v) = Rgb8{static_cast<std::uint8_t>(u * 10 + v), static_cast<std::uint8_t>(v), 7};

  SUBCASE("same size is a copy") {
    const PixelBox box{2, 1, 8, 7};
    for (auto mode : {Resample::kNearest, Resample::kBilinear}) {
      const auto out = crop_and_warp(img, box, 6, mode);
      for (int j = 0; j < 6; ++j)
        for (int i = 0; i < 6; ++i) {
          CHECK(out.valid(i, j));
          CHECK(out.bytes(i, j) == img.bytes(box.x0 + i, box.y0 + j));
        }
    }
  }
  SUBCASE("constant stays constant") {
    NormalImage flat{Grid<Rgb8>(12, 10, Rgb8{128, 38, 200}), Mask(12, 10, 1)};
    const auto out = crop_and_warp(flat, PixelBox{1, 1, 9, 8}, 17);
    for (std::size_t i = 0; i < out.bytes.size(); ++i) CHECK(out.bytes[i] == Rgb8{128, 38, 200});
  }
  SUBCASE("nearest 2x upsample of a checkerboard keeps source bytes") {
    NormalImage cb{Grid<Rgb8>(4, 4), Mask(4, 4, 1)};
    for (int v = 0; v < 4; ++v)
      for (int u = 0; u < 4; ++u) cb.bytes(u, v) = (u + v) % 2 ? Rgb8{200, 200, 200} : Rgb8{50, 50, 50};
    const auto out = crop_and_warp(cb, PixelBox{0, 0, 4, 4}, 8, Resample::kNearest);
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) CHECK(out.bytes(i, j) == cb.bytes(i / 2, j / 2));
  }
  SUBCASE("outside pixels are invalid padding") {
    const auto out = crop_and_warp(img, PixelBox{-4, 0, 4, 8}, 8, Resample::kNearest);
    CHECK_FALSE(out.valid(0, 0));
    CHECK(out.bytes(0, 0) == Rgb8{0, 0, 0});
    CHECK(out.valid(7, 0));
  }
  CHECK_THROWS_AS(crop_and_warp(img, PixelBox{3, 3, 3, 9}, 8), InputError);
}

TEST_CASE("image files round-trip") {
  const auto dir = test_support::scratch_dir("geometry_io");
  const auto k = small_camera();
  DepthImage d(k.width, k.height);
  d.set(3, 4, 1.234);
  d.set(5, 6, 60.0);
  write_depth_png(dir / "d.png", d);
  const auto back = read_depth_png(dir / "d.png");
  CHECK(back.valid(3, 4));
  CHECK(back.at(3, 4) == doctest::Approx(1.234));
  CHECK(back.at(5, 6) == doctest::Approx(60.0));
  CHECK(back.valid_count() == 2);

  Mask m(k.width, k.height, 0);
  m(1, 2) = 1;
  write_mask_png(dir / "m.png", m);
  CHECK(read_mask_png(dir / "m.png") == m);

  NormalImage n{Grid<Rgb8>(5, 4, Rgb8{1, 2, 3}), Mask(5, 4, 1)};
  n.valid(0, 0) = 0;
  n.bytes(0, 0) = Rgb8{0, 0, 0};
  write_normal_png(dir / "n.png", dir / "n_valid.png", n);
  CHECK(read_normal_png(dir / "n.png", dir / "n_valid.png") == n);

  CameraSetup cam{k, test_support::level_frame()};
  const auto cam2 = camera_from_json(camera_to_json(cam));
  CHECK(cam2.intrinsics.fx == k.fx);
  CHECK(cam2.frame.floor_height == -1.2);
  CHECK_THROWS_AS(read_depth_png(dir / "missing.png"), InputError);
}
