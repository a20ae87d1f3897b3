#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "scene_align/error.hpp"
#include "scene_align/rng.hpp"
#include "scene_align/synthgen.hpp"
#include "support.hpp"

using namespace scene_align;
using namespace test_support;

namespace {

double min_world_height(const TriangleMesh& mesh, const Placement& p) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& v : mesh.canonical_vertices()) m = std::min(m, p.apply(v).y());
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("degenerate area distribution gives the mean footprint") {
  const auto k = small_camera();
  const auto frame = level_frame();
  const auto chair = shapes::chair(0.5, 0.5, 0.45, 0.9);
  const CategoryStats stats{0.3, 0.0, 2.0, 3.0};
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto sample = sample_scene(chair, stats, frame, k, s);
    CHECK(top_view_area(chair, sample.placement.scale) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(std::abs(min_world_height(chair, sample.placement) - frame.floor_height) < 1e-9);
    CHECK(sample.azimuth > -std::numbers::pi);
    CHECK(sample.azimuth <= std::numbers::pi);
    CHECK(count(sample.scene.mask) >= 30);
  }
}

TEST_CASE("sampled footprint areas average to the mean") {
  const auto k = small_camera(80, 60);
  const auto frame = level_frame();
  const auto table = shapes::table(1.0, 0.6, 0.7);
  const CategoryStats stats{0.8, 0.2, 2.0, 3.5};
  const int n = 1000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_scene(table, stats, frame, k, derive_seed(5, "area", {std::uint64_t(i)}));
    const double a = top_view_area(table, s.placement.scale);
    CHECK(std::abs(a - 0.8) <= 2 * 0.2 + 1e-9);
    CHECK(std::abs(min_world_height(table, s.placement) - frame.floor_height) < 1e-9);
    sum += a;
  }
  const double se = 0.2 / std::sqrt(n);
  CHECK(std::abs(sum / n - 0.8) < 3 * se);
}

TEST_CASE("invisible placements fail after bounded retries") {
  const auto k = small_camera();
  const auto chair = shapes::chair(0.5, 0.5, 0.45, 0.9);
  // A tiny object very far away never covers 30 pixels.
  const CategoryStats stats{1e-6, 0.0, 500.0, 600.0};
  CHECK_THROWS_AS(sample_scene(chair, stats, level_frame(), k, 1), ComputeError);
  CHECK_THROWS_AS(sample_scene(chair, CategoryStats{-1, 0, 1, 2}, level_frame(), k, 1), InputError);
}

TEST_CASE("training boxes overlap the ground truth") {
  const PixelBox gt{20, 30, 80, 70};
  CHECK(box_iou(gt, gt) == 1.0);
  const PixelBox shifted{50, 30, 110, 70};
  CHECK(box_iou(gt, shifted) == doctest::Approx(1.0 / 3.0));
  const auto boxes = sample_training_boxes(gt, 200, 9);
  CHECK(boxes.size() == 200);
  for (const auto& b : boxes) CHECK(box_iou(b, gt) > 0.7);
  CHECK(sample_training_boxes(gt, 5, 9) == std::vector<PixelBox>(boxes.begin(), boxes.begin() + 5));
  CHECK_THROWS_AS(sample_training_boxes(PixelBox{3, 3, 3, 8}, 1, 0), InputError);
}

TEST_CASE("background boxes avoid the object") {
  const PixelBox gt{60, 40, 100, 80};
  const auto boxes = sample_background_boxes(gt, 50, 160, 120, 4);
  CHECK(boxes.size() == 50);
  for (const auto& b : boxes) {
    CHECK(box_iou(b, gt) < 0.3);
    CHECK(b.x0 >= 0);
    CHECK(b.y0 >= 0);
    CHECK(b.x1 <= 160);
    CHECK(b.y1 <= 120);
  }
}

TEST_CASE("azimuth bins") {
  constexpr double pi = std::numbers::pi;
  CHECK(azimuth_bin(0.0, 8) == 0);
  CHECK(azimuth_bin(pi, 8) == 4);
  CHECK(azimuth_bin(-pi / 8, 8) == 7);
  CHECK(azimuth_bin(2 * pi - 1e-12, 8) == 7);
  CHECK(azimuth_bin(2 * pi, 8) == 0);
  for (int n : {1, 4, 8, 12})
    for (int b = 0; b < n; ++b) {
      const double c = bin_center(b, n);
      CHECK(azimuth_bin(c, n) == b);
      CHECK(c > -pi);
      CHECK(c <= pi);
      // A bin's lower edge belongs to it; exact in floating point for powers of two.
      if ((n & (n - 1)) == 0) CHECK(azimuth_bin(2 * pi * b / n, n) == b);
    }
  // Every sample of the circle lands in exactly the bin whose interval holds it.
  for (int i = 0; i < 1000; ++i) {
    const double a = -pi + 2 * pi * (i + 0.5) / 1000;
    const int b = azimuth_bin(a, 8);
    double m = std::fmod(a, 2 * pi);
    if (m < 0) m += 2 * pi;
    CHECK(m >= 2 * pi * b / 8);
    CHECK(m < 2 * pi * (b + 1) / 8);
  }
}

TEST_CASE("dataset generation") {
  const auto k = small_camera();
  const auto frame = level_frame();
  ModelLibrary lib;
  lib.add({"chair", "chair_a", shapes::chair(0.5, 0.5, 0.45, 0.9)});
  SynthConfig cfg;
  cfg.models_per_cat = 1;
  cfg.poses_per_model = 10;
  cfg.boxes_per_pose = 5;
  cfg.background_per_pose = 1;
  cfg.crop_size = 24;
  cfg.seed = 17;
  cfg.threads = 1;
  const auto data = make_dataset(lib, small_stats(), frame, k, cfg);

  int fg = 0, bg = 0;
  for (const auto& e : data) {
    CHECK(e.label <= cfg.n_posebin);
    if (e.label == cfg.n_posebin) {
      ++bg;
      continue;
    }
    ++fg;
    CHECK(e.label == azimuth_bin(e.theta_gt, cfg.n_posebin));
    CHECK(count(e.crop.valid) >= 1);
    CHECK(e.crop.width() == 24);
  }
  CHECK(fg == 50);
  CHECK(bg == 10);

  cfg.threads = 4;
  const auto again = make_dataset(lib, small_stats(), frame, k, cfg);
  REQUIRE(again.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(again[i].crop == data[i].crop);
    CHECK(again[i].label == data[i].label);
    CHECK(again[i].theta_gt == data[i].theta_gt);
  }

  const auto dir = scratch_dir("synth_ds");
  save_dataset(dir / "a", data);
  save_dataset(dir / "b", again);
  CHECK(slurp(dir / "a" / "index.jsonl") == slurp(dir / "b" / "index.jsonl"));
  CHECK(slurp(dir / "a" / "crops" / "000003.png") == slurp(dir / "b" / "crops" / "000003.png"));

  const auto loaded = load_dataset(dir / "a", {"chair"});
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].crop == data[i].crop);
    CHECK(loaded[i].label == data[i].label);
    CHECK(loaded[i].theta_gt == data[i].theta_gt);
  }
  CHECK_THROWS_AS(load_dataset(dir / "a", {"table"}), InputError);

  cfg.seed = 18;
  const auto other = make_dataset(lib, small_stats(), frame, k, cfg);
  CHECK(other[0].theta_gt != data[0].theta_gt);
}

TEST_CASE("stats file") {
  const auto dir = scratch_dir("synth_stats");
  {
    std::ofstream f(dir / "stats.json");
    f << R"({"chair": {"mu_area": 0.3, "sigma_area": 0.05, "z_range": [1.5, 3.5]}})";
  }
  const auto s = load_stats(dir / "stats.json");
  CHECK(s.at("chair").z_max == 3.5);
  try {
    load_stats(dir / "missing.json");
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
  }
  CHECK_THROWS_AS(stats_from_json(nlohmann::json::parse(R"({"a": {"mu_area": 0, "sigma_area": 1}})")),
                  InputError);
}
