#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "scene_align/error.hpp"
#include "scene_align/eval.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace scene_align;
using namespace test_support;

namespace {

RenderOutput flat(const CameraIntrinsics& k, int u0, int v0, int w, int h, double z) {
  RenderOutput r = empty_render(k, false);
  for (int v = v0; v < v0 + h; ++v)
    for (int u = u0; u < u0 + w; ++u) {
      r.depth.set(u, v, z);
      r.mask(u, v) = 1;
    }
  return r;
}

struct SyntheticSet {
  ModelLibrary library;
  std::vector<GroundTruthInstance> gts;
  std::vector<ModelPrediction> oracle;
  std::map<std::string, EvalImage> images;
};

SyntheticSet synthetic_set(int n_scenes) {
  SyntheticSet s;
  s.library = small_library();
  const auto k = small_camera();
  const auto frame = level_frame();
  const auto stats = small_stats();
  const std::vector<std::string> names{"chair_a", "table_a", "chair_b", "table_b"};
  for (int i = 0; i < n_scenes; ++i) {
    const auto& entry = s.library.find(names[i % names.size()]);
    const auto scene = sample_scene(entry.mesh, stats.at(entry.category), frame, k, 100 + i);
    const std::string id = "scene_" + std::to_string(i);
    s.images[id] = {scene.scene.depth, k, frame};
    s.gts.push_back({id, entry.category, scene.scene.mask, std::nullopt, false});
    s.oracle.push_back({id, entry.category, 1.0 - 0.01 * i, &entry.mesh, scene.placement});
  }
  return s;
}

}  // namespace

TEST_CASE("render-based overlap examples") {
  const auto k = small_camera();
  const auto frame = level_frame();
  const auto mesh = shapes::chair(0.5, 0.5, 0.45, 0.9);
  const auto r = add_floor(render(mesh, Placement{1.0, 0.4, {0, frame.floor_height, -2.3}}, frame, k), frame, k);
  EvalConfig cfg;
  CHECK(model_overlap(r, r.mask, r.depth, k, cfg) == 1.0);

  // Flat target at 2 m observed 0.5 m farther back.
  const auto pred = flat(k, 50, 40, 30, 20, 2.0);
  const auto behind = constant_depth(k, 2.5);
  const auto c7 = model_overlap_counts(pred, pred.mask, behind, k, cfg);
  CHECK(c7.intersection == 0);
  CHECK(c7.visible == 600);
  CHECK(std::abs(disparity(2.0, k) - disparity(2.5, k) - 31.5) < 1e-9);
  EvalConfig inf = cfg;
  inf.t_agree = kInf;
  CHECK(model_overlap(pred, pred.mask, behind, k, inf) == 1.0);

  // Occluding observation removes the pixels from the visible set.
  const auto front = constant_depth(k, 1.0);
  const auto occ = model_overlap_counts(pred, pred.mask, front, k, cfg);
  CHECK(occ.visible == 0);
  CHECK(occ.union_ == 600);
  CHECK(occ.iou() == 0.0);

  // Missing observed depth drops pixels from both counts.
  DepthImage holes = constant_depth(k, 2.0);
  for (int u = 50; u < 65; ++u)
    for (int v = 40; v < 60; ++v) holes.clear(u, v);
  const auto h = model_overlap_counts(pred, pred.mask, holes, k, cfg);
  CHECK(h.union_ == 300);
  CHECK(h.intersection == 300);
}

TEST_CASE("overlap is bounded and monotone in the agreement threshold") {
  const auto k = small_camera();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> z(1.5, 3.5);
  std::uniform_int_distribution<int> coin(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    RenderOutput pred = empty_render(k, false);
    DepthImage obs(k.width, k.height);
    Mask gt(k.width, k.height, 0);
    for (int v = 0; v < k.height; ++v)
      for (int u = 0; u < k.width; ++u) {
        if (coin(rng)) {
          pred.depth.set(u, v, z(rng));
          pred.mask(u, v) = 1;
        }
        if (coin(rng)) obs.set(u, v, z(rng));
        gt(u, v) = coin(rng) == 0;
      }
    double prev = -1;
    for (double t : {0.0, 1.0, 3.0, 7.0, 20.0, 100.0, kInf}) {
      EvalConfig cfg;
      cfg.t_agree = t;
      const double o = model_overlap(pred, gt, obs, k, cfg);
      CHECK(o >= 0);
      CHECK(o <= 1);
      CHECK(o >= prev);
      prev = o;
    }
  }
}

TEST_CASE("average precision hand cases") {
  std::vector<ScoredDetection> one{{0.9, {0.8}}};
  CHECK(average_precision(one, 1, 0.5).ap == 1.0);

  std::vector<ScoredDetection> fp_first{{0.9, {0.1}}, {0.5, {0.7}}};
  const auto c = average_precision(fp_first, 1, 0.5);
  CHECK(c.ap == 0.5);
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[0].recall == 0.0);
  CHECK(c.points[0].precision == 0.0);
  CHECK(c.points[1].recall == 1.0);
  CHECK(c.points[1].precision == 0.5);

  // A duplicate of a matched detection is a false positive.
  std::vector<ScoredDetection> dup{{0.9, {0.9}}, {0.8, {0.9}}};
  CHECK(average_precision(dup, 1, 0.5).ap == 1.0);
  CHECK(average_precision(dup, 1, 0.5).points[1].precision == 0.5);

  CHECK_FALSE(average_precision(one, 0, 0.5).defined);
  CHECK(average_precision(std::vector<ScoredDetection>{}, 3, 0.5).ap == 0.0);
  CHECK_THROWS_AS(average_precision(std::vector<ScoredDetection>{{NAN, {0.5}}}, 1, 0.5), InputError);
}

TEST_CASE("equal scores follow input order") {
  std::vector<ScoredDetection> a{{0.5, {0.9, 0.0}}, {0.5, {0.0, 0.9}}, {0.5, {0.0, 0.0}}};
  auto b = a;
  std::swap(b[0], b[1]);
  CHECK(average_precision(a, 2, 0.5).ap == average_precision(b, 2, 0.5).ap);
  // The false positive's position within the tie decides its rank.
  auto c = a;
  std::rotate(c.begin(), c.begin() + 2, c.end());
  CHECK(average_precision(c, 2, 0.5).ap == doctest::Approx(2.0 / 3));
  CHECK(average_precision(a, 2, 0.5).ap == 1.0);
}

TEST_CASE("average precision matches brute-force enumeration") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> nd(1, 10), ng(1, 5), score_level(0, 4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nd(rng), g = ng(rng);
    std::vector<ScoredDetection> dets(n);
    for (auto& d : dets) {
      d.score = score_level(rng) * 0.25;  // frequent ties
      for (int j = 0; j < g; ++j) d.overlaps.push_back(u(rng) < 0.5 ? u(rng) : 0.0);
    }
    const auto c = average_precision(dets, g, 0.5);
    CHECK(c.ap == oracles::brute_force_ap(dets, g, 0.5));
    CHECK(c.ap >= 0);
    CHECK(c.ap <= 1);
    for (std::size_t i = 1; i < c.points.size(); ++i) CHECK(c.points[i].recall >= c.points[i - 1].recall);
  }
}

TEST_CASE("modelAP on synthetic scenes") {
  const auto set = synthetic_set(6);
  EvalConfig cfg;
  const auto oracle = model_ap(set.oracle, set.gts, set.images, cfg);
  CHECK(oracle.ap == 1.0);
  CHECK(model_ap(set.oracle, set.gts, set.images, cfg, 3).ap == oracle.ap);

  EvalConfig inf = cfg;
  inf.t_agree = kInf;
  auto flipped = set.oracle;
  for (auto& p : flipped) p.placement.yaw = wrap_angle(p.placement.yaw + std::numbers::pi);
  const double ap7 = model_ap(flipped, set.gts, set.images, cfg).ap;
  CHECK(ap7 < oracle.ap);
  CHECK(model_ap(flipped, set.gts, set.images, inf).ap >= ap7);

  // Cross-category pairs never match.
  auto wrong_cat = set.oracle;
  for (auto& p : wrong_cat) p.category = p.category == "chair" ? "table" : "chair";
  CHECK(model_ap(wrong_cat, set.gts, set.images, cfg).ap == 0.0);

  auto missing = set.oracle;
  missing[0].image_id = "nowhere";
  CHECK_THROWS_AS(model_ap(missing, set.gts, set.images, cfg), InputError);
  EvalConfig bad = cfg;
  bad.t_iou = 0;
  CHECK_THROWS_AS(model_ap(set.oracle, set.gts, set.images, bad), InputError);
}

TEST_CASE("3D detection AP") {
  std::vector<GroundTruthInstance> gts;
  std::vector<BoxPrediction> preds;
  // Ten scenes, two of them with a second object: twelve boxes.
  for (int i = 0; i < 12; ++i) {
    const std::string id = "scene_" + std::to_string(i < 10 ? i : i - 10);
    const OrientedBox3D b{0.1 * i, {0.5 * (i % 3), -0.8, -2.0 - 0.5 * (i / 10)}, {0.3, 0.4, 0.25}};
    gts.push_back({id, "chair", Mask(1, 1, 1), b, false});
    preds.push_back({id, "chair", 1.0 - 0.01 * i, b});
  }
  CHECK(detection_ap_3d(preds, gts).ap == 1.0);

  auto disjoint = preds;
  for (auto& p : disjoint) p.box.center.x() += 10;
  CHECK(detection_ap_3d(disjoint, gts).ap == 0.0);

  // Corrupt ranks 3 and 8. Hand PR table (tp / rank):
  // 1/1 2/2 3/3 3/4 4/5 5/6 6/7 7/8 7/9 8/10 9/11 10/12
  // Envelope at the ten recall steps: 1,1,1, 7/8 x4, 10/12 x3 -> AP = (3 + 3.5 + 2.5) / 12.
  auto corrupted = preds;
  corrupted[3].box.center.x() += 10;
  corrupted[8].box.center.z() -= 10;
  const auto c = detection_ap_3d(corrupted, gts);
  CHECK(c.ap == doctest::Approx(0.75).epsilon(1e-12));
  const std::vector<int> tp{1, 2, 3, 3, 4, 5, 6, 7, 7, 8, 9, 10};
  REQUIRE(c.points.size() == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK(c.points[i].recall == doctest::Approx(tp[i] / 12.0));
    CHECK(c.points[i].precision == doctest::Approx(tp[i] / (i + 1.0)));
  }

  auto no_box = gts;
  no_box[0].box.reset();
  CHECK_THROWS_AS(detection_ap_3d(preds, no_box), InputError);
}

TEST_CASE("angular error and pose accuracy curves") {
  const double pi = std::numbers::pi;
  CHECK(angular_error_deg(0.3, 0.3 + 2 * pi) == doctest::Approx(0.0).scale(1));
  CHECK(angular_error_deg(0, pi) == doctest::Approx(180.0));
  CHECK(angular_error_deg(0.1, -0.1) == doctest::Approx(0.2 * 180 / pi));

  std::vector<double> thresholds;
  for (int t = 0; t <= 45; ++t) thresholds.push_back(t);

  // Exact bin center counts everywhere.
  const std::vector<std::vector<int>> exact{{3}};
  const std::vector<double> exact_yaw{bin_center(3, 16)};
  for (double a : pose_accuracy_curve(exact, exact_yaw, 1, 16, thresholds)) CHECK(a == 1.0);

  // gt 0, prediction at 22.5 deg: bin 0 of 8 has its center there.
  const std::vector<std::vector<int>> off{{0}};
  const std::vector<double> zero{0.0};
  const std::vector<double> th{22.0, 22.4999, 22.5, 22.6};
  const auto curve = pose_accuracy_curve(off, zero, 1, 8, th);
  CHECK(curve == std::vector<double>{0, 0, 1, 1});

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> bin(0, 15);
  std::uniform_real_distribution<double> yaw(-pi, pi);
  std::vector<std::vector<int>> preds(200);
  std::vector<double> gt(200);
  for (int i = 0; i < 200; ++i) {
    preds[i] = {bin(rng), bin(rng)};
    gt[i] = yaw(rng);
  }
  const auto top1 = pose_accuracy_curve(preds, gt, 1, 16, thresholds);
  const auto top2 = pose_accuracy_curve(preds, gt, 2, 16, thresholds);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    CHECK(top2[i] >= top1[i]);
    if (i) {
      CHECK(top1[i] >= top1[i - 1]);
      CHECK(top2[i] >= top2[i - 1]);
    }
  }
  CHECK_THROWS_AS(pose_accuracy_curve(preds, gt, 0, 16, thresholds), InputError);
}
