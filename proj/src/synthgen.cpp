#include "scene_align/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "scene_align/error.hpp"
#include "scene_align/image_io.hpp"
#include "scene_align/parallel.hpp"
#include "scene_align/rng.hpp"
#include "scene_align/shapes.hpp"

namespace scene_align {

void CategoryStats::validate() const {
  if (!(mu_area > 0)) throw InputError("stats: mu_area must be positive");
  if (!(sigma_area >= 0)) throw InputError("stats: sigma_area must be non-negative");
  if (!(z_min > 0 && z_max >= z_min)) throw InputError("stats: z_range must satisfy 0 < min <= max");
}

StatsTable stats_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("stats: expected an object keyed by category");
  StatsTable table;
  for (const auto& [cat, row] : j.items()) {
    CategoryStats s;
    try {
      s.mu_area = row.at("mu_area").get<double>();
      s.sigma_area = row.at("sigma_area").get<double>();
      if (row.contains("z_range")) {
        const auto z = row.at("z_range").get<std::vector<double>>();
        if (z.size() != 2) throw InputError("stats: z_range must have two entries");
        s.z_min = z[0];
        s.z_max = z[1];
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError("stats for '" + cat + "': " + e.what());
    }
    s.validate();
    table[cat] = s;
  }
  return table;
}

StatsTable load_stats(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("stats file not found: " + path.string());
  return stats_from_json(read_json_file(path));
}

int azimuth_bin(double yaw, int n_posebin) {
  constexpr double kTwoPi = 2 * std::numbers::pi;
  double a = std::fmod(yaw, kTwoPi);
  if (a < 0) a += kTwoPi;
  const int bin = static_cast<int>(std::floor(a / kTwoPi * n_posebin));
  return std::clamp(bin, 0, n_posebin - 1);
}

double bin_center(int bin, int n_posebin) {
  return wrap_angle(2 * std::numbers::pi * (bin + 0.5) / n_posebin);
}

RenderOutput add_floor(const RenderOutput& object, const GeocentricFrame& frame,
                       const CameraIntrinsics& k) {
  const TriangleMesh floor = shapes::floor_plane(frame.floor_height);
  RenderOutput back = empty_render(k, object.normals.has_value());
  rasterize_world(floor.vertices, floor.triangles, frame, k, {0.05, object.normals.has_value()}, back);
  return composite(object, back);
}

SceneSample sample_scene(const TriangleMesh& mesh, const CategoryStats& stats,
                         const GeocentricFrame& frame, const CameraIntrinsics& k,
                         std::uint64_t seed) {
  stats.validate();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  double min_y = std::numeric_limits<double>::infinity();
  for (const auto& v : mesh.canonical_vertices()) min_y = std::min(min_y, v.y());

  Vec3 forward = frame.world_from_camera(Vec3::UnitZ());
  forward.y() = 0;
  forward = forward.norm() > 1e-9 ? Vec3(forward.normalized()) : Vec3(0, 0, -1);
  const Vec3 lateral = forward.cross(Vec3::UnitY());

  constexpr int kMinPixels = 30;
  for (int attempt = 0; attempt < 100; ++attempt) {
    double area = stats.mu_area;
    if (stats.sigma_area > 0) {
      const double z = normal(rng);
      if (std::abs(z) > 2.0) continue;
      area = stats.mu_area + stats.sigma_area * z;
    }
    if (!(area > 0)) continue;
    const double yaw = wrap_angle(uniform(rng, -std::numbers::pi, std::numbers::pi));
    const double dist = uniform(rng, stats.z_min, stats.z_max);
    const double half_fov = 0.5 * k.width / k.fx;
    const double offset = uniform(rng, -0.3, 0.3) * dist * half_fov;

    Placement p;
    p.scale = scale_to_area(mesh, area);
    p.yaw = yaw;
    p.translation = dist * forward + offset * lateral;
    p.translation.y() = frame.floor_height - p.scale * min_y;

    SceneSample out;
    out.placement = p;
    out.azimuth = yaw;
    out.object = render(mesh, p, frame, k);
    out.scene = add_floor(out.object, frame, k);
    if (count(out.scene.mask) >= kMinPixels) return out;
  }
  throw ComputeError("sample_scene: no visible placement after 100 tries (degenerate stats?)");
}

std::vector<PixelBox> sample_training_boxes(const PixelBox& gt, int n, std::uint64_t seed) {
  if (gt.area() == 0) throw InputError("sample_training_boxes: empty ground-truth box");
  Rng rng(seed);
  std::vector<PixelBox> out;
  const double cx = 0.5 * (gt.x0 + gt.x1), cy = 0.5 * (gt.y0 + gt.y1);
  for (int i = 0; i < n; ++i) {
    PixelBox chosen = gt;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double w = gt.width() * std::exp(uniform(rng, -0.15, 0.15));
      const double h = gt.height() * std::exp(uniform(rng, -0.15, 0.15));
      const double x = cx + uniform(rng, -0.15, 0.15) * gt.width();
      const double y = cy + uniform(rng, -0.15, 0.15) * gt.height();
      PixelBox b{static_cast<int>(std::lround(x - w / 2)), static_cast<int>(std::lround(y - h / 2)),
                 static_cast<int>(std::lround(x + w / 2)), static_cast<int>(std::lround(y + h / 2))};
      if (b.area() > 0 && box_iou(b, gt) > 0.7) {
        chosen = b;
        break;
      }
    }
    out.push_back(chosen);
  }
  return out;
}

std::vector<PixelBox> sample_background_boxes(const PixelBox& gt, int n, int width, int height,
                                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PixelBox> out;
  for (int i = 0; i < n; ++i) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const int w = std::clamp(static_cast<int>(std::lround(gt.width() * uniform(rng, 0.8, 1.2))), 4, width);
      const int h = std::clamp(static_cast<int>(std::lround(gt.height() * uniform(rng, 0.8, 1.2))), 4, height);
      const int x0 = static_cast<int>(uniform(rng, 0, width - w + 1));
      const int y0 = static_cast<int>(uniform(rng, 0, height - h + 1));
      const PixelBox b{x0, y0, x0 + w, y0 + h};
      if (box_iou(b, gt) < 0.3) {
        out.push_back(b);
        break;
      }
    }
  }
  return out;
}

std::vector<SynthExample> make_dataset(const ModelLibrary& library, const StatsTable& stats,
                                       const GeocentricFrame& frame, const CameraIntrinsics& k,
                                       const SynthConfig& cfg) {
  if (library.empty()) throw InputError("make_dataset: empty model library");
  if (cfg.n_posebin < 1 || cfg.crop_size < 1) throw InputError("make_dataset: invalid config");

  struct Task {
    int category_id;
    std::string category;
    const LibraryEntry* entry;
    int model_index, pose_index;
  };
  std::vector<Task> tasks;
  const auto cats = library.categories();
  for (int ci = 0; ci < static_cast<int>(cats.size()); ++ci) {
    auto it = stats.find(cats[ci]);
    if (it == stats.end()) throw InputError("stats file has no entry for category " + cats[ci]);
    const auto models = library.models(cats[ci]);
    const int n = std::min<int>(cfg.models_per_cat, static_cast<int>(models.size()));
    for (int mi = 0; mi < n; ++mi)
      for (int pi = 0; pi < cfg.poses_per_model; ++pi) tasks.push_back({ci, cats[ci], models[mi], mi, pi});
  }

  std::vector<std::vector<SynthExample>> slots(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    const Task& t = tasks[i];
    const auto seed = derive_seed(cfg.seed, "synth",
                                  {static_cast<std::uint64_t>(t.category_id),
                                   static_cast<std::uint64_t>(t.model_index),
                                   static_cast<std::uint64_t>(t.pose_index)});
    const SceneSample scene = sample_scene(t.entry->mesh, stats.at(t.category), frame, k, seed);
    const NormalImage normals = encode_normal_image(estimate_normals(scene.scene.depth, k), frame);
    const PixelBox gt = mask_bounds(scene.scene.mask);

    auto emit = [&](const PixelBox& b, int label) {
      SynthExample ex;
      ex.crop = crop_and_warp(normals, b, cfg.crop_size);
      ex.category = t.category;
      ex.category_id = t.category_id;
      ex.label = label;
      ex.theta_gt = scene.azimuth;
      ex.model = t.entry->name;
      ex.placement = scene.placement;
      slots[i].push_back(std::move(ex));
    };
    const int label = azimuth_bin(scene.azimuth, cfg.n_posebin);
    for (const auto& b : sample_training_boxes(gt, cfg.boxes_per_pose, derive_seed(seed, "fg")))
      emit(b, label);
    for (const auto& b : sample_background_boxes(gt, cfg.background_per_pose, k.width, k.height,
                                                 derive_seed(seed, "bg")))
      emit(b, cfg.n_posebin);
  });

  std::vector<SynthExample> out;
  for (auto& s : slots)
    for (auto& e : s) out.push_back(std::move(e));
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<SynthExample>& examples) {
  std::filesystem::create_directories(dir / "crops");
  std::ofstream index(dir / "index.jsonl");
  if (!index) throw InputError("cannot write dataset index in " + dir.string());
  char name[32];
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    std::snprintf(name, sizeof name, "%06zu", i);
    const std::string rgb = std::string("crops/") + name + ".png";
    const std::string valid = std::string("crops/") + name + "_valid.png";
    write_normal_png(dir / rgb, dir / valid, ex.crop);
    nlohmann::json row{{"path", rgb}, {"valid_path", valid}, {"category", ex.category},
                       {"label", ex.label}, {"theta_gt", ex.theta_gt}, {"model", ex.model}};
    index << row.dump() << "\n";
  }
}

std::vector<SynthExample> load_dataset(const std::filesystem::path& dir,
                                       const std::vector<std::string>& categories) {
  std::ifstream index(dir / "index.jsonl");
  if (!index) throw InputError("dataset index not found: " + (dir / "index.jsonl").string());
  std::vector<SynthExample> out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    SynthExample ex;
    try {
      const auto row = nlohmann::json::parse(line);
      ex.category = row.at("category").get<std::string>();
      ex.label = row.at("label").get<int>();
      ex.theta_gt = row.at("theta_gt").get<double>();
      ex.model = row.value("model", "");
      ex.crop = read_normal_png(dir / row.at("path").get<std::string>(),
                                dir / row.at("valid_path").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw InputError("dataset index: " + std::string(e.what()));
    }
    auto it = std::find(categories.begin(), categories.end(), ex.category);
    if (it == categories.end()) throw InputError("dataset has unknown category " + ex.category);
    ex.category_id = static_cast<int>(it - categories.begin());
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace scene_align
