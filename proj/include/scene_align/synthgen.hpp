#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scene_align/geometry.hpp"
#include "scene_align/mesh.hpp"
#include "scene_align/render.hpp"

namespace scene_align {

// Per-category footprint statistics and placement range.
struct CategoryStats {
  double mu_area = 1.0;     // m^2, top-view box area
  double sigma_area = 0.0;  // m^2
  double z_min = 1.5, z_max = 4.0;  // distance in front of the camera, meters

  void validate() const;
};

using StatsTable = std::map<std::string, CategoryStats>;

// {category: {mu_area, sigma_area, z_range:[min,max]}}
StatsTable load_stats(const std::filesystem::path& path);
StatsTable stats_from_json(const nlohmann::json& j);

// Azimuth bin of a yaw: floor(((yaw mod 2pi) / 2pi) * n_posebin).
int azimuth_bin(double yaw, int n_posebin);
// Center yaw of a bin, wrapped to (-pi, pi]; inverse of azimuth_bin.
double bin_center(int bin, int n_posebin);

struct SceneSample {
  Placement placement;
  RenderOutput object;  // the model alone
  RenderOutput scene;   // model on the floor; mask = visible model pixels
  double azimuth = 0;
};

// Places the mesh on the floor with a footprint area drawn from a normal
// truncated at +-2 sigma, a uniform yaw, and a distance in the stats range.
// Throws ComputeError if no sample shows the model within 100 tries.
SceneSample sample_scene(const TriangleMesh& mesh, const CategoryStats& stats,
                         const GeocentricFrame& frame, const CameraIntrinsics& k,
                         std::uint64_t seed);

// Renders the floor plane behind `object` and composites.
RenderOutput add_floor(const RenderOutput& object, const GeocentricFrame& frame,
                       const CameraIntrinsics& k);

// Jittered boxes with IoU > 0.7 against gt_box.
std::vector<PixelBox> sample_training_boxes(const PixelBox& gt_box, int n, std::uint64_t seed);

// Boxes of similar size with IoU < 0.3 against gt_box, inside the image.
std::vector<PixelBox> sample_background_boxes(const PixelBox& gt_box, int n, int width,
                                              int height, std::uint64_t seed);

struct SynthConfig {
  int models_per_cat = 50;
  int poses_per_model = 10;
  int boxes_per_pose = 5;
  int background_per_pose = 1;
  int n_posebin = 8;
  int crop_size = 227;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct SynthExample {
  NormalImage crop;
  std::string category;
  int category_id = 0;
  int label = 0;  // pose bin, or n_posebin for background
  double theta_gt = 0;
  std::string model;
  Placement placement;
};

// Deterministic given cfg.seed, independent of cfg.threads. Order: category,
// model, pose, then foreground boxes followed by background boxes.
std::vector<SynthExample> make_dataset(const ModelLibrary& library, const StatsTable& stats,
                                       const GeocentricFrame& frame, const CameraIntrinsics& k,
                                       const SynthConfig& cfg);

// Directory of crop PNGs plus index.jsonl rows {path, valid_path, category,
// label, theta_gt, model}.
void save_dataset(const std::filesystem::path& dir, const std::vector<SynthExample>& examples);
std::vector<SynthExample> load_dataset(const std::filesystem::path& dir,
                                       const std::vector<std::string>& categories);

}  // namespace scene_align
