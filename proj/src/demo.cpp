#include "scene_align/demo.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "scene_align/image_io.hpp"
#include "scene_align/pipeline.hpp"
#include "scene_align/shapes.hpp"

namespace scene_align {

void write_demo_assets(const fs::path& dir, const DemoOptions& opt) {
  fs::create_directories(dir / "models");
  nlohmann::json manifest = nlohmann::json::array();
  for (int i = 0; i < opt.models_per_category; ++i) {
    const double a = static_cast<double>(i) / std::max(1, opt.models_per_category - 1);
    const std::string chair = "chair_" + std::to_string(i);
    const std::string table = "table_" + std::to_string(i);
    save_obj(dir / "models" / (chair + ".obj"),
             shapes::chair(0.42 + 0.12 * a, 0.45 + 0.1 * (1 - a), 0.42 + 0.06 * a, 0.75 + 0.2 * a));
    save_obj(dir / "models" / (table + ".obj"),
             shapes::table(0.9 + 0.5 * a, 0.6 + 0.25 * (1 - a), 0.7 + 0.06 * a));
    manifest.push_back({{"category", "chair"}, {"name", chair}, {"path", "models/" + chair + ".obj"}});
    manifest.push_back({{"category", "table"}, {"name", table}, {"path", "models/" + table + ".obj"}});
  }
  write_json_file(dir / "library.json", manifest);

  write_json_file(dir / "stats.json",
                  {{"chair", {{"mu_area", 0.25}, {"sigma_area", 0.04}, {"z_range", {2.0, 3.2}}}},
                   {"table", {{"mu_area", 0.85}, {"sigma_area", 0.15}, {"z_range", {2.6, 3.6}}}}});

  const double p = opt.pitch_deg * std::numbers::pi / 180;
  const double f = 140.0 * opt.width / 160.0;
  write_json_file(dir / "camera.json", {{"fx", f},
                                        {"fy", f},
                                        {"cx", opt.width / 2.0},
                                        {"cy", opt.height / 2.0},
                                        {"width", opt.width},
                                        {"height", opt.height},
                                        {"disparity_constant", 315.0},
                                        {"gravity", {0.0, -std::cos(p), -std::sin(p)}},
                                        {"floor_height", -1.2}});

  nlohmann::json cfg = default_config_json();
  cfg["paths"]["library"] = "library.json";
  cfg["paths"]["stats"] = "stats.json";
  cfg["paths"]["camera"] = "camera.json";
  cfg["paths"]["weights"] = "posenet.bin";
  cfg["network"]["architecture"] = "C(5,16,2,0)-RL-Pmax(3,2)-C(3,32,1,1)-RL-C(3,OUT,1,1)-Pavg";
  cfg["network"]["input_side"] = 33;
  cfg["synth"]["models_per_cat"] = opt.models_per_category;
  cfg["synth"]["poses_per_model"] = 16;
  cfg["synth"]["boxes_per_pose"] = 3;
  cfg["train"]["learning_rate"] = 0.02;
  cfg["train"]["batch_size"] = 32;
  cfg["train"]["epochs"] = 30;
  cfg["train"]["lr_step_epochs"] = 20;
  cfg["search"]["n_models"] = opt.models_per_category;
  write_json_file(dir / "config.json", cfg);
}

}  // namespace scene_align
