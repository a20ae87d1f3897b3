#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "scene_align/align.hpp"
#include "scene_align/eval.hpp"
#include "scene_align/posenet.hpp"
#include "scene_align/select.hpp"
#include "scene_align/synthgen.hpp"

namespace scene_align {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::uint64_t seed = 1;
  int threads = 1;

  fs::path library;   // manifest JSON
  fs::path stats;     // category statistics JSON
  fs::path camera;    // intrinsics + geocentric frame JSON
  fs::path weights;   // pose network weights (PNW1)
  fs::path selector;  // selector weights JSON; empty = built-in default

  std::string architecture{posenet::kDefaultArchitecture};
  int input_side = 227;
  int n_posebin = 8;

  SynthConfig synth;
  posenet::TrainConfig train;
  SearchConfig search;
  std::string pose_source = "network";  // or "uniform"
  EvalConfig eval;
  std::vector<double> t_agree_values{7.0, kInf};
  double t_iou_3d = 0.25;
  double box_delta = 2.0;
  double selector_lambda = 1e-3;
  int scene_count = 10;
};

// The full default document; it doubles as the schema: user documents may
// only use keys that appear here, with values of the same JSON type.
nlohmann::json default_config_json();

// Applies "dotted.key=value" overrides (value parsed as JSON, else string).
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

// Validates against the schema and converts. Relative paths resolve against
// `base_dir`. Throws InputError on any violation.
PipelineConfig config_from_json(const nlohmann::json& doc, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {});

// Built-in selector used when no trained weights are configured: score is
// iou_seg_explained.
SelectorWeights default_selector();

posenet::NetworkSpec network_spec(const PipelineConfig& cfg, int n_class);

// Subcommands. Each validates its inputs before writing anything.
void cmd_synth(const PipelineConfig& cfg, const fs::path& out_dir);
void cmd_train_pose(const PipelineConfig& cfg, const fs::path& dataset_dir, const fs::path& out_weights,
                    const fs::path& log_csv, const fs::path& init_weights = {});
void cmd_eval_pose(const PipelineConfig& cfg, const fs::path& dataset_dir, const fs::path& out_csv);
// Synthetic test scenes: depth/mask PNGs, gt.jsonl and detections.jsonl (oracle masks).
void cmd_scenes(const PipelineConfig& cfg, const fs::path& out_dir, const std::string& stream = "scenes");

struct FitOutputs {
  fs::path placements;      // one JSON row per detection
  fs::path all_candidates;  // optional: every fitted candidate with features
};
// depth may be empty when every detection names its own depth_png_path.
void cmd_fit(const PipelineConfig& cfg, const fs::path& detections, const fs::path& depth,
             const FitOutputs& out);
void cmd_select_train(const PipelineConfig& cfg, const fs::path& candidates, const fs::path& ground_truth,
                      const fs::path& out_selector);
void cmd_eval_modelap(const PipelineConfig& cfg, const fs::path& predictions, const fs::path& ground_truth,
                      const fs::path& out_dir);
void cmd_eval_det3d(const PipelineConfig& cfg, const fs::path& predictions, const fs::path& ground_truth,
                    const fs::path& out_dir, const std::string& box_source = "model");
void cmd_render(const PipelineConfig& cfg, const std::string& model, const Placement& placement,
                bool with_floor, const fs::path& out_prefix);

// JSON Lines helpers.
std::vector<nlohmann::json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& rows);

nlohmann::json placement_to_json(const Placement& p);
Placement placement_from_json(const nlohmann::json& j);

}  // namespace scene_align
