#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scene_align/error.hpp"
#include "scene_align/pipeline.hpp"

namespace sa = scene_align;

int main(int argc, char** argv) {
  CLI::App app{"Gravity-aligned CAD model fitting for depth images"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file")->required();
  app.add_option("--set", overrides, "Override a config value (dotted.key=value)");

  std::string out, dataset, init_weights, log_csv, detections, depth, candidates, predictions, gt, model,
      placement_json, box_source = "model", stream = "scenes";
  bool with_floor = false;

  auto* synth = app.add_subcommand("synth", "Render a pose-classification dataset");
  synth->add_option("-o,--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train-pose", "Train the pose network");
  train->add_option("-d,--dataset", dataset, "Dataset directory")->required();
  train->add_option("-o,--out", out, "Output weights file")->required();
  train->add_option("--log", log_csv, "Per-epoch CSV log");
  train->add_option("--init", init_weights, "Start from these weights");

  auto* eval_pose = app.add_subcommand("eval-pose", "Pose accuracy curves on a dataset");
  eval_pose->add_option("-d,--dataset", dataset, "Dataset directory")->required();
  eval_pose->add_option("-o,--out", out, "Output CSV")->required();

  auto* scenes = app.add_subcommand("scenes", "Render synthetic test scenes with ground truth");
  scenes->add_option("-o,--out", out, "Output directory")->required();
  scenes->add_option("--stream", stream, "Random substream name");

  auto* fit = app.add_subcommand("fit", "Fit models to detections");
  fit->add_option("--detections", detections, "Detections JSONL")->required();
  fit->add_option("--depth", depth, "Depth PNG for rows without depth_png_path");
  fit->add_option("-o,--out", out, "Output placements JSONL")->required();
  fit->add_option("--candidates", candidates, "Also write every candidate with features");

  std::string cand_in;
  auto* select_train = app.add_subcommand("select-train", "Train the candidate selector");
  select_train->add_option("--candidates", cand_in, "Candidates JSONL from fit")->required();
  select_train->add_option("--gt", gt, "Ground truth JSONL")->required();
  select_train->add_option("-o,--out", out, "Output selector JSON")->required();

  auto* eval_modelap = app.add_subcommand("eval-modelap", "Model average precision");
  eval_modelap->add_option("--predictions", predictions, "Placements JSONL")->required();
  eval_modelap->add_option("--gt", gt, "Ground truth JSONL")->required();
  eval_modelap->add_option("-o,--out", out, "Output directory")->required();

  auto* eval_det3d = app.add_subcommand("eval-det3d", "3D box detection average precision");
  eval_det3d->add_option("--predictions", predictions, "Placements JSONL")->required();
  eval_det3d->add_option("--gt", gt, "Ground truth JSONL")->required();
  eval_det3d->add_option("-o,--out", out, "Output directory")->required();
  eval_det3d->add_option("--boxes", box_source, "model or segment");

  auto* render = app.add_subcommand("render", "Render a placed model");
  render->add_option("--model", model, "Model name")->required();
  render->add_option("--placement", placement_json, "JSON {\"s\":..,\"theta\":..,\"t\":[x,y,z]}")->required();
  render->add_flag("--floor", with_floor, "Composite the floor plane");
  render->add_option("-o,--out", out, "Output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const sa::PipelineConfig cfg = sa::load_config(config_path, overrides);
    if (*synth) {
      sa::cmd_synth(cfg, out);
    } else if (*train) {
      sa::cmd_train_pose(cfg, dataset, out, log_csv, init_weights);
    } else if (*eval_pose) {
      sa::cmd_eval_pose(cfg, dataset, out);
    } else if (*scenes) {
      sa::cmd_scenes(cfg, out, stream);
    } else if (*fit) {
      sa::cmd_fit(cfg, detections, depth, {out, candidates});
    } else if (*select_train) {
      sa::cmd_select_train(cfg, cand_in, gt, out);
    } else if (*eval_modelap) {
      sa::cmd_eval_modelap(cfg, predictions, gt, out);
    } else if (*eval_det3d) {
      sa::cmd_eval_det3d(cfg, predictions, gt, out, box_source);
    } else if (*render) {
      const auto doc = nlohmann::json::parse(placement_json, nullptr, false);
      if (doc.is_discarded()) throw sa::InputError("--placement is not valid JSON");
      sa::cmd_render(cfg, model, sa::placement_from_json(doc), with_floor, out);
    }
  } catch (const sa::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const sa::ComputeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
