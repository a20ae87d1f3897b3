#include "scene_align/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "scene_align/boxes3d.hpp"
#include "scene_align/error.hpp"
#include "scene_align/image_io.hpp"
#include "scene_align/parallel.hpp"
#include "scene_align/rng.hpp"

namespace scene_align {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

json default_config_json() {
  return json{
      {"seed", 1},
      {"threads", 0},
      {"paths", {{"library", ""}, {"stats", ""}, {"camera", ""}, {"weights", ""}, {"selector", ""}}},
      {"network", {{"architecture", std::string(posenet::kDefaultArchitecture)}, {"input_side", 227}, {"n_posebin", 8}}},
      {"synth", {{"models_per_cat", 50}, {"poses_per_model", 10}, {"boxes_per_pose", 5}, {"background_per_pose", 1}}},
      {"train",
       {{"learning_rate", 0.01},
        {"momentum", 0.9},
        {"weight_decay", 5e-4},
        {"batch_size", 16},
        {"epochs", 10},
        {"lr_step_epochs", 0},
        {"lr_gamma", 0.1},
        {"init_stddev", 0.01}}},
      {"search",
       {{"n_scale", 10},
        {"n_models", 5},
        {"k", 2},
        {"pose_source", "network"},
        {"icp", {{"max_iterations", 50}, {"trim_fraction", 0.2}, {"yaw_tolerance", 1e-4}, {"translation_tolerance", 1e-4}}}}},
      {"select", {{"lambda", 1e-3}}},
      {"eval", {{"t_iou", 0.5}, {"t_occlusion", 5.0}, {"t_agree", {7.0, "inf"}}, {"t_iou_3d", 0.25}, {"box_delta", 2.0}}},
      {"scenes", {{"count", 10}}},
  };
}

namespace {

std::string kind(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

// Merges `user` into `base`, rejecting unknown keys and type changes.
void merge_checked(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw InputError("config: " + (where.empty() ? "document" : where) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw InputError("config: unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
      continue;
    }
    const bool numeric_ok = slot.is_number() && value.is_number() &&
                            (!slot.is_number_integer() || value.is_number_integer());
    if (!numeric_ok && kind(slot) != kind(value))
      throw InputError("config: '" + path + "' must be " + kind(slot) + ", got " + kind(value));
    slot = value;
  }
}

fs::path resolve(const std::string& p, const fs::path& base) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_relative() ? base / path : path;
}

double threshold_value(const json& v) {
  if (v.is_null() || (v.is_string() && (v == "inf" || v == "Infinity"))) return kInf;
  if (v.is_number()) return v.get<double>();
  throw InputError("config: eval.t_agree entries must be numbers or \"inf\"");
}

json threshold_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw InputError(what + " path is not configured");
  if (!fs::exists(p)) throw InputError(what + " not found: " + p.string());
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--set expects key=value, got '" + ov + "'");
    const std::string key = ov.substr(0, eq), raw = ov.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

PipelineConfig config_from_json(const json& doc, const fs::path& base_dir) {
  json full = default_config_json();
  merge_checked(full, doc, "");

  PipelineConfig c;
  const auto& paths = full["paths"];
  c.seed = full["seed"].get<std::uint64_t>();
  const int threads = full["threads"].get<int>();
  if (threads < 0) throw InputError("config: threads must be >= 0");
  c.threads = std::getenv("SCENE_ALIGN_THREADS") || threads == 0 ? default_threads() : threads;

  c.library = resolve(paths["library"], base_dir);
  c.stats = resolve(paths["stats"], base_dir);
  c.camera = resolve(paths["camera"], base_dir);
  c.weights = resolve(paths["weights"], base_dir);
  c.selector = resolve(paths["selector"], base_dir);

  const auto& net = full["network"];
  c.architecture = net["architecture"];
  c.input_side = net["input_side"];
  c.n_posebin = net["n_posebin"];
  if (c.input_side < 1 || c.n_posebin < 1) throw InputError("config: network sizes must be positive");

  const auto& sy = full["synth"];
  c.synth.models_per_cat = sy["models_per_cat"];
  c.synth.poses_per_model = sy["poses_per_model"];
  c.synth.boxes_per_pose = sy["boxes_per_pose"];
  c.synth.background_per_pose = sy["background_per_pose"];
  c.synth.n_posebin = c.n_posebin;
  c.synth.crop_size = c.input_side;
  c.synth.seed = derive_seed(c.seed, "synth");
  c.synth.threads = c.threads;
  if (c.synth.models_per_cat < 1 || c.synth.poses_per_model < 1 || c.synth.boxes_per_pose < 0 ||
      c.synth.background_per_pose < 0)
    throw InputError("config: synth counts out of range");

  const auto& tr = full["train"];
  c.train.learning_rate = tr["learning_rate"];
  c.train.momentum = tr["momentum"];
  c.train.weight_decay = tr["weight_decay"];
  c.train.batch_size = tr["batch_size"];
  c.train.epochs = tr["epochs"];
  c.train.lr_step_epochs = tr["lr_step_epochs"];
  c.train.lr_gamma = tr["lr_gamma"];
  c.train.init_stddev = tr["init_stddev"];
  c.train.seed = derive_seed(c.seed, "train");
  if (c.train.batch_size < 1 || c.train.epochs < 0 || c.train.learning_rate < 0)
    throw InputError("config: train values out of range");

  const auto& se = full["search"];
  c.search.n_scale = se["n_scale"];
  c.search.n_models = se["n_models"];
  c.search.k = se["k"];
  c.pose_source = se["pose_source"];
  if (c.pose_source != "network" && c.pose_source != "uniform")
    throw InputError("config: search.pose_source must be \"network\" or \"uniform\"");
  const auto& icp = se["icp"];
  c.search.icp.max_iterations = icp["max_iterations"];
  c.search.icp.trim_fraction = icp["trim_fraction"];
  c.search.icp.yaw_tolerance = icp["yaw_tolerance"];
  c.search.icp.translation_tolerance = icp["translation_tolerance"];
  c.search.validate();
  if (c.search.k > c.n_posebin) throw InputError("config: search.k cannot exceed network.n_posebin");

  const auto& ev = full["eval"];
  c.eval.t_iou = ev["t_iou"];
  c.eval.t_occlusion = ev["t_occlusion"];
  c.t_agree_values.clear();
  for (const auto& v : ev["t_agree"]) c.t_agree_values.push_back(threshold_value(v));
  if (c.t_agree_values.empty()) throw InputError("config: eval.t_agree needs at least one value");
  c.eval.t_agree = c.t_agree_values.front();
  c.eval.validate();
  c.t_iou_3d = ev["t_iou_3d"];
  c.box_delta = ev["box_delta"];
  if (!(c.t_iou_3d > 0 && c.t_iou_3d <= 1)) throw InputError("config: eval.t_iou_3d must be in (0, 1]");

  c.scene_count = full["scenes"]["count"];
  if (c.scene_count < 0) throw InputError("config: scenes.count must be >= 0");

  c.selector_lambda = full["select"]["lambda"];
  if (!(c.selector_lambda > 0)) throw InputError("config: select.lambda must be positive");

  // Architecture errors surface here rather than mid-run.
  network_spec(c, 1).validate();
  return c;
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw InputError("config file not found: " + path.string());
  json doc = read_json_file(path);
  if (!doc.is_object()) throw InputError("config: document must be an object");
  apply_overrides(doc, overrides);
  return config_from_json(doc, path.parent_path());
}

SelectorWeights default_selector() {
  SelectorWeights w;
  w.w.fill(0.0);
  w.w[6] = 1.0;  // iou_seg_explained
  return w;
}

posenet::NetworkSpec network_spec(const PipelineConfig& cfg, int n_class) {
  return posenet::parse_architecture(cfg.architecture, cfg.n_posebin, n_class, cfg.input_side);
}

// ---------------------------------------------------------------------------
// JSON helpers

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object())
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": not a JSON object");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

json placement_to_json(const Placement& p) {
  return json{{"s", p.scale}, {"theta", p.yaw}, {"t", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Placement placement_from_json(const json& j) {
  const json& src = j.contains("placement") ? j.at("placement") : j;
  try {
    Placement p;
    p.scale = src.at("s").get<double>();
    p.yaw = src.at("theta").get<double>();
    const auto& t = src.at("t");
    if (!t.is_array() || t.size() != 3) throw InputError("placement t must have 3 entries");
    p.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed placement: ") + e.what());
  }
}

namespace {

std::string get_string(const json& row, const char* key) {
  if (!row.contains(key) || !row[key].is_string()) throw InputError(std::string("row is missing string field '") + key + "'");
  return row[key].get<std::string>();
}

fs::path row_path(const json& row, const char* key, const fs::path& base) {
  const fs::path p = resolve(get_string(row, key), base);
  if (!fs::exists(p)) throw InputError(std::string(key) + " not found: " + p.string());
  return p;
}

struct Resources {
  CameraSetup camera;
  ModelLibrary library;
  StatsTable stats;
};

Resources load_resources(const PipelineConfig& cfg, bool need_stats) {
  require_file(cfg.camera, "camera file");
  require_file(cfg.library, "library manifest");
  if (need_stats) require_file(cfg.stats, "stats file");
  Resources r;
  r.camera = load_camera(cfg.camera);
  r.library = load_library(cfg.library);
  if (r.library.empty()) throw InputError("library is empty: " + cfg.library.string());
  if (need_stats) r.stats = load_stats(cfg.stats);
  return r;
}

int category_index(const std::vector<std::string>& cats, const std::string& c) {
  const auto it = std::find(cats.begin(), cats.end(), c);
  if (it == cats.end()) throw InputError("unknown category '" + c + "'");
  return static_cast<int>(it - cats.begin());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string scene_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", i);
  return buf;
}

// Caches images referenced by JSONL rows.
template <typename T, typename Load>
const T& cached(std::map<std::string, T>& cache, const fs::path& p, Load load) {
  auto it = cache.find(p.string());
  if (it == cache.end()) it = cache.emplace(p.string(), load(p)).first;
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

void cmd_synth(const PipelineConfig& cfg, const fs::path& out_dir) {
  const Resources r = load_resources(cfg, true);
  for (const auto& c : r.library.categories())
    if (!r.stats.count(c)) throw InputError("stats file has no entry for category '" + c + "'");
  const auto examples = make_dataset(r.library, r.stats, r.camera.frame, r.camera.intrinsics, cfg.synth);
  save_dataset(out_dir, examples);

  std::size_t n_fg = 0;
  for (const auto& e : examples) n_fg += e.label < cfg.n_posebin;
  json manifest{{"seed", cfg.seed},
                {"categories", r.library.categories()},
                {"n_posebin", cfg.n_posebin},
                {"crop_size", cfg.input_side},
                {"examples", examples.size()},
                {"foreground", n_fg},
                {"background", examples.size() - n_fg}};
  write_json_file(out_dir / "manifest.json", manifest);
}

namespace {

std::vector<posenet::TrainSample> train_samples(const std::vector<SynthExample>& data) {
  std::vector<posenet::TrainSample> out;
  out.reserve(data.size());
  for (const auto& e : data) out.push_back({&e.crop, e.label, e.category_id});
  return out;
}

}  // namespace

void cmd_train_pose(const PipelineConfig& cfg, const fs::path& dataset_dir, const fs::path& out_weights,
                    const fs::path& log_csv, const fs::path& init_weights) {
  require_file(cfg.library, "library manifest");
  const auto cats = load_library(cfg.library).categories();
  const auto spec = network_spec(cfg, static_cast<int>(cats.size()));
  spec.validate();
  std::optional<posenet::Weights> init;
  if (!init_weights.empty()) {
    require_file(init_weights, "initial weights");
    init = posenet::load_weights(init_weights);
    posenet::check_compatible(spec, *init);
  }
  const auto data = load_dataset(dataset_dir, cats);
  if (data.empty()) throw InputError("dataset is empty: " + dataset_dir.string());
  for (const auto& e : data)
    if (e.crop.width() != cfg.input_side || e.crop.height() != cfg.input_side)
      throw InputError("dataset crop size does not match network.input_side");

  const auto samples = train_samples(data);
  const auto result = posenet::train(spec, samples, cfg.train, init ? &*init : nullptr);
  posenet::save_weights(out_weights, result.weights);

  std::string csv = "epoch,loss,train_top1\n";
  for (const auto& l : result.log)
    csv += std::to_string(l.epoch) + "," + fmt_double(l.loss) + "," + fmt_double(l.train_top1) + "\n";
  if (!log_csv.empty()) write_text(log_csv, csv);
}

void cmd_eval_pose(const PipelineConfig& cfg, const fs::path& dataset_dir, const fs::path& out_csv) {
  require_file(cfg.library, "library manifest");
  require_file(cfg.weights, "weights file");
  const auto cats = load_library(cfg.library).categories();
  const auto spec = network_spec(cfg, static_cast<int>(cats.size()));
  const auto weights = posenet::load_weights(cfg.weights);
  posenet::check_compatible(spec, weights);
  const auto data = load_dataset(dataset_dir, cats);

  std::vector<const SynthExample*> fg;
  for (const auto& e : data)
    if (e.label < cfg.n_posebin) fg.push_back(&e);
  const int k = std::min(2, cfg.n_posebin);
  std::vector<std::vector<int>> bins(fg.size());
  parallel_for(fg.size(), cfg.threads, [&](std::size_t i) {
    for (const auto& s : posenet::predict_pose(spec, weights, fg[i]->crop, fg[i]->category_id, k))
      bins[i].push_back(s.bin);
  });
  std::vector<double> gt;
  for (const auto* e : fg) gt.push_back(e->theta_gt);
  std::vector<double> thresholds;
  for (int d = 0; d <= 45; ++d) thresholds.push_back(d);

  std::vector<std::vector<double>> curves;
  for (int kk = 1; kk <= k; ++kk) curves.push_back(pose_accuracy_curve(bins, gt, kk, cfg.n_posebin, thresholds));
  std::string csv = "delta_deg";
  for (int kk = 1; kk <= k; ++kk) csv += ",top" + std::to_string(kk);
  csv += "\n";
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    csv += std::to_string(static_cast<int>(thresholds[t]));
    for (const auto& c : curves) csv += "," + fmt_double(c[t]);
    csv += "\n";
  }
  write_text(out_csv, csv);
}

void cmd_scenes(const PipelineConfig& cfg, const fs::path& out_dir, const std::string& stream) {
  const Resources r = load_resources(cfg, true);
  const auto cats = r.library.categories();
  for (const auto& c : cats)
    if (!r.stats.count(c)) throw InputError("stats file has no entry for category '" + c + "'");
  const auto& k = r.camera.intrinsics;
  const auto& frame = r.camera.frame;

  struct Scene {
    std::string category, model;
    SceneSample sample;
  };
  std::vector<Scene> scenes(static_cast<std::size_t>(cfg.scene_count));
  parallel_for(scenes.size(), cfg.threads, [&](std::size_t i) {
    Scene& s = scenes[i];
    s.category = cats[i % cats.size()];
    const auto models = r.library.models(s.category);
    auto rng = make_rng(cfg.seed, stream, {i});
    const auto pick = std::uniform_int_distribution<std::size_t>(0, models.size() - 1)(rng);
    s.model = models[pick]->name;
    s.sample = sample_scene(models[pick]->mesh, r.stats.at(s.category), frame, k,
                            derive_seed(cfg.seed, stream, {i, 1}));
  });

  fs::create_directories(out_dir);
  std::vector<json> gt_rows, det_rows;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    const std::string id = scene_id(static_cast<int>(i));
    write_depth_png(out_dir / (id + "_depth.png"), s.sample.scene.depth);
    write_mask_png(out_dir / (id + "_mask.png"), s.sample.scene.mask);
    const auto& mesh = r.library.find(s.model).mesh;
    json g{{"image_id", id},
           {"category", s.category},
           {"model", s.model},
           {"placement", placement_to_json(s.sample.placement)},
           {"mask_png_path", id + "_mask.png"},
           {"depth_png_path", id + "_depth.png"},
           {"box3d", box_to_json(box_from_model(mesh, s.sample.placement))}};
    gt_rows.push_back(g);
    det_rows.push_back(json{{"image_id", id},
                            {"category", s.category},
                            {"score", 1.0},
                            {"mask_png_path", id + "_mask.png"},
                            {"depth_png_path", id + "_depth.png"}});
  }
  write_jsonl(out_dir / "gt.jsonl", gt_rows);
  write_jsonl(out_dir / "detections.jsonl", det_rows);
  write_json_file(out_dir / "camera.json", camera_to_json(r.camera));
}

void cmd_fit(const PipelineConfig& cfg, const fs::path& detections, const fs::path& depth_path,
             const FitOutputs& out) {
  if (!fs::exists(detections)) throw InputError("detections file not found: " + detections.string());
  const auto rows = read_jsonl(detections);
  const fs::path base = detections.parent_path();
  if (!depth_path.empty() && !fs::exists(depth_path)) throw InputError("depth image not found: " + depth_path.string());

  const Resources r = load_resources(cfg, true);
  const auto cats = r.library.categories();
  const auto& k = r.camera.intrinsics;
  const auto& frame = r.camera.frame;

  SelectorWeights selector = default_selector();
  if (!cfg.selector.empty()) {
    require_file(cfg.selector, "selector file");
    selector = selector_from_json(read_json_file(cfg.selector));
  }

  std::optional<posenet::NetworkSpec> spec;
  posenet::Weights weights;
  if (cfg.pose_source == "network" && !rows.empty()) {
    require_file(cfg.weights, "weights file");
    spec = network_spec(cfg, static_cast<int>(cats.size()));
    weights = posenet::load_weights(cfg.weights);
    posenet::check_compatible(*spec, weights);
  }

  // Validate every row before computing anything.
  struct Job {
    Detection det;
    fs::path depth;
  };
  std::vector<Job> jobs;
  for (const auto& row : rows) {
    Job j;
    j.det.image_id = row.value("image_id", std::string());
    j.det.category = get_string(row, "category");
    j.det.score = row.value("score", 1.0);
    category_index(cats, j.det.category);
    if (!r.stats.count(j.det.category)) throw InputError("stats file has no entry for '" + j.det.category + "'");
    j.det.mask = read_mask_png(row_path(row, "mask_png_path", base));
    if (row.contains("depth_png_path"))
      j.depth = row_path(row, "depth_png_path", base);
    else if (!depth_path.empty())
      j.depth = depth_path;
    else
      throw InputError("detection has no depth_png_path and no --depth was given");
    jobs.push_back(std::move(j));
  }

  std::map<std::string, DepthImage> depth_cache;
  std::map<std::string, NormalImage> normal_cache;
  std::vector<json> out_rows, cand_rows;
  for (const auto& job : jobs) {
    const DepthImage& depth = cached(depth_cache, job.depth, [](const fs::path& p) { return read_depth_png(p); });
    if (depth.width() != k.width || depth.height() != k.height)
      throw InputError("depth image size does not match the camera: " + job.depth.string());
    if (job.det.mask.width() != k.width || job.det.mask.height() != k.height)
      throw InputError("mask size does not match the camera for " + job.det.image_id);

    std::vector<double> yaws;
    json pose_bins = json::array();
    if (spec) {
      const NormalImage& normals = cached(normal_cache, job.depth, [&](const fs::path&) {
        return encode_normal_image(estimate_normals(depth, k), frame);
      });
      const auto box = mask_bounds(job.det.mask);
      if (box.area() <= 0) throw InputError("detection mask is empty for " + job.det.image_id);
      const auto crop = crop_and_warp(normals, box, cfg.input_side);
      for (const auto& s : posenet::predict_pose(*spec, weights, crop, category_index(cats, job.det.category),
                                                 cfg.search.k)) {
        yaws.push_back(bin_center(s.bin, cfg.n_posebin));
        pose_bins.push_back({{"bin", s.bin}, {"score", s.score}});
      }
    } else {
      for (int i = 0; i < cfg.search.k; ++i) yaws.push_back(wrap_angle(2 * std::numbers::pi * i / cfg.search.k));
    }

    const auto hyps = generate_hypotheses(job.det, yaws, r.stats.at(job.det.category), r.library, cfg.search, depth,
                                          k, frame);
    std::vector<FitCandidate> cands(hyps.size());
    std::vector<FitFeatures> feats(hyps.size());
    parallel_for(hyps.size(), cfg.threads, [&](std::size_t i) {
      const auto& mesh = r.library.find(hyps[i].model).mesh;
      cands[i] = icp_align(depth, job.det.mask, mesh, hyps[i], frame, k, cfg.search.icp);
      if (!cands[i].failed) {
        const auto rendered = render(mesh, cands[i].placement, frame, k);
        feats[i] = fit_features(rendered, depth, job.det.mask, k, cfg.eval.t_occlusion, cfg.eval.t_agree);
      }
    });
    const std::size_t best = select_best(cands, feats, selector);
    const auto& c = cands[best];
    const auto& mesh = r.library.find(c.hypothesis.model).mesh;

    json row{{"image_id", job.det.image_id},
             {"category", job.det.category},
             {"detection_score", job.det.score},
             {"score", job.det.score},
             {"selector_score", selector.score(feats[best])},
             {"model", c.hypothesis.model},
             {"placement", placement_to_json(c.placement)},
             {"residual", c.residual},
             {"iterations", c.iterations},
             {"n_candidates", cands.size()},
             {"pose_bins", pose_bins},
             {"box3d", box_to_json(box_from_model(mesh, c.placement))},
             {"box3d_segment", box_to_json(box_from_segment(job.det.mask, depth, k, frame, cfg.box_delta))}};
    out_rows.push_back(std::move(row));

    for (std::size_t i = 0; i < cands.size(); ++i) {
      json f = json::object();
      const auto vals = feats[i].values();
      for (std::size_t n = 0; n < FitFeatures::kCount; ++n) f[FitFeatures::names()[n]] = vals[n];
      cand_rows.push_back(json{{"image_id", job.det.image_id},
                               {"category", job.det.category},
                               {"candidate", i},
                               {"model", cands[i].hypothesis.model},
                               {"init", {{"s", cands[i].hypothesis.scale}, {"theta", cands[i].hypothesis.yaw0}}},
                               {"placement", placement_to_json(cands[i].placement)},
                               {"residual", std::isfinite(cands[i].residual) ? json(cands[i].residual) : json()},
                               {"iterations", cands[i].iterations},
                               {"failed", cands[i].failed},
                               {"selected", i == best},
                               {"features", f}});
    }
  }
  write_jsonl(out.placements, out_rows);
  if (!out.all_candidates.empty()) write_jsonl(out.all_candidates, cand_rows);
}

namespace {

struct GroundTruthSet {
  std::vector<GroundTruthInstance> instances;
  std::map<std::string, fs::path> depth_paths;  // per image
};

GroundTruthSet load_ground_truth(const fs::path& path, bool need_masks) {
  if (!fs::exists(path)) throw InputError("ground truth file not found: " + path.string());
  GroundTruthSet set;
  const fs::path base = path.parent_path();
  for (const auto& row : read_jsonl(path)) {
    GroundTruthInstance g;
    g.image_id = get_string(row, "image_id");
    g.category = get_string(row, "category");
    g.difficult = row.value("difficult", false);
    if (need_masks) g.mask = read_mask_png(row_path(row, "mask_png_path", base));
    if (row.contains("box3d")) g.box = box_from_json(row["box3d"]);
    if (row.contains("depth_png_path")) {
      const auto p = row_path(row, "depth_png_path", base);
      auto [it, inserted] = set.depth_paths.emplace(g.image_id, p);
      if (!inserted && it->second != p) throw InputError("conflicting depth paths for image " + g.image_id);
    }
    set.instances.push_back(std::move(g));
  }
  return set;
}

double read_score(const json& row) {
  if (row.contains("score") && row["score"].is_number()) return row["score"].get<double>();
  throw InputError("prediction row is missing a numeric score");
}

std::vector<std::string> categories_in(const std::vector<GroundTruthInstance>& gts) {
  std::vector<std::string> cats;
  for (const auto& g : gts)
    if (std::find(cats.begin(), cats.end(), g.category) == cats.end()) cats.push_back(g.category);
  return cats;
}

template <typename Pred>
std::vector<Pred> filter_category(const std::vector<Pred>& v, const std::string& c) {
  std::vector<Pred> out;
  for (const auto& x : v)
    if (x.category == c) out.push_back(x);
  return out;
}

// Per-category AP and their mean, plus the per-category curves as CSV rows.
struct ApReport {
  json per_category = json::object();
  double mean = 0;
  std::string csv;
};

template <typename Fn>
ApReport report_by_category(const std::vector<std::string>& cats, Fn&& curve_for, const std::string& tag) {
  ApReport rep;
  int n_defined = 0;
  for (const auto& c : cats) {
    const PRCurve curve = curve_for(c);
    if (!curve.defined) {
      rep.per_category[c] = nullptr;
      continue;
    }
    rep.per_category[c] = curve.ap;
    rep.mean += curve.ap;
    ++n_defined;
    for (std::size_t i = 0; i < curve.points.size(); ++i)
      rep.csv += tag + "," + c + "," + std::to_string(i + 1) + "," + fmt_double(curve.points[i].recall) + "," +
                 fmt_double(curve.points[i].precision) + "\n";
  }
  if (n_defined) rep.mean /= n_defined;
  return rep;
}

}  // namespace

void cmd_eval_modelap(const PipelineConfig& cfg, const fs::path& predictions, const fs::path& ground_truth,
                      const fs::path& out_dir) {
  if (!fs::exists(predictions)) throw InputError("predictions file not found: " + predictions.string());
  const Resources r = load_resources(cfg, false);
  const auto gt = load_ground_truth(ground_truth, true);

  std::map<std::string, EvalImage> images;
  for (const auto& [id, path] : gt.depth_paths) {
    EvalImage img{read_depth_png(path), r.camera.intrinsics, r.camera.frame};
    images.emplace(id, std::move(img));
  }
  for (const auto& g : gt.instances)
    if (!images.count(g.image_id)) throw InputError("ground truth has no depth image for " + g.image_id);

  std::vector<ModelPrediction> preds;
  for (const auto& row : read_jsonl(predictions)) {
    ModelPrediction p;
    p.image_id = get_string(row, "image_id");
    p.category = get_string(row, "category");
    p.score = read_score(row);
    p.mesh = &r.library.find(get_string(row, "model")).mesh;
    p.placement = placement_from_json(row);
    if (!images.count(p.image_id)) throw InputError("prediction refers to unknown image " + p.image_id);
    preds.push_back(p);
  }

  const auto cats = categories_in(gt.instances);
  json results = json::array();
  std::string csv = "t_agree,category,rank,recall,precision\n";
  for (double t_agree : cfg.t_agree_values) {
    EvalConfig ec = cfg.eval;
    ec.t_agree = t_agree;
    const std::string tag = std::isinf(t_agree) ? "inf" : fmt_double(t_agree);
    const auto rep = report_by_category(
        cats,
        [&](const std::string& c) {
          const auto p = filter_category(preds, c);
          const auto g = filter_category(gt.instances, c);
          return model_ap(p, g, images, ec, cfg.threads);
        },
        tag);
    csv += rep.csv;
    results.push_back(json{{"t_agree", threshold_json(t_agree)}, {"ap", rep.mean}, {"per_category", rep.per_category}});
  }
  fs::create_directories(out_dir);
  write_text(out_dir / "modelap_pr.csv", csv);
  write_json_file(out_dir / "modelap.json",
                  json{{"t_iou", cfg.eval.t_iou}, {"t_occlusion", cfg.eval.t_occlusion}, {"results", results}});
}

void cmd_select_train(const PipelineConfig& cfg, const fs::path& candidates, const fs::path& ground_truth,
                      const fs::path& out_selector) {
  if (!fs::exists(candidates)) throw InputError("candidates file not found: " + candidates.string());
  const Resources r = load_resources(cfg, false);
  const auto gt = load_ground_truth(ground_truth, true);
  std::map<std::string, DepthImage> depths;
  for (const auto& [id, path] : gt.depth_paths) depths.emplace(id, read_depth_png(path));

  struct Row {
    std::string image_id, category;
    const TriangleMesh* mesh = nullptr;
    Placement placement;
    FitFeatures features;
  };
  std::vector<Row> rows;
  for (const auto& j : read_jsonl(candidates)) {
    if (j.value("failed", false)) continue;
    Row row;
    row.image_id = get_string(j, "image_id");
    row.category = get_string(j, "category");
    row.mesh = &r.library.find(get_string(j, "model")).mesh;
    row.placement = placement_from_json(j);
    if (!j.contains("features") || !j["features"].is_object()) throw InputError("candidate row has no features");
    std::array<double, FitFeatures::kCount> v{};
    for (std::size_t n = 0; n < FitFeatures::kCount; ++n) {
      const auto& name = FitFeatures::names()[n];
      if (!j["features"].contains(name)) throw InputError("candidate features lack '" + name + "'");
      v[n] = j["features"][name].get<double>();
    }
    auto& f = row.features;
    f.n_occluded = v[0];
    f.f_occluded = v[1];
    f.n_explained_model = v[2];
    f.f_explained_model = v[3];
    f.n_explained_seg = v[4];
    f.f_explained_seg = v[5];
    f.iou_seg_explained = v[6];
    f.iou_seg_unoccluded = v[7];
    f.bias = v[8];
    if (!depths.count(row.image_id)) throw InputError("ground truth has no depth image for " + row.image_id);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("no usable candidates in " + candidates.string());

  // A candidate is positive when its rendering matches some ground truth of
  // the same image and category under the modelAP overlap.
  std::vector<int> labels(rows.size(), 0);
  parallel_for(rows.size(), cfg.threads, [&](std::size_t i) {
    const auto& row = rows[i];
    const auto rendered = render(*row.mesh, row.placement, r.camera.frame, r.camera.intrinsics);
    for (const auto& g : gt.instances) {
      if (g.image_id != row.image_id || g.category != row.category) continue;
      if (model_overlap(rendered, g.mask, depths.at(row.image_id), r.camera.intrinsics, cfg.eval) >= cfg.eval.t_iou) {
        labels[i] = 1;
        break;
      }
    }
  });

  std::vector<FitFeatures> feats;
  for (const auto& row : rows) feats.push_back(row.features);
  const auto w = train_selector(feats, labels, cfg.selector_lambda);
  json doc = selector_to_json(w);
  doc["n_positive"] = std::count(labels.begin(), labels.end(), 1);
  doc["n_negative"] = std::count(labels.begin(), labels.end(), 0);
  write_json_file(out_selector, doc);
}

void cmd_eval_det3d(const PipelineConfig& cfg, const fs::path& predictions, const fs::path& ground_truth,
                    const fs::path& out_dir, const std::string& box_source) {
  if (box_source != "model" && box_source != "segment")
    throw InputError("box source must be \"model\" or \"segment\"");
  if (!fs::exists(predictions)) throw InputError("predictions file not found: " + predictions.string());
  const auto gt = load_ground_truth(ground_truth, false);
  for (const auto& g : gt.instances)
    if (!g.box) throw InputError("ground truth row for " + g.image_id + " has no box3d");

  const char* field = box_source == "model" ? "box3d" : "box3d_segment";
  std::vector<BoxPrediction> preds;
  for (const auto& row : read_jsonl(predictions)) {
    BoxPrediction p;
    p.image_id = get_string(row, "image_id");
    p.category = get_string(row, "category");
    p.score = read_score(row);
    if (!row.contains(field)) throw InputError(std::string("prediction row has no ") + field);
    p.box = box_from_json(row[field]);
    preds.push_back(p);
  }

  const auto cats = categories_in(gt.instances);
  const auto rep = report_by_category(
      cats,
      [&](const std::string& c) {
        const auto p = filter_category(preds, c);
        const auto g = filter_category(gt.instances, c);
        return detection_ap_3d(p, g, cfg.t_iou_3d);
      },
      box_source);
  fs::create_directories(out_dir);
  write_text(out_dir / "det3d_pr.csv", "source,category,rank,recall,precision\n" + rep.csv);
  write_json_file(out_dir / "det3d.json", json{{"t_iou", cfg.t_iou_3d},
                                               {"box_source", box_source},
                                               {"ap", rep.mean},
                                               {"per_category", rep.per_category}});
}

void cmd_render(const PipelineConfig& cfg, const std::string& model, const Placement& placement, bool with_floor,
                const fs::path& out_prefix) {
  placement.validate();
  const Resources r = load_resources(cfg, false);
  const auto& mesh = r.library.find(model).mesh;
  const auto& k = r.camera.intrinsics;
  RenderOutput out = render(mesh, placement, r.camera.frame, k);
  if (with_floor) out = add_floor(out, r.camera.frame, k);
  const auto normals = encode_normal_image(estimate_normals(out.depth, k), r.camera.frame);
  const std::string p = out_prefix.string();
  if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
  write_depth_png(p + "_depth.png", out.depth);
  write_mask_png(p + "_mask.png", out.mask);
  write_normal_png(p + "_normals.png", p + "_normals_valid.png", normals);
}

}  // namespace scene_align
