#include "scene_align/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "scene_align/error.hpp"
#include "scene_align/parallel.hpp"
#include "scene_align/synthgen.hpp"

namespace scene_align {

void EvalConfig::validate() const {
  if (!(t_iou > 0 && t_iou <= 1)) throw InputError("eval: t_iou must be in (0, 1]");
  if (!(t_agree >= 0) || !(t_occlusion >= 0)) throw InputError("eval: thresholds must be >= 0");
}

PRCurve average_precision(std::span<const ScoredDetection> detections, std::size_t n_gt, double t_iou) {
  PRCurve curve;
  for (const auto& d : detections)
    if (!std::isfinite(d.score)) throw InputError("average_precision: non-finite score");
  if (n_gt == 0) {
    curve.defined = false;
    return curve;
  }
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });

  std::vector<char> matched(n_gt, 0);
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& ov = detections[order[rank]].overlaps;
    std::size_t best = n_gt;
    for (std::size_t g = 0; g < std::min(n_gt, ov.size()); ++g)
      if (!matched[g] && ov[g] >= t_iou && (best == n_gt || ov[g] > ov[best])) best = g;
    if (best < n_gt) {
      matched[best] = 1;
      ++tp;
    }
    curve.points.push_back({static_cast<double>(tp) / n_gt, static_cast<double>(tp) / (rank + 1)});
  }

  // Precision envelope from the right, integrated over recall steps.
  double env = 0, prev_recall = 0;
  std::vector<double> envelope(curve.points.size());
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    env = std::max(env, curve.points[i].precision);
    envelope[i] = env;
  }
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    curve.ap += (curve.points[i].recall - prev_recall) * envelope[i];
    prev_recall = curve.points[i].recall;
  }
  return curve;
}

OverlapCounts model_overlap_counts(const RenderOutput& pred, const Mask& gt, const DepthImage& observed,
                                   const CameraIntrinsics& k, const EvalConfig& cfg) {
  const int w = observed.width(), h = observed.height();
  if (pred.mask.width() != w || pred.mask.height() != h || gt.width() != w || gt.height() != h)
    throw InputError("model_overlap: image sizes differ");
  OverlapCounts c;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!observed.valid(u, v)) continue;
      const bool in_gt = gt(u, v) != 0;
      bool visible = false, agree = false;
      if (pred.mask(u, v)) {
        const double diff = disparity(observed.at(u, v), k) - disparity(pred.depth.at(u, v), k);
        visible = !(diff > cfg.t_occlusion);
        agree = std::abs(diff) <= cfg.t_agree;
      }
      c.visible += visible;
      c.union_ += (in_gt || visible);
      c.intersection += (in_gt && visible && agree);
    }
  }
  return c;
}

double model_overlap(const RenderOutput& pred, const Mask& gt, const DepthImage& observed,
                     const CameraIntrinsics& k, const EvalConfig& cfg) {
  return model_overlap_counts(pred, gt, observed, k, cfg).iou();
}

PRCurve model_ap(std::span<const ModelPrediction> predictions, std::span<const GroundTruthInstance> gts,
                 const std::map<std::string, EvalImage>& images, const EvalConfig& cfg, int threads) {
  cfg.validate();
  std::vector<ScoredDetection> dets(predictions.size());
  parallel_for(predictions.size(), threads, [&](std::size_t i) {
    const auto& p = predictions[i];
    dets[i].score = p.score;
    dets[i].overlaps.assign(gts.size(), 0.0);
    if (!p.mesh) throw InputError("model_ap: prediction without a mesh");
    auto it = images.find(p.image_id);
    if (it == images.end()) throw InputError("model_ap: no depth image for " + p.image_id);
    const EvalImage& img = it->second;
    std::optional<RenderOutput> r;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].image_id != p.image_id || gts[g].category != p.category) continue;
      if (!r) r = render(*p.mesh, p.placement, img.frame, img.intrinsics);
      dets[i].overlaps[g] = model_overlap(*r, gts[g].mask, img.depth, img.intrinsics, cfg);
    }
  });
  return average_precision(dets, gts.size(), cfg.t_iou);
}

PRCurve detection_ap_3d(std::span<const BoxPrediction> predictions, std::span<const GroundTruthInstance> gts,
                        double t_iou) {
  std::vector<ScoredDetection> dets;
  for (const auto& p : predictions) {
    ScoredDetection d{p.score, std::vector<double>(gts.size(), 0.0)};
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].image_id != p.image_id || gts[g].category != p.category) continue;
      if (!gts[g].box) throw InputError("detection_ap_3d: ground truth without a 3D box");
      d.overlaps[g] = box_iou3d(p.box, *gts[g].box);
    }
    dets.push_back(std::move(d));
  }
  return average_precision(dets, gts.size(), t_iou);
}

double angular_error_deg(double a, double b) {
  return std::abs(wrap_angle(a - b)) * 180.0 / std::numbers::pi;
}

std::vector<double> pose_accuracy_curve(std::span<const std::vector<int>> predicted_bins,
                                        std::span<const double> gt_yaws, int k, int n_posebin,
                                        std::span<const double> thresholds_deg) {
  if (k < 1) throw InputError("pose_accuracy_curve: k must be >= 1");
  if (predicted_bins.size() != gt_yaws.size()) throw InputError("pose_accuracy_curve: size mismatch");
  std::vector<double> best(gt_yaws.size(), kInf);
  for (std::size_t i = 0; i < gt_yaws.size(); ++i) {
    const auto& bins = predicted_bins[i];
    for (std::size_t j = 0; j < std::min<std::size_t>(k, bins.size()); ++j)
      best[i] = std::min(best[i], angular_error_deg(bin_center(bins[j], n_posebin), gt_yaws[i]));
  }
  std::vector<double> out;
  for (double t : thresholds_deg) {
    std::size_t hit = 0;
    for (double e : best) hit += e <= t;
    out.push_back(gt_yaws.empty() ? 0.0 : static_cast<double>(hit) / gt_yaws.size());
  }
  return out;
}

}  // namespace scene_align
