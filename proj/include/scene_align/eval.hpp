#pragma once

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scene_align/boxes3d.hpp"
#include "scene_align/geometry.hpp"
#include "scene_align/mesh.hpp"
#include "scene_align/render.hpp"

namespace scene_align {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct EvalConfig {
  double t_iou = 0.5;
  double t_agree = 7.0;      // disparity units; kInf allowed
  double t_occlusion = 5.0;  // disparity units

  void validate() const;
};

struct PRPoint {
  double recall = 0;
  double precision = 0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per detection in score order
  double ap = 0;
  bool defined = true;  // false when there are no ground truths
};

struct ScoredDetection {
  double score = 0;
  std::vector<double> overlaps;  // one per ground truth
};

// Greedy matching in descending score order (stable in input order) to the
// highest-overlap unmatched ground truth with overlap >= t_iou. AP is the area
// under the all-points precision envelope.
PRCurve average_precision(std::span<const ScoredDetection> detections, std::size_t n_gt, double t_iou);

struct OverlapCounts {
  std::size_t intersection = 0;
  std::size_t union_ = 0;
  std::size_t visible = 0;
  double iou() const { return union_ ? static_cast<double>(intersection) / union_ : 0.0; }
};

// Render-based overlap: rendered pixels not occluded by the observation
// (observed disparity - rendered disparity > t_occlusion) form P_visible;
// I counts P_visible & G pixels whose disparities agree within t_agree;
// U = |G | P_visible|. Pixels without observed depth are ignored.
OverlapCounts model_overlap_counts(const RenderOutput& pred, const Mask& gt, const DepthImage& observed,
                                   const CameraIntrinsics& k, const EvalConfig& cfg);
double model_overlap(const RenderOutput& pred, const Mask& gt, const DepthImage& observed,
                     const CameraIntrinsics& k, const EvalConfig& cfg);

struct GroundTruthInstance {
  std::string image_id;
  std::string category;
  Mask mask;
  std::optional<OrientedBox3D> box;
  bool difficult = false;
};

struct ModelPrediction {
  std::string image_id;
  std::string category;
  double score = 0;
  const TriangleMesh* mesh = nullptr;
  Placement placement;
};

struct EvalImage {
  DepthImage depth;
  CameraIntrinsics intrinsics;
  GeocentricFrame frame;
};

// Overlaps are computed for same-image, same-category pairs only.
PRCurve model_ap(std::span<const ModelPrediction> predictions, std::span<const GroundTruthInstance> gts,
                 const std::map<std::string, EvalImage>& images, const EvalConfig& cfg, int threads = 1);

struct BoxPrediction {
  std::string image_id;
  std::string category;
  double score = 0;
  OrientedBox3D box;
};

PRCurve detection_ap_3d(std::span<const BoxPrediction> predictions, std::span<const GroundTruthInstance> gts,
                        double t_iou = 0.25);

// Absolute top-view angle between two yaws, in [0, 180] degrees.
double angular_error_deg(double a, double b);

// For each threshold, the fraction of instances whose best (over the first k
// predicted bins) bin-center error is <= threshold.
std::vector<double> pose_accuracy_curve(std::span<const std::vector<int>> predicted_bins,
                                        std::span<const double> gt_yaws, int k, int n_posebin,
                                        std::span<const double> thresholds_deg);

}  // namespace scene_align
