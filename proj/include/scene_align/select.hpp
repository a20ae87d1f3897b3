#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scene_align/align.hpp"
#include "scene_align/render.hpp"

namespace scene_align {

// Fit-quality statistics of one aligned candidate against the observation.
// Only pixels with valid observed depth take part.
struct FitFeatures {
  double n_occluded = 0;
  double f_occluded = 0;
  double n_explained_model = 0;
  double f_explained_model = 0;
  double n_explained_seg = 0;
  double f_explained_seg = 0;
  double iou_seg_explained = 0;
  double iou_seg_unoccluded = 0;
  double bias = 1.0;

  // Denominators behind the fractions, for inspection.
  double model_pixels = 0;
  double seg_pixels = 0;

  static constexpr std::size_t kCount = 9;
  std::array<double, kCount> values() const;
  static const std::array<std::string, kCount>& names();
};

// A model pixel (rendered, with valid observed depth) is occluded when the
// observed disparity exceeds the rendered one by more than t_occ, and
// explained when it is not occluded and the disparities differ by at most
// t_agree.
FitFeatures fit_features(const RenderOutput& model, const DepthImage& observed, const Mask& seg,
                         const CameraIntrinsics& k, double t_occ, double t_agree);

struct SelectorWeights {
  std::array<double, FitFeatures::kCount> w{};  // last entry multiplies the bias feature
  double lambda = 1e-3;

  double score(const FitFeatures& f) const;
};

// L2-regularized logistic regression (bias unpenalized), solved with damped
// Newton steps until the gradient norm drops below `tol`. labels are 0/1.
SelectorWeights train_selector(std::span<const FitFeatures> features, std::span<const int> labels,
                               double lambda = 1e-3, double tol = 1e-6);

// Mean logistic loss plus penalty, and its gradient; exposed for tests.
double selector_objective(const SelectorWeights& w, std::span<const FitFeatures> features,
                          std::span<const int> labels, std::array<double, FitFeatures::kCount>* grad);

// Highest score among non-failed candidates; ties go to the lower residual,
// then the earlier index. Throws ComputeError if every candidate failed.
std::size_t select_best(std::span<const FitCandidate> candidates, std::span<const FitFeatures> features,
                        const SelectorWeights& weights);

nlohmann::json selector_to_json(const SelectorWeights& w);
SelectorWeights selector_from_json(const nlohmann::json& j);

}  // namespace scene_align
