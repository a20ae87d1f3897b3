#include "scene_align/select.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "scene_align/error.hpp"

namespace scene_align {

std::array<double, FitFeatures::kCount> FitFeatures::values() const {
  return {n_occluded,      f_occluded,         n_explained_model, f_explained_model, n_explained_seg,
          f_explained_seg, iou_seg_explained, iou_seg_unoccluded, bias};
}

const std::array<std::string, FitFeatures::kCount>& FitFeatures::names() {
  static const std::array<std::string, kCount> kNames{
      "n_occluded",      "f_occluded",        "n_explained_model",  "f_explained_model", "n_explained_seg",
      "f_explained_seg", "iou_seg_explained", "iou_seg_unoccluded", "bias"};
  return kNames;
}

FitFeatures fit_features(const RenderOutput& model, const DepthImage& observed, const Mask& seg,
                         const CameraIntrinsics& k, double t_occ, double t_agree) {
  const int w = observed.width(), h = observed.height();
  if (model.mask.width() != w || model.mask.height() != h || seg.width() != w || seg.height() != h)
    throw InputError("fit_features: image sizes differ");

  std::size_t n_model = 0, n_seg = 0, n_occ = 0, n_expl = 0, n_unocc = 0;
  std::size_t seg_and_expl = 0, seg_and_unocc = 0;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!observed.valid(u, v)) continue;
      const bool in_seg = seg(u, v) != 0;
      n_seg += in_seg;
      if (!model.mask(u, v)) continue;
      ++n_model;
      const double d_obs = disparity(observed.at(u, v), k);
      const double d_ren = disparity(model.depth.at(u, v), k);
      const bool occluded = d_obs - d_ren > t_occ;
      const bool explained = !occluded && std::abs(d_obs - d_ren) <= t_agree;
      n_occ += occluded;
      n_unocc += !occluded;
      n_expl += explained;
      seg_and_expl += in_seg && explained;
      seg_and_unocc += in_seg && !occluded;
    }
  }
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  FitFeatures f;
  f.model_pixels = static_cast<double>(n_model);
  f.seg_pixels = static_cast<double>(n_seg);
  f.n_occluded = static_cast<double>(n_occ);
  f.f_occluded = ratio(f.n_occluded, f.model_pixels);
  f.n_explained_model = static_cast<double>(n_expl);
  f.f_explained_model = ratio(f.n_explained_model, f.model_pixels);
  f.n_explained_seg = static_cast<double>(seg_and_expl);
  f.f_explained_seg = ratio(f.n_explained_seg, f.seg_pixels);
  f.iou_seg_explained = ratio(static_cast<double>(seg_and_expl),
                              static_cast<double>(n_seg + n_expl - seg_and_expl));
  f.iou_seg_unoccluded = ratio(static_cast<double>(seg_and_unocc),
                               static_cast<double>(n_seg + n_unocc - seg_and_unocc));
  return f;
}

double SelectorWeights::score(const FitFeatures& f) const {
  const auto x = f.values();
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return s;
}

namespace {
constexpr std::size_t kDim = FitFeatures::kCount;
constexpr std::size_t kBiasIndex = kDim - 1;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace

double selector_objective(const SelectorWeights& w, std::span<const FitFeatures> features,
                          std::span<const int> labels, std::array<double, kDim>* grad) {
  const double n = static_cast<double>(features.size());
  double obj = 0;
  std::array<double, kDim> g{};
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto x = features[i].values();
    const double y = labels[i] ? 1.0 : -1.0;
    const double m = y * w.score(features[i]);
    obj += softplus(-m) / n;
    const double c = -y * sigmoid(-m) / n;
    for (std::size_t j = 0; j < kDim; ++j) g[j] += c * x[j];
  }
  for (std::size_t j = 0; j < kBiasIndex; ++j) {
    obj += 0.5 * w.lambda * w.w[j] * w.w[j];
    g[j] += w.lambda * w.w[j];
  }
  if (grad) *grad = g;
  return obj;
}

SelectorWeights train_selector(std::span<const FitFeatures> features, std::span<const int> labels,
                               double lambda, double tol) {
  if (features.size() != labels.size() || features.empty())
    throw InputError("train_selector: features and labels must be non-empty and aligned");
  const auto positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  if (positives == 0 || positives == static_cast<long>(labels.size()))
    throw InputError("train_selector: need at least one positive and one negative");
  if (!(lambda > 0)) throw InputError("train_selector: lambda must be positive");

  SelectorWeights w;
  w.lambda = lambda;
  const double n = static_cast<double>(features.size());
  std::array<double, kDim> g;
  double obj = selector_objective(w, features, labels, &g);

  for (int iter = 0; iter < 500; ++iter) {
    Eigen::Map<Eigen::Matrix<double, kDim, 1>> gv(g.data());
    if (gv.norm() < tol) break;
    Eigen::Matrix<double, kDim, kDim> hess = Eigen::Matrix<double, kDim, kDim>::Zero();
    for (const auto& f : features) {
      const auto xa = f.values();
      const Eigen::Map<const Eigen::Matrix<double, kDim, 1>> x(xa.data());
      const double p = sigmoid(w.score(f));
      hess += (p * (1 - p) / n) * x * x.transpose();
    }
    for (std::size_t j = 0; j < kBiasIndex; ++j) hess(j, j) += lambda;
    const Eigen::Matrix<double, kDim, 1> step = -hess.ldlt().solve(gv);

    // Backtracking line search on the objective.
    double t = 1.0;
    SelectorWeights trial = w;
    std::array<double, kDim> tg;
    double tobj = obj;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < kDim; ++j) trial.w[j] = w.w[j] + t * step(j);
      tobj = selector_objective(trial, features, labels, &tg);
      if (tobj <= obj + 1e-4 * t * gv.dot(step)) break;
      t *= 0.5;
    }
    if (!(tobj <= obj)) break;  // no further progress at machine precision
    w = trial;
    obj = tobj;
    g = tg;
  }
  return w;
}

std::size_t select_best(std::span<const FitCandidate> candidates, std::span<const FitFeatures> features,
                        const SelectorWeights& weights) {
  if (candidates.size() != features.size()) throw InputError("select_best: candidates and features differ in size");
  std::size_t best = candidates.size();
  double best_score = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].failed) continue;
    const double s = weights.score(features[i]);
    if (best == candidates.size() || s > best_score ||
        (s == best_score && candidates[i].residual < candidates[best].residual)) {
      best = i;
      best_score = s;
    }
  }
  if (best == candidates.size()) throw ComputeError("select_best: every candidate failed");
  return best;
}

nlohmann::json selector_to_json(const SelectorWeights& w) {
  const auto& names = FitFeatures::names();
  return {{"feature_names", std::vector<std::string>(names.begin(), names.end() - 1)},
          {"weights", std::vector<double>(w.w.begin(), w.w.end() - 1)},
          {"bias", w.w[kBiasIndex]},
          {"lambda", w.lambda}};
}

SelectorWeights selector_from_json(const nlohmann::json& j) {
  SelectorWeights w;
  try {
    const auto names = j.at("feature_names").get<std::vector<std::string>>();
    const auto vals = j.at("weights").get<std::vector<double>>();
    if (names.size() != vals.size()) throw InputError("selector: names and weights differ in length");
    const auto& known = FitFeatures::names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto it = std::find(known.begin(), known.end() - 1, names[i]);
      if (it == known.end() - 1) throw InputError("selector: unknown feature " + names[i]);
      w.w[it - known.begin()] = vals[i];
    }
    w.w[kBiasIndex] = j.at("bias").get<double>();
    w.lambda = j.value("lambda", 1e-3);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("selector JSON: ") + e.what());
  }
  for (double v : w.w)
    if (!std::isfinite(v)) throw InputError("selector: non-finite weight");
  return w;
}

}  // namespace scene_align
