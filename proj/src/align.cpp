#include "scene_align/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "scene_align/error.hpp"
#include "scene_align/kdtree.hpp"
#include "scene_align/render.hpp"

namespace scene_align {

void IcpParams::validate() const {
  if (max_iterations < 1) throw InputError("icp: max_iterations must be >= 1");
  if (!(trim_fraction >= 0 && trim_fraction < 1)) throw InputError("icp: trim_fraction must be in [0, 1)");
  if (!(yaw_tolerance >= 0 && translation_tolerance >= 0)) throw InputError("icp: tolerances must be >= 0");
}

void SearchConfig::validate() const {
  if (n_scale < 1 || n_models < 1 || k < 1) throw InputError("search: counts must be >= 1");
  icp.validate();
}

std::vector<double> sample_scales(double mu_area, double sigma_area, int n) {
  if (n < 1) throw InputError("sample_scales: n must be >= 1");
  if (!(sigma_area >= 0)) throw InputError("sample_scales: sigma must be non-negative");
  std::vector<double> out(n, mu_area);
  if (sigma_area == 0) return out;
  const boost::math::normal_distribution<double> dist(mu_area, sigma_area);
  for (int i = 0; i < n; ++i) {
    const double a = boost::math::quantile(dist, (i + 0.5) / n);
    out[i] = a > 0 ? a : 0.01 * mu_area;
  }
  return out;
}

namespace {
double median(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  const double hi = v[m];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + m));
}
}  // namespace

Vec3 init_translation(const Mask& mask, const DepthImage& depth, const CameraIntrinsics& k,
                      const GeocentricFrame& frame, const TriangleMesh& mesh, double scale, double /*yaw0*/) {
  const PointCloud pts = backproject(depth, k, &mask, &frame);
  if (pts.empty()) throw InputError("init_translation: mask has no valid depth");
  std::vector<double> xs, zs;
  for (const auto& p : pts.points) {
    xs.push_back(p.x());
    zs.push_back(p.z());
  }
  // Yaw does not change heights, so only the scaled lowest vertex matters.
  double min_y = std::numeric_limits<double>::infinity();
  for (const auto& v : mesh.canonical_vertices()) min_y = std::min(min_y, v.y());
  return {median(std::move(xs)), frame.floor_height - scale * min_y, median(std::move(zs))};
}

YawFit constrained_rigid_fit(std::span<const Vec3> source, std::span<const Vec3> target, const Vec3& up) {
  if (source.empty() || source.size() != target.size())
    throw InputError("constrained_rigid_fit: need matching, non-empty point lists");
  const double n = static_cast<double>(source.size());
  Vec3 ps = Vec3::Zero(), qs = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    ps += source[i];
    qs += target[i];
  }
  const Vec3 pbar = ps / n, qbar = qs / n;
  double sin_sum = 0, cos_sum = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    Vec3 a = source[i] - pbar, b = target[i] - qbar;
    a -= a.dot(up) * up;
    b -= b.dot(up) * up;
    sin_sum += a.cross(b).dot(up);
    cos_sum += a.dot(b);
  }
  YawFit fit;
  fit.yaw = (sin_sum == 0 && cos_sum == 0) ? 0.0 : std::atan2(sin_sum, cos_sum);
  fit.translation = qbar - axis_rotation(up, fit.yaw) * pbar;
  return fit;
}

double rigid_objective(std::span<const Vec3> source, std::span<const Vec3> target, const Vec3& up,
                       const YawFit& fit) {
  const Mat3 r = axis_rotation(up, fit.yaw);
  double sum = 0;
  for (std::size_t i = 0; i < source.size(); ++i)
    sum += (r * source[i] + fit.translation - target[i]).squaredNorm();
  return sum;
}

FitCandidate icp_align(const DepthImage& depth, const Mask& mask, const TriangleMesh& mesh,
                       const Hypothesis& hyp, const GeocentricFrame& frame, const CameraIntrinsics& k,
                       const IcpParams& params) {
  params.validate();
  const PointCloud object = backproject(depth, k, &mask, &frame);
  if (object.empty()) throw InputError("icp_align: mask has no valid depth");

  FitCandidate out;
  out.hypothesis = hyp;
  out.placement = {hyp.scale, wrap_angle(hyp.yaw0), hyp.t0};
  const Vec3 up = Vec3::UnitY();

  struct Pair {
    double dist2;
    int object_index;
    int model_index;
  };
  std::vector<Pair> pairs(object.size());
  std::vector<Vec3> src, dst;

  for (int it = 0; it < params.max_iterations; ++it) {
    const RenderOutput r = render(mesh, out.placement, frame, k);
    const PointCloud model = backproject(r.depth, k, &r.mask, &frame);
    if (model.empty()) {
      out.failed = true;
      out.residual = std::numeric_limits<double>::infinity();
      out.residuals.push_back(out.residual);
      out.iterations = it + 1;
      return out;
    }
    const KdTree tree(model.points);
    for (std::size_t i = 0; i < object.size(); ++i) {
      const auto hit = tree.nearest(object.points[i]);
      pairs[i] = {hit.dist2, static_cast<int>(i), hit.index};
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.object_index < b.object_index);
    });
    const std::size_t drop = static_cast<std::size_t>(std::floor(params.trim_fraction * pairs.size()));
    const std::size_t keep = std::max<std::size_t>(1, pairs.size() - drop);

    src.clear();
    dst.clear();
    double sq = 0;
    for (std::size_t i = 0; i < keep; ++i) {
      src.push_back(model.points[pairs[i].model_index]);
      dst.push_back(object.points[pairs[i].object_index]);
      sq += pairs[i].dist2;
    }
    out.residuals.push_back(std::sqrt(sq / keep));
    out.residual = out.residuals.back();
    out.iterations = it + 1;

    // Move the model onto the object: new = R(d) * old + dt.
    // The floor contact fixes height, so only the horizontal step is applied.
    YawFit step = constrained_rigid_fit(src, dst, up);
    step.translation.y() = 0;
    out.placement.yaw = wrap_angle(out.placement.yaw + step.yaw);
    out.placement.translation = yaw_rotation(step.yaw) * out.placement.translation + step.translation;

    if (std::abs(step.yaw) < params.yaw_tolerance && step.translation.norm() < params.translation_tolerance)
      break;
  }
  return out;
}

std::vector<Hypothesis> generate_hypotheses(const Detection& det, std::span<const double> pose_yaws,
                                            const CategoryStats& stats, const ModelLibrary& library,
                                            const SearchConfig& cfg, const DepthImage& depth,
                                            const CameraIntrinsics& k, const GeocentricFrame& frame) {
  cfg.validate();
  const auto models = library.models(det.category);
  if (models.empty()) throw InputError("generate_hypotheses: no models for category " + det.category);
  if (pose_yaws.empty()) throw InputError("generate_hypotheses: no pose hypotheses");
  const int n_pose = std::min<int>(cfg.k, static_cast<int>(pose_yaws.size()));
  const int n_models = std::min<int>(cfg.n_models, static_cast<int>(models.size()));
  const auto areas = sample_scales(stats.mu_area, stats.sigma_area, cfg.n_scale);

  std::vector<Hypothesis> out;
  for (int pi = 0; pi < n_pose; ++pi)
    for (double area : areas)
      for (int mi = 0; mi < n_models; ++mi) {
        const TriangleMesh& mesh = models[mi]->mesh;
        Hypothesis h;
        h.model = models[mi]->name;
        h.model_index = mi;
        h.scale = scale_to_area(mesh, area);
        h.yaw0 = wrap_angle(pose_yaws[pi]);
        h.t0 = init_translation(det.mask, depth, k, frame, mesh, h.scale, h.yaw0);
        out.push_back(std::move(h));
      }
  return out;
}

}  // namespace scene_align
