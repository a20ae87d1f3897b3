#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "scene_align/geometry.hpp"
#include "scene_align/mesh.hpp"
#include "scene_align/synthgen.hpp"

namespace scene_align {

struct IcpParams {
  int max_iterations = 50;
  double trim_fraction = 0.2;
  double yaw_tolerance = 1e-4;          // radians
  double translation_tolerance = 1e-4;  // meters

  void validate() const;
};

struct SearchConfig {
  int n_scale = 10;
  int n_models = 5;
  int k = 2;  // pose hypotheses per detection
  IcpParams icp;

  void validate() const;
};

struct Hypothesis {
  std::string model;
  int model_index = 0;  // index into the category's model list
  double scale = 1.0;
  double yaw0 = 0.0;
  Vec3 t0 = Vec3::Zero();
};

struct FitCandidate {
  Hypothesis hypothesis;
  Placement placement;
  std::vector<double> residuals;  // trimmed RMS per iteration, meters
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool failed = false;
};

// n footprint areas at the normal quantiles (i + 0.5) / n; non-positive
// values are clamped to 0.01 * mu.
std::vector<double> sample_scales(double mu_area, double sigma_area, int n);

// Horizontal components: coordinate-wise medians of the backprojected mask
// points; vertical component rests the posed model on the floor.
Vec3 init_translation(const Mask& mask, const DepthImage& depth, const CameraIntrinsics& k,
                      const GeocentricFrame& frame, const TriangleMesh& mesh, double scale, double yaw0);

struct YawFit {
  double yaw = 0;
  Vec3 translation = Vec3::Zero();
};

// Least-squares rotation about `up` plus translation taking source onto target.
YawFit constrained_rigid_fit(std::span<const Vec3> source, std::span<const Vec3> target, const Vec3& up);

// Sum of squared residuals of a yaw fit; exposed for tests.
double rigid_objective(std::span<const Vec3> source, std::span<const Vec3> target, const Vec3& up,
                       const YawFit& fit);

// Trimmed point-to-point ICP between the observed mask points and the
// re-rendered model surface, with rotation restricted to yaw.
FitCandidate icp_align(const DepthImage& depth, const Mask& mask, const TriangleMesh& mesh,
                       const Hypothesis& hyp, const GeocentricFrame& frame, const CameraIntrinsics& k,
                       const IcpParams& params);

struct Detection {
  std::string image_id;
  std::string category;
  double score = 1.0;
  Mask mask;
};

// {pose yaws (first cfg.k)} x {cfg.n_scale scales} x {first cfg.n_models models}.
std::vector<Hypothesis> generate_hypotheses(const Detection& det, std::span<const double> pose_yaws,
                                            const CategoryStats& stats, const ModelLibrary& library,
                                            const SearchConfig& cfg, const DepthImage& depth,
                                            const CameraIntrinsics& k, const GeocentricFrame& frame);

}  // namespace scene_align
