#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scene_align/geometry.hpp"

namespace scene_align::posenet {

// Dense (n, c, h, w) array of doubles.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t offset(int in, int ic, int y, int x) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x;
  }
  double& at(int in, int ic, int y, int x) { return data[offset(in, ic, y, x)]; }
  double at(int in, int ic, int y, int x) const { return data[offset(in, ic, y, x)]; }
  std::size_t size() const { return data.size(); }
};

// Layer descriptors.
struct Conv {
  static constexpr int kOutputFilters = -1;  // resolved to (n_posebin + 1) * n_class
  int kernel = 3, filters = 1, stride = 1, pad = 0;
};
struct Relu {};
struct MaxPool {
  int kernel = 3, stride = 2;
};
struct GlobalAvgPool {};
// Cross-channel normalization: b = a / (kappa + alpha * sum a^2)^beta over
// `size` neighboring channels.
struct Lrn {
  int size = 5;
  double alpha = 1e-4, beta = 0.75, kappa = 2.0;
};
struct Dropout {
  double ratio = 0.5;
};

using Layer = std::variant<Conv, Relu, MaxPool, GlobalAvgPool, Lrn, Dropout>;

// Layer string grammar, '-'-separated:
//   C(k,n,s[,pad])  n may be OUT for the class-slice output width
//   RL  Pmax(k,s)  Pavg (global)  N[(size,alpha,beta,kappa)]  D(r)
inline constexpr std::string_view kDefaultArchitecture =
    "C(7,96,4,0)-RL-Pmax(3,2)-D(0.5)-N-C(5,128,2,2)-RL-Pmax(3,2)-N-C(3,OUT,1,1)-RL-Pavg";

struct NetworkSpec {
  std::vector<Layer> layers;
  int input_side = 227;
  int in_channels = 3;
  int n_posebin = 8;
  int n_class = 1;

  int output_channels() const { return (n_posebin + 1) * n_class; }
  // Throws InputError when the layer stack does not fit the input size or the
  // final width is not (n_posebin + 1) * n_class.
  void validate() const;
};

NetworkSpec parse_architecture(std::string_view text, int n_posebin, int n_class, int input_side);

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

// Per conv layer i: "conv<i>.weight" (filters, channels, k, k) then "conv<i>.bias".
struct Weights {
  std::vector<Param> params;
  bool operator==(const Weights& o) const;
};

Weights init_weights(const NetworkSpec& spec, std::uint64_t seed, double stddev = 0.01);
Weights zeros_like(const Weights& w);

// Binary container: "PNW1", u32 count, then per entry u32 name length, name,
// u32 rank, u32 dims..., f64 values. Little-endian.
void save_weights(const std::filesystem::path& path, const Weights& w);
Weights load_weights(const std::filesystem::path& path);
// Throws InputError if the weights do not match the spec's layer shapes.
void check_compatible(const NetworkSpec& spec, const Weights& w);

// Logits as an (n, (n_posebin+1)*n_class) tensor stored in (n, C, 1, 1).
// Dropout is applied only in train mode, with masks drawn from dropout_seed.
Tensor forward(const NetworkSpec& spec, const Weights& w, const Tensor& input, bool train_mode,
               std::uint64_t dropout_seed = 0);

struct LossAndGrad {
  double loss = 0;
  Weights grad;
};

// Mean over the batch of the softmax cross-entropy on each example's
// category slice of n_posebin + 1 logits.
LossAndGrad loss_and_grad(const NetworkSpec& spec, const Weights& w, const Tensor& input,
                          std::span<const int> labels, std::span<const int> categories,
                          bool train_mode = true, std::uint64_t dropout_seed = 0);

// Loss alone on precomputed logits; exposed for testing.
double softmax_loss(const Tensor& logits, std::span<const int> labels,
                    std::span<const int> categories, int slice);

// Normal-image crop to a (1, 3, side, side) input: (byte - 128) / 64, 0 where invalid.
Tensor to_input(const NormalImage& crop);
// Stacks crops into one batch.
Tensor to_batch(std::span<const NormalImage* const> crops);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 16;
  int epochs = 10;
  int lr_step_epochs = 0;  // 0 disables step decay
  double lr_gamma = 0.1;
  double init_stddev = 0.01;
  std::uint64_t seed = 1;
};

struct TrainSample {
  const NormalImage* crop = nullptr;
  int label = 0;
  int category = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0;
  double train_top1 = 0;
};

struct TrainResult {
  Weights weights;
  std::vector<EpochLog> log;
};

// SGD with momentum and weight decay (on kernels, not biases). Deterministic
// for a fixed seed. Starts from `init` when given. Throws ComputeError if the
// loss becomes non-finite.
TrainResult train(const NetworkSpec& spec, std::span<const TrainSample> data, const TrainConfig& cfg,
                  const Weights* init = nullptr);

// Fraction of samples whose argmax over the category slice equals the label.
double top1_accuracy(const NetworkSpec& spec, const Weights& w, std::span<const TrainSample> data);

struct PoseScore {
  int bin = 0;
  double score = 0;
};

// Softmax over the n_posebin foreground logits of one category slice; top k
// by score, ties to the lower bin.
std::vector<PoseScore> rank_bins(std::span<const double> slice, int n_posebin, int k);

std::vector<PoseScore> predict_pose(const NetworkSpec& spec, const Weights& w,
                                    const NormalImage& crop, int category, int k);

}  // namespace scene_align::posenet
