#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "scene_align/error.hpp"
#include "scene_align/posenet.hpp"
#include "support.hpp"

using namespace scene_align;
using namespace scene_align::posenet;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  Tensor t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : t.data) v = d(rng);
  return t;
}

struct GradCheck {
  double max_rel = 0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
};

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Central differences on every parameter. Relative error uses the larger
// magnitude of the two estimates, floored to keep near-zero entries meaningful.
// With skip_kinks, entries whose eps and eps/100 estimates disagree (a ReLU or
// max-pool switch inside the stencil) are counted but not scored.
GradCheck finite_difference_check(const NetworkSpec& spec, Weights w, const Tensor& x, const std::vector<int>& labels,
                                  const std::vector<int>& cats, bool skip_kinks, double eps = 1e-3) {
  const std::uint64_t dseed = 99;
  const auto analytic = loss_and_grad(spec, w, x, labels, cats, true, dseed).grad;
  auto central = [&](std::size_t p, std::size_t i, double h) {
    const double orig = w.params[p].values[i];
    w.params[p].values[i] = orig + h;
    const double up = loss_and_grad(spec, w, x, labels, cats, true, dseed).loss;
    w.params[p].values[i] = orig - h;
    const double down = loss_and_grad(spec, w, x, labels, cats, true, dseed).loss;
    w.params[p].values[i] = orig;
    return (up - down) / (2 * h);
  };
  GradCheck r;
  for (std::size_t p = 0; p < w.params.size(); ++p)
    for (std::size_t i = 0; i < w.params[p].values.size(); ++i) {
      const double num = central(p, i, eps);
      const double ana = analytic.params[p].values[i];
      if (skip_kinks && rel_error(num, central(p, i, eps / 100)) > 1e-4) {
        ++r.kinks;
        continue;
      }
      r.max_rel = std::max(r.max_rel, rel_error(num, ana));
      ++r.checked;
    }
  return r;
}

GradCheck check_architecture(const std::string& arch, int side, std::uint64_t seed, bool skip_kinks) {
  const auto spec = parse_architecture(arch, 3, 2, side);
  auto w = init_weights(spec, seed, 0.5);
  std::mt19937_64 rng(seed);
  for (std::size_t p = 1; p < w.params.size(); p += 2)
    for (auto& b : w.params[p].values) b = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
  const auto x = random_tensor(3, 3, side, side, seed + 1);
  return finite_difference_check(spec, w, x, {0, 3, 2}, {0, 1, 1}, skip_kinks);
}

}  // namespace

TEST_CASE("architecture parsing") {
  const auto spec = parse_architecture(kDefaultArchitecture, 8, 2, 227);
  CHECK(spec.layers.size() == 12);
  CHECK(spec.output_channels() == 18);
  const auto& c0 = std::get<Conv>(spec.layers[0]);
  CHECK(c0.kernel == 7);
  CHECK(c0.filters == 96);
  CHECK(c0.stride == 4);
  CHECK(std::get<Conv>(spec.layers[9]).filters == Conv::kOutputFilters);
  CHECK(std::holds_alternative<GlobalAvgPool>(spec.layers.back()));
  const auto lrn = std::get<Lrn>(spec.layers[4]);
  CHECK(lrn.size == 5);
  CHECK(lrn.kappa == 2.0);

  CHECK_THROWS_AS(parse_architecture("C(3,4,1)-RL", 8, 1, 16), InputError);       // no pooling to 1x1
  CHECK_THROWS_AS(parse_architecture("C(3,4,1)-RL-Pavg", 8, 1, 16), InputError);  // width != 9
  CHECK_THROWS_AS(parse_architecture("C(3,OUT,1)-Q-Pavg", 8, 1, 16), InputError);
  CHECK_THROWS_AS(parse_architecture("C(31,OUT,1)-Pavg", 8, 1, 16), InputError);
}

TEST_CASE("default network runs at 227 pixels") {
  const auto spec = parse_architecture(kDefaultArchitecture, 8, 1, 227);
  const auto w = init_weights(spec, 1);
  const auto out = forward(spec, w, random_tensor(1, 3, 227, 227, 2), false);
  CHECK(out.c == 9);
  CHECK(out.h == 1);
  for (double v : out.data) CHECK(std::isfinite(v));
}

TEST_CASE("identity 1x1 convolution") {
  NetworkSpec spec;
  spec.layers = {Conv{1, 3, 1, 0}};
  spec.input_side = 5;
  Weights w{{{"conv0.weight", {3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1}}, {"conv0.bias", {3}, {0, 0, 0}}}};
  const auto x = random_tensor(2, 3, 5, 5, 4);
  CHECK(forward(spec, w, x, false).data == x.data);
}

TEST_CASE("relu and max pooling") {
  NetworkSpec relu;
  relu.layers = {Relu{}};
  relu.input_side = 4;
  Tensor neg(1, 3, 4, 4, -1.5);
  for (double v : forward(relu, {}, neg, false).data) CHECK(v == 0.0);

  NetworkSpec pool;
  pool.layers = {MaxPool{3, 2}};
  pool.input_side = 7;
  pool.in_channels = 1;
  Tensor ramp(1, 1, 7, 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) ramp.at(0, 0, y, x) = y * 7 + x;
  const auto out = forward(pool, {}, ramp, false);
  REQUIRE(out.h == 3);
  REQUIRE(out.w == 3);
  // Window maxima sit at each window's bottom-right corner.
  const std::vector<double> expected{16, 18, 20, 30, 32, 34, 44, 46, 48};
  CHECK(out.data == expected);
}

TEST_CASE("global average pooling ignores spatial order") {
  NetworkSpec spec;
  spec.layers = {GlobalAvgPool{}};
  spec.input_side = 6;
  auto x = random_tensor(1, 3, 6, 6, 8);
  const auto a = forward(spec, {}, x, false);
  std::mt19937_64 rng(1);
  for (int c = 0; c < 3; ++c)
    std::shuffle(x.data.begin() + c * 36, x.data.begin() + (c + 1) * 36, rng);
  const auto b = forward(spec, {}, x, false);
  for (int c = 0; c < 3; ++c) CHECK(a.data[c] == doctest::Approx(b.data[c]).epsilon(1e-12));
}

TEST_CASE("softmax loss") {
  Tensor zeros(4, 18, 1, 1, 0.0);
  const std::vector<int> labels{0, 8, 3, 5}, cats{0, 1, 1, 0};
  CHECK(softmax_loss(zeros, labels, cats, 9) == std::log(9.0));

  // Duplicating an example leaves the mean unchanged.
  const auto spec = parse_architecture("C(3,4,1,1)-RL-C(3,OUT,2,1)-Pavg", 8, 2, 8);
  const auto w = init_weights(spec, 3, 0.3);
  const auto x = random_tensor(1, 3, 8, 8, 5);
  Tensor xx(2, 3, 8, 8);
  std::copy(x.data.begin(), x.data.end(), xx.data.begin());
  std::copy(x.data.begin(), x.data.end(), xx.data.begin() + x.size());
  const double single = loss_and_grad(spec, w, x, std::vector<int>{2}, std::vector<int>{1}, false).loss;
  const double twice = loss_and_grad(spec, w, xx, std::vector<int>{2, 2}, std::vector<int>{1, 1}, false).loss;
  CHECK(twice == doctest::Approx(single).epsilon(1e-12));

  CHECK_THROWS_AS(loss_and_grad(spec, w, x, std::vector<int>{9}, std::vector<int>{0}), InputError);
  CHECK_THROWS_AS(loss_and_grad(spec, w, x, std::vector<int>{0}, std::vector<int>{2}), InputError);
}

TEST_CASE("gradients match finite differences per layer type") {
  for (const char* arch : {"C(3,OUT,1,1)-Pavg", "C(3,4,1,1)-RL-C(3,OUT,1,1)-Pavg",
                           "C(3,4,1,1)-Pmax(3,2)-C(3,OUT,1,1)-Pavg", "C(3,6,1,1)-N-C(3,OUT,1,1)-Pavg",
                           "C(3,4,1,1)-D(0.5)-C(3,OUT,1,1)-Pavg", "C(3,4,2,0)-C(2,OUT,1,1)-Pavg"}) {
    const std::string name = arch;
    CAPTURE(name);
    const auto r = check_architecture(arch, 9, 21, true);
    CHECK(r.checked > 0);
    CHECK(r.kinks * 20 <= r.checked);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("gradients of the composed tiny network") {
  const auto r = check_architecture("C(3,4,1,1)-RL-Pmax(3,2)-D(0.5)-N-C(3,OUT,1,1)-RL-Pavg", 9, 5, false);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("bin ranking") {
  const std::vector<double> logits{0.1, 0.2, 0.0, 3.0, -1.0, 0.5, 0.3, 0.2, 9.0};
  const auto top = rank_bins(logits, 8, 2);
  CHECK(top[0].bin == 3);  // the background logit (index 8) is ignored
  CHECK(top[1].bin == 5);

  const std::vector<double> flat(9, 0.7);
  const auto tie = rank_bins(flat, 8, 2);
  CHECK(tie[0].bin == 0);
  CHECK(tie[1].bin == 1);

  const auto all = rank_bins(logits, 8, 8);
  double sum = 0;
  for (const auto& s : all) sum += s.score;
  CHECK(std::abs(sum - 1.0) < 1e-9);

  std::vector<double> shifted = logits;
  for (auto& v : shifted) v += 123.0;
  const auto all2 = rank_bins(shifted, 8, 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(all2[i].bin == all[i].bin);
    CHECK(std::abs(all2[i].score - all[i].score) < 1e-9);
  }
  CHECK_THROWS_AS(rank_bins(logits, 8, 9), InputError);
}

TEST_CASE("input normalization") {
  NormalImage img{Grid<Rgb8>(2, 1, Rgb8{128, 192, 64}), Mask(2, 1, 1)};
  img.valid(1, 0) = 0;
  const auto t = to_input(img);
  CHECK(t.at(0, 0, 0, 0) == 0.0);
  CHECK(t.at(0, 1, 0, 0) == 1.0);
  CHECK(t.at(0, 2, 0, 0) == -1.0);
  CHECK(t.at(0, 1, 0, 1) == 0.0);
}

TEST_CASE("training") {
  const auto spec = parse_architecture("C(3,8,1,1)-RL-Pmax(2,2)-C(3,OUT,1,1)-RL-Pavg", 4, 1, 8);
  std::vector<NormalImage> crops;
  std::vector<TrainSample> data;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 10; ++i) {
    NormalImage img{Grid<Rgb8>(8, 8), Mask(8, 8, 1)};
    for (auto& px : img.bytes.data()) px = Rgb8{std::uint8_t(byte(rng)), std::uint8_t(byte(rng)), std::uint8_t(byte(rng))};
    crops.push_back(img);
  }
  for (int i = 0; i < 10; ++i) data.push_back({&crops[i], i % 5, 0});

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 8;

  SUBCASE("same seed, same weights") {
    const auto a = train(spec, data, cfg);
    const auto b = train(spec, data, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.log.size() == 3);
  }
  SUBCASE("zero learning rate leaves weights unchanged") {
    cfg.learning_rate = 0;
    const auto init = init_weights(spec, 5);
    CHECK(train(spec, data, cfg, &init).weights == init);
  }
  SUBCASE("divergence is reported") {
    cfg.learning_rate = 1e6;
    cfg.epochs = 50;
    CHECK_THROWS_AS(train(spec, data, cfg), ComputeError);
  }
}

TEST_CASE("weights file round-trip") {
  const auto dir = test_support::scratch_dir("posenet_weights");
  const auto spec = parse_architecture("C(3,4,1,1)-RL-C(3,OUT,2,1)-Pavg", 8, 2, 8);
  const auto w = init_weights(spec, 12);
  save_weights(dir / "w.bin", w);
  const auto back = load_weights(dir / "w.bin");
  CHECK(back == w);
  check_compatible(spec, back);
  const auto other = parse_architecture("C(3,5,1,1)-RL-C(3,OUT,2,1)-Pavg", 8, 2, 8);
  CHECK_THROWS_AS(check_compatible(other, back), InputError);
  {
    std::ofstream f(dir / "bad.bin", std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS(load_weights(dir / "bad.bin"), InputError);
}
