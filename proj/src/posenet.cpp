#include "scene_align/posenet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "scene_align/error.hpp"
#include "scene_align/rng.hpp"

namespace scene_align::posenet {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowConst = Eigen::Map<const RowMat>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct Shape {
  int c, h, w;
};

int conv_filters(const Conv& cv, const NetworkSpec& spec) {
  return cv.filters == Conv::kOutputFilters ? spec.output_channels() : cv.filters;
}

// shapes[i] is the input shape of layer i; shapes.back() is the output.
std::vector<Shape> layer_shapes(const NetworkSpec& spec) {
  std::vector<Shape> shapes{{spec.in_channels, spec.input_side, spec.input_side}};
  for (const auto& layer : spec.layers) {
    Shape s = shapes.back();
    std::visit(Overloaded{
                   [&](const Conv& cv) {
                     const int h = (s.h + 2 * cv.pad - cv.kernel);
                     const int w = (s.w + 2 * cv.pad - cv.kernel);
                     if (h < 0 || w < 0 || cv.stride < 1)
                       throw InputError("network: convolution larger than its input");
                     s = {conv_filters(cv, spec), h / cv.stride + 1, w / cv.stride + 1};
                   },
                   [&](const MaxPool& mp) {
                     if (s.h < mp.kernel || s.w < mp.kernel || mp.stride < 1)
                       throw InputError("network: pooling window larger than its input");
                     s = {s.c, (s.h - mp.kernel) / mp.stride + 1, (s.w - mp.kernel) / mp.stride + 1};
                   },
                   [&](const GlobalAvgPool&) { s = {s.c, 1, 1}; },
                   [&](const auto&) {},
               },
               layer);
    shapes.push_back(s);
  }
  return shapes;
}

void im2col(const double* in, const Shape& is, const Conv& cv, int oh, int ow, RowMat& col) {
  const int k = cv.kernel;
  col.setZero(static_cast<Eigen::Index>(is.c) * k * k, static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < is.c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * cv.stride + ky - cv.pad;
          if (iy < 0 || iy >= is.h) continue;
          const double* src = in + (static_cast<std::size_t>(c) * is.h + iy) * is.w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * cv.stride + kx - cv.pad;
            if (ix >= 0 && ix < is.w) row[oy * ow + ox] = src[ix];
          }
        }
      }
}

void col2im(const RowMat& col, const Shape& is, const Conv& cv, int oh, int ow, double* out) {
  const int k = cv.kernel;
  for (int c = 0; c < is.c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * cv.stride + ky - cv.pad;
          if (iy < 0 || iy >= is.h) continue;
          double* dst = out + (static_cast<std::size_t>(c) * is.h + iy) * is.w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * cv.stride + kx - cv.pad;
            if (ix >= 0 && ix < is.w) dst[ix] += row[oy * ow + ox];
          }
        }
      }
}

// Saved state of one forward pass for backpropagation.
struct Trace {
  std::vector<Tensor> acts;            // acts[i] = input of layer i
  std::vector<std::vector<int>> index;  // max-pool argmax per layer
  std::vector<std::vector<double>> aux;  // dropout multipliers / LRN scales
};

void run_forward(const NetworkSpec& spec, const Weights& w, const Tensor& input, bool train_mode,
                 std::uint64_t dropout_seed, Trace& tr) {
  const auto shapes = layer_shapes(spec);
  if (input.c != spec.in_channels || input.h != spec.input_side || input.w != spec.input_side)
    throw InputError("forward: input shape does not match the network's configured input");
  const int n = input.n;
  const std::size_t L = spec.layers.size();
  tr.acts.assign(1, input);
  tr.index.assign(L, {});
  tr.aux.assign(L, {});
  int conv_idx = 0;

  for (std::size_t li = 0; li < L; ++li) {
    const Tensor& in = tr.acts.back();
    const Shape is = shapes[li], os = shapes[li + 1];
    Tensor out(n, os.c, os.h, os.w);
    std::visit(
        Overloaded{
            [&](const Conv& cv) {
              const Param& wp = w.params.at(2 * conv_idx);
              const Param& bp = w.params.at(2 * conv_idx + 1);
              ++conv_idx;
              MapRowConst wm(wp.values.data(), os.c, static_cast<Eigen::Index>(is.c) * cv.kernel * cv.kernel);
              RowMat col;
              for (int b = 0; b < n; ++b) {
                im2col(&in.data[in.offset(b, 0, 0, 0)], is, cv, os.h, os.w, col);
                MapRow ob(&out.data[out.offset(b, 0, 0, 0)], os.c, static_cast<Eigen::Index>(os.h) * os.w);
                ob.noalias() = wm * col;
                for (int o = 0; o < os.c; ++o) ob.row(o).array() += bp.values[o];
              }
            },
            [&](const Relu&) {
              for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = std::max(0.0, in.data[i]);
            },
            [&](const MaxPool& mp) {
              auto& arg = tr.index[li];
              arg.resize(out.size());
              for (int b = 0; b < n; ++b)
                for (int c = 0; c < is.c; ++c)
                  for (int oy = 0; oy < os.h; ++oy)
                    for (int ox = 0; ox < os.w; ++ox) {
                      std::size_t best = in.offset(b, c, oy * mp.stride, ox * mp.stride);
                      for (int ky = 0; ky < mp.kernel; ++ky)
                        for (int kx = 0; kx < mp.kernel; ++kx) {
                          const std::size_t idx = in.offset(b, c, oy * mp.stride + ky, ox * mp.stride + kx);
                          if (in.data[idx] > in.data[best]) best = idx;
                        }
                      const std::size_t o = out.offset(b, c, oy, ox);
                      out.data[o] = in.data[best];
                      arg[o] = static_cast<int>(best);
                    }
            },
            [&](const GlobalAvgPool&) {
              const double area = static_cast<double>(is.h) * is.w;
              for (int b = 0; b < n; ++b)
                for (int c = 0; c < is.c; ++c) {
                  const double* p = &in.data[in.offset(b, c, 0, 0)];
                  out.at(b, c, 0, 0) = std::accumulate(p, p + is.h * is.w, 0.0) / area;
                }
            },
            [&](const Lrn& lrn) {
              auto& scale = tr.aux[li];
              scale.resize(in.size());
              const int half = lrn.size / 2;
              for (int b = 0; b < n; ++b)
                for (int c = 0; c < is.c; ++c)
                  for (int y = 0; y < is.h; ++y)
                    for (int x = 0; x < is.w; ++x) {
                      double sum = 0;
                      for (int j = std::max(0, c - half); j <= std::min(is.c - 1, c + half); ++j) {
                        const double a = in.at(b, j, y, x);
                        sum += a * a;
                      }
                      const std::size_t o = in.offset(b, c, y, x);
                      scale[o] = lrn.kappa + lrn.alpha * sum;
                      out.data[o] = in.data[o] * std::pow(scale[o], -lrn.beta);
                    }
            },
            [&](const Dropout& d) {
              if (!train_mode || d.ratio <= 0) {
                out.data = in.data;
                return;
              }
              auto& mult = tr.aux[li];
              mult.resize(in.size());
              Rng rng = make_rng(dropout_seed, "dropout", {li});
              std::bernoulli_distribution keep(1.0 - d.ratio);
              const double inv = 1.0 / (1.0 - d.ratio);
              for (std::size_t i = 0; i < in.size(); ++i) {
                mult[i] = keep(rng) ? inv : 0.0;
                out.data[i] = in.data[i] * mult[i];
              }
            },
        },
        spec.layers[li]);
    tr.acts.push_back(std::move(out));
  }
}

// Returns parameter gradients given d(loss)/d(output).
Weights run_backward(const NetworkSpec& spec, const Weights& w, const Trace& tr, Tensor grad,
                     bool train_mode) {
  const auto shapes = layer_shapes(spec);
  Weights g = zeros_like(w);
  int conv_idx = 0;
  for (const auto& l : spec.layers) conv_idx += std::holds_alternative<Conv>(l) ? 1 : 0;

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const Tensor& in = tr.acts[li];
    const Shape is = shapes[li], os = shapes[li + 1];
    const int n = in.n;
    Tensor din(n, is.c, is.h, is.w);
    std::visit(
        Overloaded{
            [&](const Conv& cv) {
              --conv_idx;
              const Param& wp = w.params[2 * conv_idx];
              Param& gw = g.params[2 * conv_idx];
              Param& gb = g.params[2 * conv_idx + 1];
              const Eigen::Index kdim = static_cast<Eigen::Index>(is.c) * cv.kernel * cv.kernel;
              const Eigen::Index pix = static_cast<Eigen::Index>(os.h) * os.w;
              MapRowConst wm(wp.values.data(), os.c, kdim);
              MapRow gwm(gw.values.data(), os.c, kdim);
              RowMat col, dcol;
              for (int b = 0; b < n; ++b) {
                MapRowConst gout(&grad.data[grad.offset(b, 0, 0, 0)], os.c, pix);
                im2col(&in.data[in.offset(b, 0, 0, 0)], is, cv, os.h, os.w, col);
                gwm.noalias() += gout * col.transpose();
                for (int o = 0; o < os.c; ++o) gb.values[o] += gout.row(o).sum();
                if (li > 0) {
                  dcol.noalias() = wm.transpose() * gout;
                  col2im(dcol, is, cv, os.h, os.w, &din.data[din.offset(b, 0, 0, 0)]);
                }
              }
            },
            [&](const Relu&) {
              for (std::size_t i = 0; i < in.size(); ++i) din.data[i] = in.data[i] > 0 ? grad.data[i] : 0.0;
            },
            [&](const MaxPool&) {
              const auto& arg = tr.index[li];
              for (std::size_t o = 0; o < grad.size(); ++o) din.data[arg[o]] += grad.data[o];
            },
            [&](const GlobalAvgPool&) {
              const double area = static_cast<double>(is.h) * is.w;
              for (int b = 0; b < n; ++b)
                for (int c = 0; c < is.c; ++c) {
                  const double gv = grad.at(b, c, 0, 0) / area;
                  double* p = &din.data[din.offset(b, c, 0, 0)];
                  std::fill(p, p + is.h * is.w, gv);
                }
            },
            [&](const Lrn& lrn) {
              const auto& scale = tr.aux[li];
              const int half = lrn.size / 2;
              for (int b = 0; b < n; ++b)
                for (int y = 0; y < is.h; ++y)
                  for (int x = 0; x < is.w; ++x)
                    for (int c = 0; c < is.c; ++c) {
                      const std::size_t o = in.offset(b, c, y, x);
                      double acc = grad.data[o] * std::pow(scale[o], -lrn.beta);
                      double cross = 0;
                      for (int j = std::max(0, c - half); j <= std::min(is.c - 1, c + half); ++j) {
                        const std::size_t oj = in.offset(b, j, y, x);
                        cross += grad.data[oj] * in.data[oj] * std::pow(scale[oj], -lrn.beta - 1);
                      }
                      acc -= 2 * lrn.alpha * lrn.beta * in.data[o] * cross;
                      din.data[o] = acc;
                    }
            },
            [&](const Dropout& d) {
              if (!train_mode || d.ratio <= 0) {
                din.data = grad.data;
                return;
              }
              const auto& mult = tr.aux[li];
              for (std::size_t i = 0; i < grad.size(); ++i) din.data[i] = grad.data[i] * mult[i];
            },
        },
        spec.layers[li]);
    grad = std::move(din);
  }
  return g;
}

// Numerically stable log-softmax over a slice.
void log_softmax(const double* x, int n, double* out) {
  const double m = *std::max_element(x, x + n);
  double s = 0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  const double lse = m + std::log(s);
  for (int i = 0; i < n; ++i) out[i] = x[i] - lse;
}

void check_labels(const NetworkSpec& spec, int n, std::span<const int> labels,
                  std::span<const int> categories) {
  if (static_cast<int>(labels.size()) != n || static_cast<int>(categories.size()) != n)
    throw InputError("loss: labels and categories must match the batch size");
  for (int i = 0; i < n; ++i) {
    if (categories[i] < 0 || categories[i] >= spec.n_class)
      throw InputError("loss: invalid category id " + std::to_string(categories[i]));
    if (labels[i] < 0 || labels[i] > spec.n_posebin)
      throw InputError("loss: label out of range " + std::to_string(labels[i]));
  }
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t depth = 0, start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    if (s[i] == ')') --depth;
    if (s[i] == sep && depth == 0) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  out.emplace_back(s.substr(start));
  return out;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw InputError("weights file truncated");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw InputError("weights file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void NetworkSpec::validate() const {
  if (n_posebin < 1 || n_class < 1) throw InputError("network: n_posebin and n_class must be >= 1");
  if (input_side < 1 || in_channels < 1) throw InputError("network: invalid input size");
  if (layers.empty()) throw InputError("network: no layers");
  const auto shapes = layer_shapes(*this);
  const Shape& out = shapes.back();
  if (out.h != 1 || out.w != 1) throw InputError("network: output must be spatially 1x1 (end with Pavg)");
  if (out.c != output_channels())
    throw InputError("network: final width must equal (n_posebin + 1) * n_class");
}

NetworkSpec parse_architecture(std::string_view text, int n_posebin, int n_class, int input_side) {
  NetworkSpec spec;
  spec.n_posebin = n_posebin;
  spec.n_class = n_class;
  spec.input_side = input_side;
  for (std::string tok : split(text, '-')) {
    std::erase_if(tok, [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
    const auto paren = tok.find('(');
    const std::string head = tok.substr(0, paren);
    std::vector<std::string> args;
    if (paren != std::string::npos) {
      if (tok.back() != ')') throw InputError("architecture: unbalanced parentheses in " + tok);
      args = split(std::string_view(tok).substr(paren + 1, tok.size() - paren - 2), ',');
    }
    auto num = [&](std::size_t i) {
      try {
        return std::stod(args.at(i));
      } catch (const std::exception&) {
        throw InputError("architecture: bad argument in " + tok);
      }
    };
    if (head == "C") {
      if (args.size() < 3) throw InputError("architecture: C needs (k,n,s[,pad])");
      Conv cv;
      cv.kernel = static_cast<int>(num(0));
      cv.filters = args[1] == "OUT" ? Conv::kOutputFilters : static_cast<int>(num(1));
      cv.stride = static_cast<int>(num(2));
      cv.pad = args.size() > 3 ? static_cast<int>(num(3)) : 0;
      spec.layers.push_back(cv);
    } else if (head == "RL") {
      spec.layers.push_back(Relu{});
    } else if (head == "Pmax") {
      spec.layers.push_back(MaxPool{static_cast<int>(num(0)), static_cast<int>(num(1))});
    } else if (head == "Pavg") {
      spec.layers.push_back(GlobalAvgPool{});
    } else if (head == "N") {
      Lrn lrn;
      if (!args.empty()) {
        lrn.size = static_cast<int>(num(0));
        lrn.alpha = num(1);
        lrn.beta = num(2);
        lrn.kappa = num(3);
      }
      spec.layers.push_back(lrn);
    } else if (head == "D") {
      spec.layers.push_back(Dropout{num(0)});
    } else {
      throw InputError("architecture: unknown layer '" + tok + "'");
    }
  }
  spec.validate();
  return spec;
}

bool Weights::operator==(const Weights& o) const {
  if (params.size() != o.params.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto &a = params[i], &b = o.params[i];
    if (a.name != b.name || a.shape != b.shape || a.values.size() != b.values.size()) return false;
    if (std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

Weights init_weights(const NetworkSpec& spec, std::uint64_t seed, double stddev) {
  spec.validate();
  const auto shapes = layer_shapes(spec);
  Weights w;
  Rng rng = make_rng(seed, "init");
  std::normal_distribution<double> normal(0.0, stddev);
  int ci = 0;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto* cv = std::get_if<Conv>(&spec.layers[li]);
    if (!cv) continue;
    const int out = shapes[li + 1].c, in = shapes[li].c;
    Param wp{"conv" + std::to_string(ci) + ".weight", {out, in, cv->kernel, cv->kernel}, {}};
    wp.values.resize(static_cast<std::size_t>(out) * in * cv->kernel * cv->kernel);
    for (auto& v : wp.values) v = normal(rng);
    Param bp{"conv" + std::to_string(ci) + ".bias", {out}, std::vector<double>(out, 0.0)};
    w.params.push_back(std::move(wp));
    w.params.push_back(std::move(bp));
    ++ci;
  }
  return w;
}

Weights zeros_like(const Weights& w) {
  Weights z = w;
  for (auto& p : z.params) std::fill(p.values.begin(), p.values.end(), 0.0);
  return z;
}

void check_compatible(const NetworkSpec& spec, const Weights& w) {
  const Weights ref = init_weights(spec, 0, 0.0);
  if (ref.params.size() != w.params.size()) throw InputError("weights do not match the network: layer count");
  for (std::size_t i = 0; i < ref.params.size(); ++i)
    if (ref.params[i].name != w.params[i].name || ref.params[i].shape != w.params[i].shape)
      throw InputError("weights do not match the network at " + ref.params[i].name);
}

void save_weights(const std::filesystem::path& path, const Weights& w) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write weights: " + path.string());
  out.write("PNW1", 4);
  put_u32(out, static_cast<std::uint32_t>(w.params.size()));
  for (const auto& p : w.params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.values) put_f64(out, v);
  }
}

Weights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open weights: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "PNW1")
    throw InputError("not a PNW1 weights file: " + path.string());
  Weights w;
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    Param p;
    p.name.resize(get_u32(in));
    if (!in.read(p.name.data(), static_cast<std::streamsize>(p.name.size()))) throw InputError("weights file truncated");
    const std::uint32_t rank = get_u32(in);
    std::size_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      p.shape.push_back(static_cast<int>(get_u32(in)));
      total *= p.shape.back();
    }
    p.values.resize(total);
    for (auto& v : p.values) v = get_f64(in);
    w.params.push_back(std::move(p));
  }
  return w;
}

Tensor forward(const NetworkSpec& spec, const Weights& w, const Tensor& input, bool train_mode,
               std::uint64_t dropout_seed) {
  Trace tr;
  run_forward(spec, w, input, train_mode, dropout_seed, tr);
  return std::move(tr.acts.back());
}

double softmax_loss(const Tensor& logits, std::span<const int> labels, std::span<const int> categories,
                    int slice) {
  double loss = 0;
  std::vector<double> lp(slice);
  for (int b = 0; b < logits.n; ++b) {
    log_softmax(&logits.data[logits.offset(b, categories[b] * slice, 0, 0)], slice, lp.data());
    loss -= lp[labels[b]];
  }
  return loss / logits.n;
}

LossAndGrad loss_and_grad(const NetworkSpec& spec, const Weights& w, const Tensor& input,
                          std::span<const int> labels, std::span<const int> categories, bool train_mode,
                          std::uint64_t dropout_seed) {
  check_labels(spec, input.n, labels, categories);
  Trace tr;
  run_forward(spec, w, input, train_mode, dropout_seed, tr);
  const Tensor& logits = tr.acts.back();
  const int slice = spec.n_posebin + 1;
  const int n = input.n;

  Tensor grad(n, logits.c, 1, 1);
  double loss = 0;
  std::vector<double> lp(slice);
  for (int b = 0; b < n; ++b) {
    const std::size_t base = logits.offset(b, categories[b] * slice, 0, 0);
    log_softmax(&logits.data[base], slice, lp.data());
    loss -= lp[labels[b]];
    for (int j = 0; j < slice; ++j)
      grad.data[base + j] = (std::exp(lp[j]) - (j == labels[b] ? 1.0 : 0.0)) / n;
  }
  return {loss / n, run_backward(spec, w, tr, std::move(grad), train_mode)};
}

Tensor to_input(const NormalImage& crop) {
  const NormalImage* p = &crop;
  return to_batch(std::span<const NormalImage* const>(&p, 1));
}

Tensor to_batch(std::span<const NormalImage* const> crops) {
  if (crops.empty()) return {};
  const int h = crops[0]->height(), w = crops[0]->width();
  Tensor t(static_cast<int>(crops.size()), 3, h, w);
  for (int b = 0; b < t.n; ++b) {
    const NormalImage& img = *crops[b];
    if (img.width() != w || img.height() != h) throw InputError("to_batch: crops differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!img.valid(x, y)) continue;
        for (int c = 0; c < 3; ++c) t.at(b, c, y, x) = (img.bytes(x, y)[c] - 128.0) / 64.0;
      }
  }
  return t;
}

double top1_accuracy(const NetworkSpec& spec, const Weights& w, std::span<const TrainSample> data) {
  if (data.empty()) return 0;
  const int slice = spec.n_posebin + 1;
  constexpr std::size_t kChunk = 32;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    std::vector<const NormalImage*> crops;
    for (std::size_t i = start; i < end; ++i) crops.push_back(data[i].crop);
    const Tensor logits = forward(spec, w, to_batch(crops), false);
    for (std::size_t i = start; i < end; ++i) {
      const int b = static_cast<int>(i - start);
      const double* s = &logits.data[logits.offset(b, data[i].category * slice, 0, 0)];
      const int arg = static_cast<int>(std::max_element(s, s + slice) - s);
      correct += arg == data[i].label ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / data.size();
}

TrainResult train(const NetworkSpec& spec, std::span<const TrainSample> data, const TrainConfig& cfg,
                  const Weights* init) {
  spec.validate();
  if (data.empty()) throw InputError("train: empty dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 0 || cfg.learning_rate < 0 || cfg.momentum < 0 || cfg.weight_decay < 0)
    throw InputError("train: invalid training configuration");

  TrainResult res;
  res.weights = init ? *init : init_weights(spec, cfg.seed, cfg.init_stddev);
  check_compatible(spec, res.weights);
  Weights velocity = zeros_like(res.weights);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    if (cfg.lr_step_epochs > 0) lr *= std::pow(cfg.lr_gamma, epoch / cfg.lr_step_epochs);
    Rng shuffle = make_rng(cfg.seed, "order", {static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle);

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const NormalImage*> crops;
      std::vector<int> labels, cats;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = data[order[i]];
        crops.push_back(s.crop);
        labels.push_back(s.label);
        cats.push_back(s.category);
      }
      const auto lg = loss_and_grad(spec, res.weights, to_batch(crops), labels, cats, true,
                                    derive_seed(cfg.seed, "dropout", {step++}));
      if (!std::isfinite(lg.loss))
        throw ComputeError("train: loss became non-finite at epoch " + std::to_string(epoch) +
                           "; lower the learning rate");
      loss_sum += lg.loss * static_cast<double>(end - start);

      for (std::size_t p = 0; p < res.weights.params.size(); ++p) {
        auto& wv = res.weights.params[p].values;
        auto& vv = velocity.params[p].values;
        const auto& gv = lg.grad.params[p].values;
        const bool decay = p % 2 == 0;  // kernels only
        for (std::size_t i = 0; i < wv.size(); ++i) {
          const double g = gv[i] + (decay ? cfg.weight_decay * wv[i] : 0.0);
          vv[i] = cfg.momentum * vv[i] - lr * g;
          wv[i] += vv[i];
        }
      }
    }
    res.log.push_back({epoch + 1, loss_sum / data.size(), top1_accuracy(spec, res.weights, data)});
  }
  return res;
}

std::vector<PoseScore> rank_bins(std::span<const double> slice, int n_posebin, int k) {
  if (k < 1 || k > n_posebin) throw InputError("rank_bins: k must be in [1, n_posebin]");
  if (static_cast<int>(slice.size()) < n_posebin) throw InputError("rank_bins: slice too short");
  std::vector<double> lp(n_posebin);
  log_softmax(slice.data(), n_posebin, lp.data());
  std::vector<PoseScore> all(n_posebin);
  for (int b = 0; b < n_posebin; ++b) all[b] = {b, std::exp(lp[b])};
  std::stable_sort(all.begin(), all.end(), [](const PoseScore& a, const PoseScore& b) { return a.score > b.score; });
  all.resize(k);
  return all;
}

std::vector<PoseScore> predict_pose(const NetworkSpec& spec, const Weights& w, const NormalImage& crop,
                                    int category, int k) {
  if (category < 0 || category >= spec.n_class) throw InputError("predict_pose: unknown category");
  const Tensor logits = forward(spec, w, to_input(crop), false);
  const int slice = spec.n_posebin + 1;
  return rank_bins(std::span<const double>(&logits.data[category * slice], slice), spec.n_posebin, k);
}

}  // namespace scene_align::posenet
