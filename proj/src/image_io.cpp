#include "scene_align/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <algorithm>
#include <fstream>
#include <memory>
#include <vector>

#include <png.h>

#include "scene_align/error.hpp"

namespace scene_align {
namespace {

struct RawImage {
  int width = 0, height = 0, channels = 0, bit_depth = 8;
  std::vector<std::uint16_t> samples;  // row-major, interleaved channels
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RawImage read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("cannot open image: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("libpng initialization failed");
  }
  RawImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("malformed PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && img.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buf(rowbytes * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r) rows[r] = buf.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  for (int r = 0; r < img.height; ++r) {
    const png_byte* row = rows[r];
    for (std::size_t i = 0; i < static_cast<std::size_t>(img.width) * img.channels; ++i) {
      const std::size_t dst = static_cast<std::size_t>(r) * img.width * img.channels + i;
      if (img.bit_depth == 16) {
        img.samples[dst] = static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
      } else {
        img.samples[dst] = row[i];
      }
    }
  }
  return img;
}

void write_png(const fs::path& path, const RawImage& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("cannot write image: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ComputeError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ComputeError("PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  const int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed header: no timestamps, so identical inputs give identical bytes.
  png_write_info(png, info);

  const int bps = img.bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bps;
  std::vector<png_byte> row(rowbytes);
  for (int r = 0; r < img.height; ++r) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(img.width) * img.channels; ++i) {
      const std::uint16_t s = img.samples[static_cast<std::size_t>(r) * img.width * img.channels + i];
      if (bps == 2) {
        row[2 * i] = static_cast<png_byte>(s >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<png_byte>(s & 0xff);
      } else {
        row[i] = static_cast<png_byte>(s);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

DepthImage read_depth_png(const fs::path& path) {
  const RawImage raw = read_png(path);
  if (raw.channels != 1) throw InputError("depth PNG must be single-channel: " + path.string());
  DepthImage d(raw.width, raw.height);
  for (int v = 0; v < raw.height; ++v)
    for (int u = 0; u < raw.width; ++u)
      d.set(u, v, raw.samples[static_cast<std::size_t>(v) * raw.width + u] * 1e-3);
  return d;
}

void write_depth_png(const fs::path& path, const DepthImage& depth) {
  RawImage raw{depth.width(), depth.height(), 1, 16, {}};
  raw.samples.resize(depth.values().size());
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      std::uint16_t mm = 0;
      if (depth.valid(u, v)) {
        const long r = std::lround(depth.at(u, v) * 1000.0);
        mm = static_cast<std::uint16_t>(std::clamp(r, 1L, 65535L));
      }
      raw.samples[depth.values().index(u, v)] = mm;
    }
  }
  write_png(path, raw);
}

Mask read_mask_png(const fs::path& path) {
  const RawImage raw = read_png(path);
  Mask m(raw.width, raw.height, 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = raw.samples[i * raw.channels] ? 1 : 0;
  return m;
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  RawImage raw{mask.width(), mask.height(), 1, 8, {}};
  raw.samples.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) raw.samples[i] = mask[i] ? 255 : 0;
  write_png(path, raw);
}

void write_normal_png(const fs::path& rgb_path, const fs::path& valid_path,
                      const NormalImage& img) {
  RawImage raw{img.width(), img.height(), 3, 8, {}};
  raw.samples.resize(img.bytes.size() * 3);
  for (std::size_t i = 0; i < img.bytes.size(); ++i)
    for (int c = 0; c < 3; ++c) raw.samples[3 * i + c] = img.bytes[i][c];
  write_png(rgb_path, raw);
  write_mask_png(valid_path, img.valid);
}

NormalImage read_normal_png(const fs::path& rgb_path, const fs::path& valid_path) {
  const RawImage raw = read_png(rgb_path);
  if (raw.channels != 3) throw InputError("normal PNG must be RGB: " + rgb_path.string());
  NormalImage img{Grid<Rgb8>(raw.width, raw.height), read_mask_png(valid_path)};
  if (img.valid.width() != raw.width || img.valid.height() != raw.height)
    throw InputError("normal validity PNG size mismatch: " + valid_path.string());
  for (std::size_t i = 0; i < img.bytes.size(); ++i)
    for (int c = 0; c < 3; ++c) img.bytes[i][c] = static_cast<std::uint8_t>(raw.samples[3 * i + c]);
  return img;
}

CameraSetup camera_from_json(const nlohmann::json& j) {
  CameraSetup cam;
  try {
    auto& k = cam.intrinsics;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    k.disparity_constant = j.value("disparity_constant", 315.0);
    const auto g = j.at("gravity").get<std::vector<double>>();
    if (g.size() != 3) throw InputError("camera: gravity must have 3 components");
    cam.frame.gravity = Vec3(g[0], g[1], g[2]);
    cam.frame.floor_height = j.at("floor_height").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("camera JSON: ") + e.what());
  }
  cam.intrinsics.validate();
  cam.frame.validate();
  return cam;
}

nlohmann::json camera_to_json(const CameraSetup& cam) {
  const auto& k = cam.intrinsics;
  const auto& g = cam.frame.gravity;
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
          {"width", k.width}, {"height", k.height},
          {"disparity_constant", k.disparity_constant},
          {"gravity", {g.x(), g.y(), g.z()}}, {"floor_height", cam.frame.floor_height}};
}

CameraSetup load_camera(const fs::path& path) { return camera_from_json(read_json_file(path)); }

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace scene_align
