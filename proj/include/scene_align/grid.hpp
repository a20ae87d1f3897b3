#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace scene_align {

// Dense row-major 2D array indexed as (u, v) = (column, row).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool contains(int u, int v) const {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * width_ + u;
  }

  T& operator()(int u, int v) { return data_[index(u, v)]; }
  const T& operator()(int u, int v) const { return data_[index(u, v)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Binary pixel set (0 / 1 per pixel).
using Mask = Grid<std::uint8_t>;

inline std::size_t count(const Mask& m) {
  std::size_t n = 0;
  for (auto b : m.data()) n += b ? 1 : 0;
  return n;
}

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const {
    return width() > 0 && height() > 0 ? static_cast<long>(width()) * height() : 0;
  }
  bool operator==(const PixelBox&) const = default;
};

double box_iou(const PixelBox& a, const PixelBox& b);

// Tight bounding rectangle of the set pixels; zero-area box if the mask is empty.
PixelBox mask_bounds(const Mask& m);

}  // namespace scene_align
