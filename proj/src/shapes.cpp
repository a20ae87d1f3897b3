#include "scene_align/shapes.hpp"

#include <cmath>
#include <numbers>

namespace scene_align::shapes {

TriangleMesh box(const Vec3& c, const Vec3& h) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back(c + Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                                  (i & 4) ? h.z() : -h.z()));
  const int faces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& f : faces) {
    m.triangles.push_back({f[0], f[1], f[2]});
    m.triangles.push_back({f[0], f[2], f[3]});
  }
  return m;
}

TriangleMesh sphere(const Vec3& c, double r, int rings, int segments) {
  TriangleMesh m;
  const double pi = std::numbers::pi;
  for (int i = 0; i <= rings; ++i) {
    const double phi = pi * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double th = 2 * pi * j / segments;
      m.vertices.push_back(c + r * Vec3(std::sin(phi) * std::cos(th), std::cos(phi),
                                        std::sin(phi) * std::sin(th)));
    }
  }
  auto id = [&](int i, int j) { return i * segments + (j % segments); };
  for (int i = 0; i < rings; ++i)
    for (int j = 0; j < segments; ++j) {
      if (i > 0) m.triangles.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
      if (i + 1 < rings) m.triangles.push_back({id(i, j + 1), id(i + 1, j), id(i + 1, j + 1)});
    }
  return m;
}

TriangleMesh merge(const std::vector<TriangleMesh>& parts) {
  TriangleMesh m;
  if (!parts.empty()) m.front = parts.front().front;
  for (const auto& p : parts) {
    const int base = static_cast<int>(m.vertices.size());
    m.vertices.insert(m.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (const auto& t : p.triangles) m.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return m;
}

TriangleMesh chair(double width, double depth, double seat_height, double back_height) {
  const double leg = 0.025, seat = 0.03;
  const double hx = width / 2, hz = depth / 2;
  std::vector<TriangleMesh> parts;
  for (double sx : {-1.0, 1.0})
    for (double sz : {-1.0, 1.0})
      parts.push_back(box({sx * (hx - leg), seat_height / 2, sz * (hz - leg)},
                          {leg, seat_height / 2, leg}));
  parts.push_back(box({0, seat_height + seat / 2, 0}, {hx, seat / 2, hz}));
  // Backrest on the -z side; the chair faces +z.
  parts.push_back(box({0, seat_height + seat + back_height / 2, -hz + 0.02},
                      {hx, back_height / 2, 0.02}));
  return merge(parts);
}

TriangleMesh table(double width, double depth, double height) {
  const double leg = 0.03, top = 0.04;
  const double hx = width / 2, hz = depth / 2;
  std::vector<TriangleMesh> parts;
  for (double sx : {-1.0, 1.0})
    for (double sz : {-1.0, 1.0})
      parts.push_back(box({sx * (hx - leg), (height - top) / 2, sz * (hz - leg)},
                          {leg, (height - top) / 2, leg}));
  parts.push_back(box({0, height - top / 2, 0}, {hx, top / 2, hz}));
  // Modesty panel toward -z breaks the front/back symmetry.
  parts.push_back(box({0, height * 0.6, -hz + 0.02}, {hx - 2 * leg, height * 0.25, 0.01}));
  return merge(parts);
}

TriangleMesh bed(double width, double length, double height, double headboard) {
  const double hx = width / 2, hz = length / 2;
  return merge({box({0, height / 2, 0}, {hx, height / 2, hz}),
                box({0, (height + headboard) / 2, -hz + 0.03}, {hx, (height + headboard) / 2, 0.03})});
}

TriangleMesh floor_plane(double height, double half_size) {
  TriangleMesh m;
  m.vertices = {{-half_size, height, -half_size}, {half_size, height, -half_size},
                {half_size, height, half_size}, {-half_size, height, half_size}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace scene_align::shapes
