#include "scene_align/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "scene_align/error.hpp"
#include "scene_align/image_io.hpp"

namespace scene_align {

std::vector<Vec3> TriangleMesh::canonical_vertices() const {
  // Yaw that takes the horizontal part of `front` onto +z.
  const double yaw = -std::atan2(front.x(), front.z());
  const Mat3 r = yaw_rotation(yaw);
  std::vector<Vec3> out;
  out.reserve(vertices.size());
  for (const auto& v : vertices) out.push_back(r * v);
  return out;
}

void TriangleMesh::validate() const {
  if (vertices.empty() || triangles.empty()) throw InputError("mesh is empty");
  for (const auto& v : vertices)
    if (!v.allFinite()) throw InputError("mesh has non-finite vertex");
  for (const auto& t : triangles)
    for (int i : t)
      if (i < 0 || i >= static_cast<int>(vertices.size()))
        throw InputError("mesh triangle index out of range");
  if (std::hypot(front.x(), front.z()) < 1e-9)
    throw InputError("mesh front direction must have a horizontal component");
}

void remove_degenerate(TriangleMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  std::erase_if(mesh.triangles, [&](const std::array<int, 3>& t) {
    for (int i : t)
      if (i < 0 || i >= n) return true;
    const Vec3 e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
    const Vec3 e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
    return e1.cross(e2).norm() == 0.0;
  });
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh: " + path.string());
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z))
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ss >> tok) {
        // "i", "i/t", "i//n", "i/t/n"; negative indices are relative.
        int idx = std::stoi(tok.substr(0, tok.find('/')));
        idx = idx < 0 ? static_cast<int>(mesh.vertices.size()) + idx : idx - 1;
        poly.push_back(idx);
      }
      for (std::size_t i = 2; i < poly.size(); ++i)
        mesh.triangles.push_back({poly[0], poly[i - 1], poly[i]});
    }
  }
  remove_degenerate(mesh);
  mesh.validate();
  return mesh;
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write mesh: " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

Mat3 yaw_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 axis_rotation(const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() * c + s * k + (1 - c) * axis * axis.transpose();
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

void Placement::validate() const {
  if (!(scale > 0) || !std::isfinite(scale)) throw InputError("placement: scale must be positive");
  if (!std::isfinite(yaw) || !translation.allFinite()) throw InputError("placement: non-finite value");
}

std::vector<std::string> ModelLibrary::categories() const {
  std::vector<std::string> cats;
  for (const auto& e : entries_)
    if (std::find(cats.begin(), cats.end(), e.category) == cats.end()) cats.push_back(e.category);
  return cats;
}

std::vector<const LibraryEntry*> ModelLibrary::models(const std::string& category) const {
  std::vector<const LibraryEntry*> out;
  for (const auto& e : entries_)
    if (e.category == category) out.push_back(&e);
  return out;
}

const LibraryEntry& ModelLibrary::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw InputError("unknown model: " + name);
}

ModelLibrary load_library(const std::filesystem::path& manifest) {
  const auto j = read_json_file(manifest);
  if (!j.is_array() || j.empty()) throw InputError("library manifest must be a non-empty array");
  ModelLibrary lib;
  for (const auto& row : j) {
    LibraryEntry e;
    try {
      e.category = row.at("category").get<std::string>();
      e.name = row.at("name").get<std::string>();
      std::filesystem::path p = row.at("path").get<std::string>();
      if (p.is_relative()) p = manifest.parent_path() / p;
      e.mesh = load_obj(p);
      if (row.contains("front")) {
        const auto f = row.at("front").get<std::vector<double>>();
        if (f.size() != 3) throw InputError("front must have 3 components");
        e.mesh.front = Vec3(f[0], f[1], f[2]).normalized();
      }
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(std::string("library manifest: ") + ex.what());
    }
    e.mesh.validate();
    lib.add(std::move(e));
  }
  return lib;
}

}  // namespace scene_align
