#include "meshfit/obj_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "meshfit/errors.hpp"

namespace meshfit {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

[[noreturn]] void fail(const std::filesystem::path& path, int line, const std::string& msg) {
  throw IoError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

void write_obj(const std::filesystem::path& path, std::span<const Vec3> vertices,
               std::span<const std::array<int, 3>> faces,
               std::span<const std::array<double, 2>> uv, const std::string& texture_file) {
  if (!uv.empty() && uv.size() != vertices.size()) {
    throw std::invalid_argument("write_obj: uv count must match vertex count");
  }
  std::ofstream out(path);
  if (!out) throw IoError("write_obj: cannot open " + path.string());

  const bool with_mtl = !uv.empty() && !texture_file.empty();
  if (with_mtl) {
    const auto mtl_path = std::filesystem::path(path).replace_extension(".mtl");
    std::ofstream mtl(mtl_path);
    if (!mtl) throw IoError("write_obj: cannot open " + mtl_path.string());
    mtl << "newmtl textured\n"
        << "Kd 1 1 1\n"
        << "map_Kd " << texture_file << "\n";
    out << "mtllib " << mtl_path.filename().string() << "\n";
    out << "usemtl textured\n";
  }

  for (const auto& v : vertices) {
    out << "v " << fmt(v[0]) << ' ' << fmt(v[1]) << ' ' << fmt(v[2]) << '\n';
  }
  for (const auto& t : uv) {
    out << "vt " << fmt(t[0]) << ' ' << fmt(t[1]) << '\n';
  }
  for (const auto& f : faces) {
    if (uv.empty()) {
      out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    } else {
      out << "f " << f[0] + 1 << '/' << f[0] + 1 << ' ' << f[1] + 1 << '/' << f[1] + 1 << ' '
          << f[2] + 1 << '/' << f[2] + 1 << '\n';
    }
  }
  if (!out) throw IoError("write_obj: write failed for " + path.string());
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_obj: cannot open " + path.string());

  Mesh mesh;
  std::vector<std::array<double, 2>> uvs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v[0] >> v[1] >> v[2])) fail(path, lineno, "bad vertex record");
      mesh.vertices.push_back(v);
    } else if (tag == "vt") {
      std::array<double, 2> t;
      if (!(ss >> t[0] >> t[1])) fail(path, lineno, "bad texture coordinate record");
      uvs.push_back(t);
    } else if (tag == "f") {
      std::array<int, 3> f;
      for (int c = 0; c < 3; ++c) {
        std::string corner;
        if (!(ss >> corner)) fail(path, lineno, "face needs three corners");
        // accept v, v/vt, v//vn, v/vt/vn; only the vertex index is used
        int vi = 0;
        try {
          vi = std::stoi(corner.substr(0, corner.find('/')));
        } catch (const std::exception&) {
          fail(path, lineno, "bad face index '" + corner + "'");
        }
        if (vi == 0) fail(path, lineno, "face index 0 (OBJ is 1-indexed)");
        if (vi < 0) vi = static_cast<int>(mesh.vertices.size()) + vi + 1;  // relative indexing
        if (vi < 1 || vi > static_cast<int>(mesh.vertices.size())) {
          fail(path, lineno, "face index " + std::to_string(vi) + " out of range");
        }
        f[c] = vi - 1;
      }
      std::string extra;
      if (ss >> extra) fail(path, lineno, "only triangular faces are supported");
      mesh.faces.push_back(f);
    }
    // other records (vn, o, g, s, usemtl, mtllib) are ignored
  }
  if (mesh.vertices.empty() || mesh.faces.empty()) {
    throw IoError("read_obj: " + path.string() + " has no usable geometry");
  }
  if (!uvs.empty()) {
    if (uvs.size() != mesh.vertices.size()) {
      throw IoError("read_obj: " + path.string() + " vt count does not match vertex count");
    }
    mesh.uv = std::move(uvs);
  }
  finalize_topology(mesh, /*require_mirror=*/false);
  return mesh;
}

}  // namespace meshfit
