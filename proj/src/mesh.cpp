#include "meshfit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

#include "meshfit/errors.hpp"

namespace meshfit {

namespace {

constexpr double kAreaFloor = 1e-12;
constexpr double kMirrorTol = 1e-6;
constexpr double kSelfPairBand = 1e-9;

Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm3(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

double face_area(const std::vector<Vec3>& v, const std::array<int, 3>& f) {
  return 0.5 * norm3(cross3(sub3(v[f[1]], v[f[0]]), sub3(v[f[2]], v[f[0]])));
}

}  // namespace

void finalize_topology(Mesh& mesh, bool require_mirror) {
  const int V = mesh.vertex_count();
  const int F = mesh.face_count();
  if (V < 4 || F < 4) throw std::invalid_argument("mesh: too small to be a closed surface");

  for (int f = 0; f < F; ++f) {
    for (int c = 0; c < 3; ++c) {
      const int idx = mesh.faces[f][c];
      if (idx < 0 || idx >= V) {
        throw std::invalid_argument("mesh: face " + std::to_string(f) + " references vertex " +
                                    std::to_string(idx) + " out of range");
      }
    }
    if (face_area(mesh.vertices, mesh.faces[f]) <= kAreaFloor) {
      throw std::invalid_argument("mesh: face " + std::to_string(f) + " is degenerate");
    }
  }

  // Each undirected edge must appear in exactly two faces.
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (int f = 0; f < F; ++f) {
    const auto& tri = mesh.faces[f];
    for (int c = 0; c < 3; ++c) {
      int a = tri[c], b = tri[(c + 1) % 3];
      if (a == b) throw std::invalid_argument("mesh: face with repeated vertex");
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
    }
  }
  mesh.face_pairs.clear();
  for (const auto& [edge, fs] : edge_faces) {
    if (fs.size() != 2) {
      throw std::invalid_argument("mesh: edge (" + std::to_string(edge.first) + "," +
                                  std::to_string(edge.second) + ") shared by " +
                                  std::to_string(fs.size()) + " faces, expected 2");
    }
    mesh.face_pairs.push_back({fs[0], fs[1], edge.first, edge.second});
  }
  const int E = static_cast<int>(edge_faces.size());
  if (V - E + F != 2) {
    throw std::invalid_argument("mesh: Euler characteristic " + std::to_string(V - E + F) +
                                ", expected 2");
  }

  mesh.vertex_neighbors.assign(V, {});
  for (const auto& [edge, fs] : edge_faces) {
    mesh.vertex_neighbors[edge.first].push_back(edge.second);
    mesh.vertex_neighbors[edge.second].push_back(edge.first);
  }
  for (auto& nb : mesh.vertex_neighbors) {
    std::sort(nb.begin(), nb.end());
    if (nb.empty()) throw std::invalid_argument("mesh: isolated vertex");
  }

  // Depth-mirror pairing: partner of p is the vertex matching (x, y, -z).
  mesh.mirror_pairs.assign(V, -1);
  for (int p = 0; p < V; ++p) {
    const Vec3& v = mesh.vertices[p];
    if (std::fabs(v[2]) < kSelfPairBand) {
      mesh.mirror_pairs[p] = p;
      continue;
    }
    const Vec3 target{v[0], v[1], -v[2]};
    int best = -1;
    double best_d = kMirrorTol;
    for (int q = 0; q < V; ++q) {
      const double d = norm3(sub3(mesh.vertices[q], target));
      if (d < best_d) {
        best_d = d;
        best = q;
      }
    }
    mesh.mirror_pairs[p] = best;
  }
  bool ok = true;
  for (int p = 0; p < V && ok; ++p) {
    const int q = mesh.mirror_pairs[p];
    ok = q >= 0 && mesh.mirror_pairs[q] == p;
  }
  if (!ok) {
    if (require_mirror) throw std::invalid_argument("mesh: depth-mirror pairing failed");
    mesh.mirror_pairs.clear();
  }
}

Mesh make_ellipsoid(int subdivisions, Vec3 radii) {
  if (subdivisions < 0) throw std::invalid_argument("make_ellipsoid: subdivisions must be >= 0");
  if (radii[0] <= 0 || radii[1] <= 0 || radii[2] <= 0) {
    throw std::invalid_argument("make_ellipsoid: radii must be positive");
  }

  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0},
      {0, -1, p}, {0, 1, p}, {0, -1, -p}, {0, 1, -p},
      {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1},
  };
  for (auto& v : verts) {
    const double n = norm3(v);
    v = {v[0] / n, v[1] / n, v[2] / n};
  }
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
  };

  for (int s = 0; s < subdivisions; ++s) {
    // Midpoints are deduplicated by edge key so shared edges insert once.
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m{(verts[a][0] + verts[b][0]) / 2.0, (verts[a][1] + verts[b][1]) / 2.0,
             (verts[a][2] + verts[b][2]) / 2.0};
      const double n = norm3(m);
      m = {m[0] / n, m[1] / n, m[2] / n};
      verts.push_back(m);
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  Mesh mesh;
  mesh.faces = std::move(faces);
  mesh.uv.resize(verts.size());
  mesh.vertices.resize(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec3& u = verts[i];  // on the unit sphere
    mesh.vertices[i] = {u[0] * radii[0], u[1] * radii[1], u[2] * radii[2]};
    // longitude -> u, latitude -> v (y is up)
    mesh.uv[i] = {std::atan2(u[0], u[2]) / (2.0 * std::numbers::pi) + 0.5,
                  std::asin(std::clamp(u[1], -1.0, 1.0)) / std::numbers::pi + 0.5};
  }

  // Enforce outward winding (the solid is star-shaped about the origin).
  for (auto& f : mesh.faces) {
    const Vec3 n = cross3(sub3(mesh.vertices[f[1]], mesh.vertices[f[0]]),
                          sub3(mesh.vertices[f[2]], mesh.vertices[f[0]]));
    const Vec3 c{(mesh.vertices[f[0]][0] + mesh.vertices[f[1]][0] + mesh.vertices[f[2]][0]) / 3.0,
                 (mesh.vertices[f[0]][1] + mesh.vertices[f[1]][1] + mesh.vertices[f[2]][1]) / 3.0,
                 (mesh.vertices[f[0]][2] + mesh.vertices[f[1]][2] + mesh.vertices[f[2]][2]) / 3.0};
    if (n[0] * c[0] + n[1] * c[1] + n[2] * c[2] < 0.0) std::swap(f[1], f[2]);
  }

  finalize_topology(mesh, /*require_mirror=*/true);
  return mesh;
}

std::vector<Vec3> laplacian_coordinates(const std::vector<Vec3>& positions,
                                        const std::vector<std::vector<int>>& neighbors) {
  std::vector<Vec3> delta(positions.size());
  for (std::size_t p = 0; p < positions.size(); ++p) {
    const auto& nb = neighbors[p];
    if (nb.empty()) throw std::invalid_argument("laplacian_coordinates: isolated vertex");
    Vec3 m{0, 0, 0};
    for (int q : nb) {
      m[0] += positions[q][0];
      m[1] += positions[q][1];
      m[2] += positions[q][2];
    }
    const double k = static_cast<double>(nb.size());
    delta[p] = {positions[p][0] - m[0] / k, positions[p][1] - m[1] / k,
                positions[p][2] - m[2] / k};
  }
  return delta;
}

std::vector<Vec3> face_normals(const std::vector<Vec3>& positions,
                               const std::vector<std::array<int, 3>>& faces) {
  std::vector<Vec3> out(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 c = cross3(sub3(positions[faces[f][1]], positions[faces[f][0]]),
                          sub3(positions[faces[f][2]], positions[faces[f][0]]));
    const double n = norm3(c);
    out[f] = n > 2.0 * kAreaFloor ? Vec3{c[0] / n, c[1] / n, c[2] / n} : Vec3{0, 0, 1};
  }
  return out;
}

Vec3Nodes split_columns(Tape& t, Node flat, int rows) {
  std::vector<std::int64_t> ix(rows), iy(rows), iz(rows);
  for (int i = 0; i < rows; ++i) {
    ix[i] = 3 * i;
    iy[i] = 3 * i + 1;
    iz[i] = 3 * i + 2;
  }
  return {t.gather(flat, std::move(ix)), t.gather(flat, std::move(iy)),
          t.gather(flat, std::move(iz))};
}

namespace {
std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out;
  out.reserve(v.size() * 3);
  for (const auto& p : v) {
    out.push_back(p[0]);
    out.push_back(p[1]);
    out.push_back(p[2]);
  }
  return out;
}
}  // namespace

Vec3Nodes mesh_constants(Tape& t, const Mesh& mesh) {
  const auto flat = flatten(mesh.vertices);
  Node c = t.constant(flat, {static_cast<std::int64_t>(flat.size())});
  return split_columns(t, c, mesh.vertex_count());
}

Vec3Nodes compose_shape(Tape& t, const Mesh& prototype, Node offsets) {
  const std::int64_t n = numel(t.shape(offsets));
  if (n != static_cast<std::int64_t>(prototype.vertices.size()) * 3) {
    throw std::invalid_argument("compose_shape: offset count does not match prototype");
  }
  const auto flat = flatten(prototype.vertices);
  Node base = t.constant(flat, {n});
  return split_columns(t, t.add(base, offsets), prototype.vertex_count());
}

Vec3Nodes laplacian_coordinates(Tape& t, Vec3Nodes pos, const Mesh& mesh) {
  const int V = mesh.vertex_count();
  std::vector<std::int64_t> src, dst;
  std::vector<double> inv_degree(V);
  for (int p = 0; p < V; ++p) {
    inv_degree[p] = 1.0 / static_cast<double>(mesh.vertex_neighbors[p].size());
    for (int q : mesh.vertex_neighbors[p]) {
      src.push_back(q);
      dst.push_back(p);
    }
  }
  Node inv_deg = t.constant(inv_degree, {V});
  auto delta = [&](Node col) {
    Node picked = t.gather(col, src);
    Node sums = t.scatter_add(picked, dst, V);
    return t.sub(col, t.mul(sums, inv_deg));
  };
  return {delta(pos.x), delta(pos.y), delta(pos.z)};
}

namespace {

struct CornerGather {
  Vec3Nodes a, b, c;
};

CornerGather gather_corners(Tape& t, Vec3Nodes pos, const Mesh& mesh) {
  const int F = mesh.face_count();
  std::vector<std::int64_t> i0(F), i1(F), i2(F);
  for (int f = 0; f < F; ++f) {
    i0[f] = mesh.faces[f][0];
    i1[f] = mesh.faces[f][1];
    i2[f] = mesh.faces[f][2];
  }
  auto pick = [&](const std::vector<std::int64_t>& idx) {
    return Vec3Nodes{t.gather(pos.x, idx), t.gather(pos.y, idx), t.gather(pos.z, idx)};
  };
  return {pick(i0), pick(i1), pick(i2)};
}

struct CrossNodes {
  Var x, y, z;
  Var len2;
};

CrossNodes face_cross(Tape& t, Vec3Nodes pos, const Mesh& mesh) {
  CornerGather g = gather_corners(t, pos, mesh);
  Var ax = var(t, g.a.x), ay = var(t, g.a.y), az = var(t, g.a.z);
  Var e1x = var(t, g.b.x) - ax, e1y = var(t, g.b.y) - ay, e1z = var(t, g.b.z) - az;
  Var e2x = var(t, g.c.x) - ax, e2y = var(t, g.c.y) - ay, e2z = var(t, g.c.z) - az;
  Var cx = e1y * e2z - e1z * e2y;
  Var cy = e1z * e2x - e1x * e2z;
  Var cz = e1x * e2y - e1y * e2x;
  return {cx, cy, cz, cx * cx + cy * cy + cz * cz};
}

}  // namespace

FaceNormals face_normals(Tape& t, Vec3Nodes pos, const Mesh& mesh) {
  CrossNodes c = face_cross(t, pos, mesh);
  Var len = sqrt(max2(c.len2, cvar(t, 4.0 * kAreaFloor * kAreaFloor)));
  Var nx = c.x / len, ny = c.y / len, nz = c.z / len;

  // Degenerate faces (area <= floor) are replaced by +z and counted.
  const auto& l2 = t.values(c.len2.n);
  int degenerate = 0;
  std::vector<double> keep(l2.size(), 1.0);
  for (std::size_t f = 0; f < l2.size(); ++f) {
    if (l2[f] <= 4.0 * kAreaFloor * kAreaFloor) {
      keep[f] = 0.0;
      ++degenerate;
    }
  }
  if (degenerate > 0) {
    Var k = var(t, t.constant(keep, {static_cast<std::int64_t>(keep.size())}));
    nx = nx * k;
    ny = ny * k;
    nz = nz * k + (1.0 - k);
  }
  return {{nx.n, ny.n, nz.n}, degenerate};
}

Vec3Nodes vertex_normals(Tape& t, Vec3Nodes pos, const Mesh& mesh) {
  CrossNodes c = face_cross(t, pos, mesh);
  const int V = mesh.vertex_count();
  const int F = mesh.face_count();
  std::vector<std::int64_t> inc_face, inc_vert;
  inc_face.reserve(3 * F);
  inc_vert.reserve(3 * F);
  for (int f = 0; f < F; ++f) {
    for (int k = 0; k < 3; ++k) {
      inc_face.push_back(f);
      inc_vert.push_back(mesh.faces[f][k]);
    }
  }
  auto accumulate = [&](Var comp) {
    return var(t, t.scatter_add(t.gather(comp.n, inc_face), inc_vert, V));
  };
  Var sx = accumulate(c.x), sy = accumulate(c.y), sz = accumulate(c.z);
  Var len = sqrt(max2(sx * sx + sy * sy + sz * sz, cvar(t, 1e-24)));
  return {(sx / len).n, (sy / len).n, (sz / len).n};
}

}  // namespace meshfit
