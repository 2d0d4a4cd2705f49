#include "meshfit/mesh.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "meshfit/errors.hpp"
#include "meshfit/obj_io.hpp"

using namespace meshfit;

namespace {

// Brute-force flatten energy: mean over adjacent face pairs of
// (-dot(n_a, n_b) + 1)^2, zero for coplanar consistently-wound faces.
double flatten_energy(const Mesh& m) {
  const auto normals = face_normals(m.vertices, m.faces);
  double acc = 0;
  for (const auto& fp : m.face_pairs) {
    const auto& a = normals[fp.face_a];
    const auto& b = normals[fp.face_b];
    const double c = -(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
    acc += (c + 1) * (c + 1);
  }
  return acc / static_cast<double>(m.face_pairs.size());
}

}  // namespace

TEST_SUITE_BEGIN("mesh");

TEST_CASE("ellipsoid vertex/face counts per subdivision") {
  for (auto [k, v, f] : {std::tuple{0, 12, 20}, {2, 162, 320}, {3, 642, 1280}}) {
    Mesh m = make_ellipsoid(k, {0.45, 0.95, 0.25});
    CHECK(m.vertex_count() == v);
    CHECK(m.face_count() == f);
  }
}

TEST_CASE("closed-manifold invariants: Euler 2, E = 3F/2, symmetric neighbors") {
  for (int k = 0; k <= 3; ++k) {
    Mesh m = make_ellipsoid(k, {1, 1, 1});
    const int V = m.vertex_count(), F = m.face_count(), E = m.edge_count();
    CHECK(V - E + F == 2);
    CHECK(2 * E == 3 * F);
    for (int p = 0; p < V; ++p) {
      for (int q : m.vertex_neighbors[p]) {
        const auto& back = m.vertex_neighbors[q];
        CHECK(std::find(back.begin(), back.end(), p) != back.end());
      }
    }
  }
}

TEST_CASE("mirror pairing is an involution at every level") {
  for (int k = 0; k <= 3; ++k) {
    Mesh m = make_ellipsoid(k, {0.45, 0.95, 0.25});
    REQUIRE(m.has_mirror_pairs());
    for (int p = 0; p < m.vertex_count(); ++p) {
      const int q = m.mirror_pairs[p];
      CHECK(m.mirror_pairs[q] == p);
      CHECK(m.vertices[q][0] == doctest::Approx(m.vertices[p][0]).epsilon(1e-9));
      CHECK(m.vertices[q][2] == doctest::Approx(-m.vertices[p][2]).epsilon(1e-9));
      if (std::fabs(m.vertices[p][2]) < 1e-9) CHECK(q == p);
    }
  }
}

TEST_CASE("make_ellipsoid rejects bad arguments") {
  CHECK_THROWS_AS((void)make_ellipsoid(-1, {1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS((void)make_ellipsoid(1, {0, 1, 1}), std::invalid_argument);
}

TEST_CASE("compose_shape") {
  Mesh m = make_ellipsoid(1, {0.45, 0.95, 0.25});
  const int V = m.vertex_count();

  SUBCASE("zero offsets reproduce the prototype exactly") {
    Tape t;
    std::vector<double> zeros(3 * V, 0.0);
    Node off = t.leaf(zeros, {3 * V});
    Vec3Nodes s = compose_shape(t, m, off);
    for (int i = 0; i < V; ++i) {
      CHECK(t.values(s.x)[i] == m.vertices[i][0]);
      CHECK(t.values(s.y)[i] == m.vertices[i][1]);
      CHECK(t.values(s.z)[i] == m.vertices[i][2]);
    }
  }
  SUBCASE("constant offset is a rigid translation") {
    Tape t;
    std::vector<double> c(3 * V);
    for (int i = 0; i < V; ++i) {
      c[3 * i] = 0.1;
      c[3 * i + 1] = -0.2;
      c[3 * i + 2] = 0.3;
    }
    Node off = t.leaf(c, {3 * V});
    Vec3Nodes s = compose_shape(t, m, off);
    for (int i = 0; i < V; ++i) {
      CHECK(t.values(s.x)[i] == doctest::Approx(m.vertices[i][0] + 0.1));
      CHECK(t.values(s.y)[i] == doctest::Approx(m.vertices[i][1] - 0.2));
      CHECK(t.values(s.z)[i] == doctest::Approx(m.vertices[i][2] + 0.3));
    }
  }
  SUBCASE("gradient of sum(S) w.r.t. offsets is all-ones") {
    Tape t;
    std::vector<double> zeros(3 * V, 0.0);
    Node off = t.leaf(zeros, {3 * V});
    Vec3Nodes s = compose_shape(t, m, off);
    Node loss = t.add(t.add(t.sum(s.x), t.sum(s.y)), t.sum(s.z));
    Gradients g = t.backward(loss);
    for (double v : g.at(off)) CHECK(v == 1.0);
  }
  SUBCASE("dimension mismatch is rejected") {
    Tape t;
    std::vector<double> wrong(3 * V - 3, 0.0);
    Node off = t.leaf(wrong, {3 * V - 3});
    CHECK_THROWS_AS((void)compose_shape(t, m, off), std::invalid_argument);
  }
}

TEST_CASE("laplacian coordinates") {
  Mesh ico = make_ellipsoid(0, {1, 1, 1});

  SUBCASE("coincident vertices give zero") {
    std::vector<Vec3> pos(ico.vertices.size(), Vec3{0.3, 0.3, 0.3});
    for (const auto& d : laplacian_coordinates(pos, ico.vertex_neighbors)) {
      CHECK(d[0] == 0.0);
      CHECK(d[1] == 0.0);
      CHECK(d[2] == 0.0);
    }
  }
  SUBCASE("regular icosahedron: identical norm at all 12 vertices") {
    const auto delta = laplacian_coordinates(ico.vertices, ico.vertex_neighbors);
    auto norm = [](const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); };
    const double first = norm(delta[0]);
    CHECK(first > 0.1);
    for (const auto& d : delta) CHECK(norm(d) == doctest::Approx(first).epsilon(1e-12));
  }
  SUBCASE("translation invariance") {
    auto shifted = ico.vertices;
    for (auto& v : shifted) v = {v[0] + 5, v[1] - 2, v[2] + 0.25};
    const auto d0 = laplacian_coordinates(ico.vertices, ico.vertex_neighbors);
    const auto d1 = laplacian_coordinates(shifted, ico.vertex_neighbors);
    for (std::size_t i = 0; i < d0.size(); ++i) {
      for (int a = 0; a < 3; ++a) CHECK(d1[i][a] == doctest::Approx(d0[i][a]).epsilon(1e-12));
    }
  }
  SUBCASE("rotation equivariance to 1e-9") {
    const double th = 0.7;
    auto rot = [&](const Vec3& v) {
      return Vec3{std::cos(th) * v[0] - std::sin(th) * v[2], v[1],
                  std::sin(th) * v[0] + std::cos(th) * v[2]};
    };
    auto rotated = ico.vertices;
    for (auto& v : rotated) v = rot(v);
    const auto d0 = laplacian_coordinates(ico.vertices, ico.vertex_neighbors);
    const auto d1 = laplacian_coordinates(rotated, ico.vertex_neighbors);
    for (std::size_t i = 0; i < d0.size(); ++i) {
      const Vec3 want = rot(d0[i]);
      for (int a = 0; a < 3; ++a) CHECK(std::fabs(d1[i][a] - want[a]) < 1e-9);
    }
  }
  SUBCASE("tape variant matches the plain computation") {
    Tape t;
    Vec3Nodes pos = mesh_constants(t, ico);
    Vec3Nodes d = laplacian_coordinates(t, pos, ico);
    const auto want = laplacian_coordinates(ico.vertices, ico.vertex_neighbors);
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(t.values(d.x)[i] == doctest::Approx(want[i][0]).epsilon(1e-14));
      CHECK(t.values(d.y)[i] == doctest::Approx(want[i][1]).epsilon(1e-14));
      CHECK(t.values(d.z)[i] == doctest::Approx(want[i][2]).epsilon(1e-14));
    }
  }
}

TEST_CASE("face normals") {
  SUBCASE("CCW face in the z=0 plane points +z, flipped winding negates") {
    std::vector<Vec3> pos = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    std::vector<std::array<int, 3>> fwd = {{0, 1, 2}};
    std::vector<std::array<int, 3>> rev = {{0, 2, 1}};
    CHECK(face_normals(pos, fwd)[0][2] == doctest::Approx(1.0));
    CHECK(face_normals(pos, rev)[0][2] == doctest::Approx(-1.0));
  }
  SUBCASE("prototype normals point outward") {
    Mesh m = make_ellipsoid(2, {0.45, 0.95, 0.25});
    const auto normals = face_normals(m.vertices, m.faces);
    for (int f = 0; f < m.face_count(); ++f) {
      Vec3 c{0, 0, 0};
      for (int k = 0; k < 3; ++k) {
        for (int a = 0; a < 3; ++a) c[a] += m.vertices[m.faces[f][k]][a] / 3.0;
      }
      CHECK(normals[f][0] * c[0] + normals[f][1] * c[1] + normals[f][2] * c[2] > 0.0);
    }
  }
  SUBCASE("tape variant matches and flags no degenerate faces on the sphere") {
    Mesh m = make_ellipsoid(1, {1, 1, 1});
    Tape t;
    FaceNormals fn = face_normals(t, mesh_constants(t, m), m);
    CHECK(fn.degenerate_count == 0);
    const auto want = face_normals(m.vertices, m.faces);
    for (int f = 0; f < m.face_count(); ++f) {
      CHECK(t.values(fn.n.x)[f] == doctest::Approx(want[f][0]).epsilon(1e-12));
      CHECK(t.values(fn.n.z)[f] == doctest::Approx(want[f][2]).epsilon(1e-12));
    }
  }
}

TEST_CASE("subdividing strictly decreases the flatten energy of the unit sphere") {
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 3; ++k) {
    const double e = flatten_energy(make_ellipsoid(k, {1, 1, 1}));
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("obj round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "meshfit_obj_test";
  fs::create_directories(dir);

  SUBCASE("write then read preserves the prototype") {
    Mesh m = make_ellipsoid(3, {0.45, 0.95, 0.25});
    const fs::path p = dir / "proto.obj";
    write_obj(p, m.vertices, m.faces, m.uv, "atlas.png");
    Mesh r = read_obj(p);
    REQUIRE(r.vertex_count() == 642);
    REQUIRE(r.face_count() == 1280);
    REQUIRE(r.uv.size() == 642);
    for (int i = 0; i < r.vertex_count(); ++i) {
      for (int a = 0; a < 3; ++a) CHECK(std::fabs(r.vertices[i][a] - m.vertices[i][a]) < 1e-6);
    }
    // companion material exists and points at the texture
    std::ifstream mtl(dir / "proto.mtl");
    REQUIRE(mtl.good());
    std::string text((std::istreambuf_iterator<char>(mtl)), std::istreambuf_iterator<char>());
    CHECK(text.find("map_Kd atlas.png") != std::string::npos);
  }
  SUBCASE("face index 0 is rejected with a line number") {
    const fs::path p = dir / "bad.obj";
    std::ofstream(p) << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n";
    try {
      (void)read_obj(p);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find(":4:") != std::string::npos);
      CHECK(std::string(e.what()).find("1-indexed") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}

TEST_SUITE_END();
