#pragma once

#include <array>
#include <vector>

#include "meshfit/tape.hpp"
#include "meshfit/var.hpp"

namespace meshfit {

using Vec3 = std::array<double, 3>;

/// Two edge-adjacent faces and the edge they share (v0 < v1).
struct FacePair {
  int face_a = -1, face_b = -1;
  int edge_v0 = -1, edge_v1 = -1;
};

/// Triangle mesh with derived adjacency. Topology is immutable once built
/// and safe to share across threads; only `vertices` moves during fitting.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // CCW from outside
  std::vector<std::vector<int>> vertex_neighbors;
  std::vector<FacePair> face_pairs;
  std::vector<int> mirror_pairs;              // depth-reflected partner, self-paired on the z=0 ring
  std::vector<std::array<double, 2>> uv;      // per-vertex, may be empty

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
  int edge_count() const { return static_cast<int>(face_pairs.size()); }
  bool has_mirror_pairs() const { return !mirror_pairs.empty(); }
};

/// Icosahedron subdivided `subdivisions` times, re-projected to the unit
/// sphere, then scaled per axis by `radii`. Builds adjacency, z-mirror pairs
/// and a longitude/latitude vertex unwrap. V = 10*4^k + 2, F = 20*4^k.
Mesh make_ellipsoid(int subdivisions, Vec3 radii);

/// Derives adjacency/mirror tables and validates the closed-2-manifold
/// invariants (Euler characteristic 2, every edge shared by 2 faces,
/// non-degenerate faces). Used by make_ellipsoid and the OBJ reader.
void finalize_topology(Mesh& mesh, bool require_mirror = true);

// -- plain-value differential geometry (oracle-friendly) -------------------
std::vector<Vec3> laplacian_coordinates(const std::vector<Vec3>& positions,
                                        const std::vector<std::vector<int>>& neighbors);
std::vector<Vec3> face_normals(const std::vector<Vec3>& positions,
                               const std::vector<std::array<int, 3>>& faces);

// -- tape-backed variants ----------------------------------------------------

/// Splits a flat [V*3] node into per-axis [V] columns.
Vec3Nodes split_columns(Tape& t, Node flat, int rows);

/// Positions of `mesh` as constants on the tape.
Vec3Nodes mesh_constants(Tape& t, const Mesh& mesh);

/// S = S_bar + dS. Gradient flows to `offsets` only; the prototype enters
/// as a constant within any optimization step.
Vec3Nodes compose_shape(Tape& t, const Mesh& prototype, Node offsets);

Vec3Nodes laplacian_coordinates(Tape& t, Vec3Nodes pos, const Mesh& mesh);

struct FaceNormals {
  Vec3Nodes n;              // unit normals, [F] per axis
  int degenerate_count = 0; // faces whose normal was replaced by +z
};
FaceNormals face_normals(Tape& t, Vec3Nodes pos, const Mesh& mesh);

/// Area-weighted vertex normals (normalized sums of face cross products).
Vec3Nodes vertex_normals(Tape& t, Vec3Nodes pos, const Mesh& mesh);

}  // namespace meshfit
