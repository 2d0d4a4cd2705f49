#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "meshfit/mesh.hpp"

namespace meshfit {

/// Wavefront OBJ writer (ASCII, 1-indexed, v / vt / f records).
/// With per-vertex uv, faces reference v/vt pairs and, when `texture_file`
/// is non-empty, a companion .mtl next to the OBJ points at it.
void write_obj(const std::filesystem::path& path, std::span<const Vec3> vertices,
               std::span<const std::array<int, 3>> faces,
               std::span<const std::array<double, 2>> uv = {},
               const std::string& texture_file = {});

/// Reads v / vt / f records and rebuilds adjacency. Malformed input is
/// reported with its line number. Mirror pairing is attempted geometrically
/// and left empty when the mesh is not depth-symmetric.
Mesh read_obj(const std::filesystem::path& path);

}  // namespace meshfit
