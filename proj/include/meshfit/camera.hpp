#pragma once

#include <array>

#include "meshfit/tape.hpp"
#include "meshfit/var.hpp"

namespace meshfit {

/// Five-parameter look-at camera: orbit position around the origin plus a
/// screen-space offset. Angles in degrees, offsets in ndc units.
struct CameraParams {
  double distance = 2.5;
  double azimuth = 0.0;    // (-180, 180] when reported
  double elevation = 0.0;  // [-90, 90]
  double offset_x = 0.0;
  double offset_y = 0.0;
};

struct Intrinsics {
  double fov_y_deg = 30.0;
  int width = 64;
  int height = 64;
  double near_clip = 0.05;
};

/// Wraps an azimuth into (-180, 180]. Exact for integer-degree inputs.
double wrap_azimuth(double deg);

/// eye = distance * (cos(el) sin(az), sin(el), cos(el) cos(az)), looking at
/// the origin with up = +y.
std::array<double, 3> eye_position(const CameraParams& c);

struct CameraNodes {
  Node distance, azimuth, elevation, offset_x, offset_y;  // scalars, degrees/ndc
};

/// Camera parameters as constants (no gradient).
CameraNodes camera_constants(Tape& t, const CameraParams& c);

struct Projected {
  Node ndc_x, ndc_y;  // [V]
  Node view_depth;    // [V], distance along the viewing direction
  int behind_near = 0;  // vertices clamped at the near plane
};

/// Look-at view transform, perspective divide with focal = 1/tan(fov_y/2)
/// and aspect-corrected x, then the additive screen offset. Differentiable
/// in positions and all five camera parameters. Elevation is clamped to
/// +/-89.9 degrees inside the transform; view depth is clamped at the near
/// plane and such vertices counted.
Projected project(Tape& t, Vec3Nodes positions, const CameraNodes& cam, const Intrinsics& k);

}  // namespace meshfit
