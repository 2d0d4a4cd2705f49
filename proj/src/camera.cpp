#include "meshfit/camera.hpp"

#include <cmath>
#include <numbers>

namespace meshfit {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kElevationLimit = 89.9;
}  // namespace

double wrap_azimuth(double deg) {
  while (deg > 180.0) deg -= 360.0;
  while (deg <= -180.0) deg += 360.0;
  return deg;
}

std::array<double, 3> eye_position(const CameraParams& c) {
  const double az = c.azimuth * kDegToRad;
  const double el = std::clamp(c.elevation, -kElevationLimit, kElevationLimit) * kDegToRad;
  return {c.distance * std::cos(el) * std::sin(az), c.distance * std::sin(el),
          c.distance * std::cos(el) * std::cos(az)};
}

CameraNodes camera_constants(Tape& t, const CameraParams& c) {
  return {t.constant_scalar(c.distance), t.constant_scalar(c.azimuth),
          t.constant_scalar(c.elevation), t.constant_scalar(c.offset_x),
          t.constant_scalar(c.offset_y)};
}

Projected project(Tape& t, Vec3Nodes positions, const CameraNodes& cam, const Intrinsics& k) {
  // Wrap azimuth by exact 360-degree steps so projection is invariant
  // under full turns bit-exactly. The shift is constant, gradient 1.
  Var az_deg = var(t, cam.azimuth);
  {
    double fwd = t.value(cam.azimuth);
    while (fwd > 180.0) {
      az_deg = az_deg - 360.0;
      fwd -= 360.0;
    }
    while (fwd <= -180.0) {
      az_deg = az_deg + 360.0;
      fwd += 360.0;
    }
  }
  Var az = az_deg * kDegToRad;
  Var el = clamp(var(t, cam.elevation), -kElevationLimit, kElevationLimit) * kDegToRad;
  Var d = var(t, cam.distance);

  Var sa = sin(az), ca = cos(az);
  Var se = sin(el), ce = cos(el);

  // forward = -eye/d (unit); right = normalize(cross(forward, +y));
  // true_up = cross(right, forward). Closed forms under the elevation clamp.
  Var rx = ca, rz = -sa;                      // right = (ca, 0, -sa)
  Var ux = -sa * se, uy = ce, uz = -ca * se;  // true_up
  Var fx = -ce * sa, fy = -se, fz = -ce * ca;

  Var px = var(t, positions.x), py = var(t, positions.y), pz = var(t, positions.z);
  Var qx = px - d * ce * sa, qy = py - d * se, qz = pz - d * ce * ca;

  Var xv = qx * rx + qz * rz;
  Var yv = qx * ux + qy * uy + qz * uz;
  Var zv = qx * fx + qy * fy + qz * fz;

  int behind = 0;
  for (double z : t.values(zv.n)) {
    if (z < k.near_clip) ++behind;
  }
  Var depth = max2(zv, cvar(t, k.near_clip));

  const double focal = 1.0 / std::tan(0.5 * k.fov_y_deg * kDegToRad);
  const double aspect = static_cast<double>(k.width) / static_cast<double>(k.height);
  Var ndc_x = (focal / aspect) * xv / depth + var(t, cam.offset_x);
  Var ndc_y = focal * yv / depth + var(t, cam.offset_y);

  return {ndc_x.n, ndc_y.n, depth.n, behind};
}

}  // namespace meshfit
