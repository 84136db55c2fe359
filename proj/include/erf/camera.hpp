#pragma once

// Pinhole cameras (OpenGL convention: the camera looks down its local -z axis,
// +y is up, image rows grow downwards) and primary rays.

#include "erf/scene_model.hpp"

#include <optional>

namespace xrf {

struct Camera {
  Mat3 rotation = Mat3::Identity();  // camera-to-world
  Vec3 position = Vec3::Zero();
  double fx = 1.0, fy = 1.0, cx = 0.5, cy = 0.5;  // level-0 intrinsics, pixels
  int width = 1, height = 1;

  void validate() const;
  int width_at(int mip_level) const;
  int height_at(int mip_level) const;
  /// Level-0 pixel diameter at unit depth, max(1/fx, 1/fy).
  double pixel_diameter() const { return std::max(1.0 / fx, 1.0 / fy); }
  /// Camera looking from `eye` at `target`, with `up` as the approximate up vector.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_x, int width, int height);
};

struct PixelId {
  int image = 0;
  int mip = 0;
  int u = 0;
  int v = 0;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 0.0;
  PixelId pixel;
  double footprint_slope = 0.0;  // sigma(t) = t * footprint_slope

  double footprint(double t) const { return t * footprint_slope; }
  Vec3 at(double t) const { return origin + t * dir; }
};

/// Slab intersection of origin + t * dir with the box, clipped to t >= 0.
bool intersect_aabb(const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi, double& t0, double& t1);

/// Back-projected pixel diameter t * 2^mip_level * max(1/fx, 1/fy).
double footprint(const Camera& camera, int mip_level, double t);

/// Ray through continuous image position (x, y) at the given mip level
/// (pixel centres at integer + 0.5). The t-interval is clipped to the box.
Ray make_ray(const Camera& camera, int mip_level, double x, double y);

/// Ray through the centre of pixel (u, v) at the given mip level, or nullopt
/// if it misses the box.
std::optional<Ray> cast_ray(const Camera& camera, int mip_level, int u, int v, const Aabb& aabb);

/// As cast_ray, for a continuous image position.
std::optional<Ray> cast_ray_at(const Camera& camera, int mip_level, double x, double y, const Aabb& aabb);

}  // namespace xrf
