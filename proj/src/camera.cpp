#include "erf/camera.hpp"

#include <cmath>
#include <limits>

namespace xrf {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("camera: focal lengths must be positive");
  if (width < 1 || height < 1) throw InvalidArgument("camera: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw InvalidArgument("camera: principal point outside the image");
  if (!rotation.allFinite() || !position.allFinite()) throw InvalidArgument("camera: non-finite pose");
}

int Camera::width_at(int mip_level) const {
  int w = width;
  for (int l = 0; l < mip_level; ++l) w = (w + 1) / 2;
  return w;
}

int Camera::height_at(int mip_level) const {
  int h = height;
  for (int l = 0; l < mip_level; ++l) h = (h + 1) / 2;
  return h;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_x, int width, int height) {
  Camera c;
  const Vec3 back = (eye - target).normalized();
  Vec3 right = up.cross(back);
  if (right.norm() < 1e-12) right = Vec3::UnitX().cross(back);
  right.normalize();
  const Vec3 true_up = back.cross(right);
  c.rotation.col(0) = right;
  c.rotation.col(1) = true_up;
  c.rotation.col(2) = back;
  c.position = eye;
  c.width = width;
  c.height = height;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * fov_x);
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  return c;
}

bool intersect_aabb(const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return false;
      continue;
    }
    const double inv = 1.0 / dir[a];
    double ta = (lo[a] - origin[a]) * inv;
    double tb = (hi[a] - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

double footprint(const Camera& camera, int mip_level, double t) {
  return t * std::ldexp(1.0, mip_level) * camera.pixel_diameter();
}

Ray make_ray(const Camera& camera, int mip_level, double x, double y) {
  const double scale = std::ldexp(1.0, mip_level);
  // Level-L pixel coordinates map to level 0 by a factor 2^L.
  const double x0 = x * scale;
  const double y0 = y * scale;
  const Vec3 local((x0 - camera.cx) / camera.fx, -(y0 - camera.cy) / camera.fy, -1.0);
  Ray r;
  r.origin = camera.position;
  r.dir = (camera.rotation * local).normalized();
  r.footprint_slope = scale * camera.pixel_diameter();
  return r;
}

std::optional<Ray> cast_ray_at(const Camera& camera, int mip_level, double x, double y, const Aabb& aabb) {
  Ray r = make_ray(camera, mip_level, x, y);
  if (!intersect_aabb(r.origin, r.dir, aabb.min, aabb.max, r.t_near, r.t_far)) return std::nullopt;
  r.pixel.mip = mip_level;
  r.pixel.u = static_cast<int>(std::floor(x));
  r.pixel.v = static_cast<int>(std::floor(y));
  return r;
}

std::optional<Ray> cast_ray(const Camera& camera, int mip_level, int u, int v, const Aabb& aabb) {
  auto r = cast_ray_at(camera, mip_level, u + 0.5, v + 0.5, aabb);
  if (r) {
    r->pixel.u = u;
    r->pixel.v = v;
  }
  return r;
}

}  // namespace xrf
