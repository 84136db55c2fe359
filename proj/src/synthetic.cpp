#include "erf/synthetic.hpp"

#include "erf/rng.hpp"

#include <cmath>

namespace xrf {

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "checkered_cube") return SyntheticKind::CheckeredCube;
  if (name == "textured_slab") return SyntheticKind::TexturedSlab;
  if (name == "sphere") return SyntheticKind::Sphere;
  throw InvalidArgument("unknown synthetic scene '" + name + "'");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::CheckeredCube:
      return "checkered_cube";
    case SyntheticKind::TexturedSlab:
      return "textured_slab";
    case SyntheticKind::Sphere:
      return "sphere";
  }
  return "unknown";
}

namespace {

std::optional<SurfaceHit> intersect_box(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  int axis = -1;
  double sign = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    double s = -1.0;
    if (ta > tb) {
      std::swap(ta, tb);
      s = 1.0;
    }
    if (ta > t0) {
      t0 = ta;
      axis = a;
      sign = s;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (axis < 0) return std::nullopt;  // origin inside the box
  SurfaceHit h;
  h.t = t0;
  h.point = o + t0 * d;
  h.normal = Vec3::Zero();
  h.normal[axis] = sign;
  return h;
}

constexpr double kSlabHalf[3] = {0.8, 0.8, 0.12};

}  // namespace

std::optional<SurfaceHit> AnalyticScene::intersect(const Vec3& origin, const Vec3& dir) const {
  switch (kind_) {
    case SyntheticKind::CheckeredCube:
      return intersect_box(origin, dir, Vec3::Constant(-kCubeHalfSide), Vec3::Constant(kCubeHalfSide));
    case SyntheticKind::TexturedSlab: {
      const Vec3 h(kSlabHalf[0], kSlabHalf[1], kSlabHalf[2]);
      return intersect_box(origin, dir, -h, h);
    }
    case SyntheticKind::Sphere: {
      const double b = origin.dot(dir);
      const double c = origin.squaredNorm() - kSphereRadius * kSphereRadius;
      const double disc = b * b - c;
      if (disc < 0.0) return std::nullopt;
      const double t = -b - std::sqrt(disc);
      if (!(t > 0.0)) return std::nullopt;
      SurfaceHit h;
      h.t = t;
      h.point = origin + t * dir;
      h.normal = h.point.normalized();
      return h;
    }
  }
  return std::nullopt;
}

Rgb AnalyticScene::albedo(const SurfaceHit& hit) const {
  switch (kind_) {
    case SyntheticKind::CheckeredCube: {
      int axis = 0;
      hit.normal.cwiseAbs().maxCoeff(&axis);
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      const double scale = kChecksPerFace / (2.0 * kCubeHalfSide);
      const auto iu = static_cast<int>(std::floor((hit.point[u] + kCubeHalfSide) * scale));
      const auto iv = static_cast<int>(std::floor((hit.point[v] + kCubeHalfSide) * scale));
      if (((iu + iv) & 1) == 0) return Rgb(0.92, 0.88, 0.78);
      static const Rgb kDark[3] = {Rgb(0.75, 0.12, 0.10), Rgb(0.10, 0.55, 0.15), Rgb(0.12, 0.20, 0.75)};
      return kDark[axis];
    }
    case SyntheticKind::TexturedSlab: {
      const Vec3& p = hit.point;
      const double s = 0.5 + 0.5 * std::sin(6.0 * p.x()) * std::cos(5.0 * p.y());
      return Rgb(0.2 + 0.7 * s, 0.3 + 0.4 * (1.0 - s), 0.25 + 0.2 * std::cos(4.0 * p.x()));
    }
    case SyntheticKind::Sphere: {
      const double lat = std::asin(std::clamp(hit.normal.y(), -1.0, 1.0));
      const bool band = static_cast<int>(std::floor(lat * 6.0 / M_PI + 3.0)) % 2 == 0;
      return band ? Rgb(0.85, 0.7, 0.25) : Rgb(0.25, 0.35, 0.7);
    }
  }
  return Rgb::Zero();
}

Rgb AnalyticScene::shade(const SurfaceHit& hit) const {
  static const Vec3 kLight = Vec3(0.35, 0.8, 0.5).normalized();
  const double diffuse = std::max(0.0, hit.normal.dot(kLight));
  return albedo(hit) * (0.35 + 0.65 * diffuse);
}

Rgb AnalyticScene::environment(const Vec3& d) const {
  const double up = 0.5 + 0.5 * std::tanh(3.0 * d.y());
  const Rgb sky = Rgb(0.55, 0.68, 0.9) + 0.15 * (1.0 - std::max(0.0, d.y())) * Rgb(0.3, 0.2, 0.05);
  const Rgb ground(0.42, 0.38, 0.33);
  const double azimuth = 0.04 * std::cos(std::atan2(d.z(), d.x()));
  return (up * sky + (1.0 - up) * ground + azimuth).min(1.0).max(0.0);
}

Rgb AnalyticScene::trace(const Vec3& origin, const Vec3& dir) const {
  const auto hit = intersect(origin, dir);
  return hit ? shade(*hit) : environment(dir);
}

bool AnalyticScene::inside(const Vec3& p) const {
  switch (kind_) {
    case SyntheticKind::CheckeredCube:
      return (p.cwiseAbs().array() <= kCubeHalfSide).all();
    case SyntheticKind::TexturedSlab:
      return std::abs(p.x()) <= kSlabHalf[0] && std::abs(p.y()) <= kSlabHalf[1] && std::abs(p.z()) <= kSlabHalf[2];
    case SyntheticKind::Sphere:
      return p.norm() <= kSphereRadius;
  }
  return false;
}

Aabb AnalyticScene::bounds() const {
  Aabb box;
  box.min = Vec3::Constant(-1.0);
  box.max = Vec3::Constant(1.0);
  return box;
}

namespace {

/// Fibonacci lattice over a band of the unit sphere, rotated about y by a
/// seeded offset.
std::vector<Vec3> view_directions(int count, double y_lo, double y_hi, double phase) {
  std::vector<Vec3> out;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double y = y_hi - (y_hi - y_lo) * (i + 0.5) / count;
    const double r = std::sqrt(1.0 - y * y);
    const double phi = phase + golden * i;
    out.emplace_back(r * std::cos(phi), y, r * std::sin(phi));
  }
  return out;
}

Image trace_image(const AnalyticScene& scene, const Camera& cam, int ss, uint64_t seed) {
  Image img(cam.width, cam.height);
  const double inv = 1.0 / (ss * ss);
#pragma omp parallel for schedule(dynamic, 4)
  for (int v = 0; v < cam.height; ++v) {
    Rng rng(stream_seed(seed, static_cast<uint64_t>(v)));
    for (int u = 0; u < cam.width; ++u) {
      Rgb acc = Rgb::Zero();
      for (int j = 0; j < ss; ++j)
        for (int i = 0; i < ss; ++i) {
          const double x = u + (i + rng.uniform()) / ss;
          const double y = v + (j + rng.uniform()) / ss;
          const Ray r = make_ray(cam, 0, x, y);
          acc += scene.trace(r.origin, r.dir);
        }
      img.set_pixel(u, v, acc * inv);
    }
  }
  return img;
}

}  // namespace

SyntheticScene make_synthetic_scene(const SyntheticOptions& o) {
  if (o.n_train < 1) throw InvalidArgument("make_synthetic_scene: n_train must be >= 1");
  if (o.n_test < 0) throw InvalidArgument("make_synthetic_scene: n_test must be >= 0");
  if (o.resolution < 1) throw InvalidArgument("make_synthetic_scene: resolution must be >= 1");
  if (o.supersample < 1) throw InvalidArgument("make_synthetic_scene: supersample must be >= 1");
  if (!(o.fov_x > 0.0 && o.fov_x < M_PI)) throw InvalidArgument("make_synthetic_scene: fov out of range");
  SyntheticScene s{Dataset{}, AnalyticScene(o.kind)};
  Dataset& d = s.data;
  d.aabb = s.scene.bounds();
  d.has_aabb = true;
  Rng rng(stream_seed(o.seed, 0x5157));
  const std::vector<Vec3> train = view_directions(o.n_train, -0.45, 0.9, rng.uniform(0.0, 2.0 * M_PI));
  const std::vector<Vec3> test = view_directions(o.n_test, -0.3, 0.8, rng.uniform(0.0, 2.0 * M_PI));
  auto add = [&](const Vec3& dir, Split split, int k) {
    const Camera cam = Camera::look_at(o.radius * dir, Vec3::Zero(), Vec3::UnitY(), o.fov_x, o.resolution, o.resolution);
    const uint64_t image_seed = stream_seed(o.seed, split == Split::Train ? 1 : 2, static_cast<uint64_t>(k));
    d.cameras.push_back(cam);
    d.pyramids.push_back(build_pyramid(trace_image(s.scene, cam, o.supersample, image_seed)));
    d.split.push_back(split);
    d.names.push_back((split == Split::Train ? "train/r_" : "test/r_") + std::to_string(k));
  };
  for (int k = 0; k < o.n_train; ++k) add(train[static_cast<size_t>(k)], Split::Train, k);
  for (int k = 0; k < o.n_test; ++k) add(test[static_cast<size_t>(k)], Split::Test, k);
  return s;
}

Image analytic_depth(const AnalyticScene& scene, const Camera& camera) {
  Image img(camera.width, camera.height);
  for (int v = 0; v < camera.height; ++v)
    for (int u = 0; u < camera.width; ++u) {
      const Ray r = make_ray(camera, 0, u + 0.5, v + 0.5);
      const auto hit = scene.intersect(r.origin, r.dir);
      img.set_pixel(u, v, Rgb::Constant(hit ? hit->t : 0.0));
    }
  return img;
}

}  // namespace xrf
