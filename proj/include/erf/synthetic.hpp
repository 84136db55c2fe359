#pragma once

// Procedural test scenes: an analytic ray tracer producing posed images of a
// Lambertian object under a fixed environment.

#include "erf/dataset.hpp"

#include <optional>
#include <string>

namespace xrf {

enum class SyntheticKind { CheckeredCube, TexturedSlab, Sphere };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

struct SurfaceHit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

class AnalyticScene {
 public:
  static constexpr double kCubeHalfSide = 0.5;
  static constexpr int kChecksPerFace = 4;
  static constexpr double kSphereRadius = 0.6;

  explicit AnalyticScene(SyntheticKind kind = SyntheticKind::CheckeredCube) : kind_(kind) {}

  SyntheticKind kind() const { return kind_; }
  /// First surface hit along origin + t * dir (dir unit length), t > 0.
  std::optional<SurfaceHit> intersect(const Vec3& origin, const Vec3& dir) const;
  Rgb albedo(const SurfaceHit& hit) const;
  /// Lambertian shading with one directional light and an ambient term.
  Rgb shade(const SurfaceHit& hit) const;
  /// Smooth sky/ground environment radiance along unit direction d.
  Rgb environment(const Vec3& d) const;
  /// Radiance seen along the ray: surface shading or environment.
  Rgb trace(const Vec3& origin, const Vec3& dir) const;
  bool inside(const Vec3& p) const;
  /// Recommended reconstruction bounds.
  Aabb bounds() const;

 private:
  SyntheticKind kind_;
};

struct SyntheticOptions {
  SyntheticKind kind = SyntheticKind::CheckeredCube;
  int n_train = 20;
  int n_test = 5;
  int resolution = 64;
  uint64_t seed = 0;
  double fov_x = 0.5;      // radians
  double radius = 4.0;     // camera distance from the origin
  int supersample = 4;     // jittered subpixel samples per axis
};

struct SyntheticScene {
  Dataset data;
  AnalyticScene scene;
};

/// Cameras on a view sphere looking at the origin, images traced with
/// supersampling and box-filtered. Deterministic in options.seed.
SyntheticScene make_synthetic_scene(const SyntheticOptions& options);

/// Analytic hit depth along the centre ray of each pixel (0 where the ray
/// misses); channel 0 holds depth.
Image analytic_depth(const AnalyticScene& scene, const Camera& camera);

}  // namespace xrf
