#pragma once

// Forward rendering: per-ray sample pipeline, compositing (opacity and
// exponential transmittance), background cube map lookups, sensor response
// and full-image renders.

#include "erf/camera.hpp"
#include "erf/dataset.hpp"
#include "erf/field.hpp"
#include "erf/sampling.hpp"

#include <span>
#include <vector>

namespace xrf {

enum class RenderMode { Opacity, ExpSoftplus, ExpLilu };
enum class SensorMode { Identity, Gamma };
enum class ImageMode { Color, Depth, Normal, Opacity };

struct RenderConfig {
  int samples_per_side = 8;
  size_t max_samples = 256;
  size_t max_opacity_samples = 32;
  RenderMode mode = RenderMode::Opacity;
  SensorMode sensor = SensorMode::Identity;
  bool filter = true;  // apply both sample caps
  uint64_t seed = 0;
};

struct CompositeResult {
  Rgb radiance = Rgb::Zero();
  double opacity = 0.0;
  double depth = 0.0;
};

/// Front-to-back opacity compositing: T_0 = 1, T_{i+1} = T_i (1 - o_i),
/// radiance = sum_i T_i o_i L_i + T_N background.
CompositeResult composite_opacity(std::span<const double> t, std::span<const double> opacity,
                                  std::span<const Rgb> radiance, const Rgb& background);

/// Compositing weights T_i o_i followed by the residual transparency T_N.
std::vector<double> compositing_weights(std::span<const double> opacity);

/// Discretized exponential transmittance with densities rho and step sizes delta.
Rgb composite_exponential(std::span<const double> rho, std::span<const double> delta, std::span<const Rgb> radiance,
                          const Rgb& background);

Rgb sensor_response(const Rgb& radiance, SensorMode mode = SensorMode::Identity);

/// Cube face and texel-space coordinates of a direction; faces +x, -x, +y,
/// -y, +z, -z follow the usual cube map orientation.
struct CubeCoord {
  int face = 0;
  double s = 0.5, t = 0.5;  // in [0, 1]
};
CubeCoord cube_coord(const Vec3& dir);

/// The four bilinear taps (parameter offsets into CubeMap::texels, pointing
/// at channel 0) and weights for a direction. Sampling clamps at face edges.
struct TexelTaps {
  std::array<size_t, 4> index{};
  std::array<double, 4> weight{};
};
TexelTaps background_taps(const CubeMap& cube, const Vec3& dir);
Rgb background_raw(const CubeMap& cube, const TexelTaps& taps);
Rgb background_lookup(const CubeMap& cube, const Vec3& dir);

/// One retained sample with everything the backward pass needs.
struct TracedSample {
  double t = 0.0;
  double footprint = 0.0;
  double delta = 0.0;         // step size for exponential transmittance
  double opacity_raw = 0.0;   // interpolated raw scalar field
  double density = 0.0;       // rho (exponential modes only)
  double alpha = 0.0;         // per-sample compositing opacity
  Rgb radiance_raw = Rgb::Zero();
  Rgb radiance = Rgb::Zero();
  Stencil stencil;
};

struct RayTrace {
  Ray ray;
  bool hit = false;
  size_t stratified_count = 0;
  std::vector<TracedSample> samples;
  TexelTaps taps;
  Rgb background_raw = Rgb::Zero();
  Rgb background = Rgb::Zero();
  CompositeResult composite;
  Rgb pixel = Rgb::Zero();  // after the sensor response
};

/// Runs the per-ray pipeline: stratified sampling, uniform cap, opacity
/// evaluation, opacity-weighted cap, radiance evaluation, compositing and
/// sensor response. SH are evaluated toward the viewer (-ray.dir).
void trace_ray(const SceneModel& model, const Ray& ray, const RenderConfig& config, uint64_t seed, RayTrace& out);

/// Ray for a pixel even when it misses the box (empty t-interval).
Ray pixel_ray(const Camera& camera, const PixelId& pixel, const Aabb& aabb);

/// Full image at a mip level. Color: sensor response; Depth: expected depth;
/// Opacity: 1 - T_far in every channel; Normal: weight-averaged normals,
/// renormalized, raw components in [-1, 1].
Image render_image(const SceneModel& model, const Camera& camera, int mip_level, ImageMode mode,
                   const RenderConfig& config);

}  // namespace xrf
