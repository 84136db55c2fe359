#include "erf/render.hpp"

#include "erf/constraints.hpp"
#include "erf/sh.hpp"

#include <cmath>

namespace xrf {

CompositeResult composite_opacity(std::span<const double> t, std::span<const double> opacity,
                                  std::span<const Rgb> radiance, const Rgb& background) {
  if (t.size() != opacity.size() || opacity.size() != radiance.size())
    throw InvalidArgument("composite_opacity: sample arrays differ in length");
  CompositeResult r;
  double trans = 1.0;
  double depth_acc = 0.0;
  for (size_t i = 0; i < opacity.size(); ++i) {
    const double w = trans * opacity[i];
    r.radiance += w * radiance[i];
    depth_acc += w * t[i];
    trans *= 1.0 - opacity[i];
  }
  r.radiance += trans * background;
  r.opacity = 1.0 - trans;
  r.depth = depth_acc / std::max(r.opacity, 1e-10);
  return r;
}

std::vector<double> compositing_weights(std::span<const double> opacity) {
  std::vector<double> w(opacity.size() + 1);
  double trans = 1.0;
  for (size_t i = 0; i < opacity.size(); ++i) {
    w[i] = trans * opacity[i];
    trans *= 1.0 - opacity[i];
  }
  w.back() = trans;
  return w;
}

Rgb composite_exponential(std::span<const double> rho, std::span<const double> delta, std::span<const Rgb> radiance,
                          const Rgb& background) {
  if (rho.size() != delta.size() || rho.size() != radiance.size())
    throw InvalidArgument("composite_exponential: sample arrays differ in length");
  Rgb out = Rgb::Zero();
  double optical = 0.0;
  for (size_t i = 0; i < rho.size(); ++i) {
    const double tau = rho[i] * delta[i];
    out += std::exp(-optical) * -std::expm1(-tau) * radiance[i];
    optical += tau;
  }
  return out + std::exp(-optical) * background;
}

Rgb sensor_response(const Rgb& radiance, SensorMode mode) {
  Rgb out = radiance.max(0.0).min(1.0);
  if (mode == SensorMode::Gamma) out = out.pow(1.0 / 2.2);
  return out;
}

CubeCoord cube_coord(const Vec3& d) {
  const double ax = std::abs(d.x()), ay = std::abs(d.y()), az = std::abs(d.z());
  CubeCoord c;
  double sc = 0.0, tc = 0.0, ma = 1.0;
  if (ax >= ay && ax >= az) {
    ma = ax;
    if (d.x() >= 0.0) {
      c.face = 0;
      sc = -d.z();
      tc = -d.y();
    } else {
      c.face = 1;
      sc = d.z();
      tc = -d.y();
    }
  } else if (ay >= az) {
    ma = ay;
    if (d.y() >= 0.0) {
      c.face = 2;
      sc = d.x();
      tc = d.z();
    } else {
      c.face = 3;
      sc = d.x();
      tc = -d.z();
    }
  } else {
    ma = az;
    if (d.z() >= 0.0) {
      c.face = 4;
      sc = d.x();
      tc = -d.y();
    } else {
      c.face = 5;
      sc = -d.x();
      tc = -d.y();
    }
  }
  c.s = 0.5 * (sc / ma + 1.0);
  c.t = 0.5 * (tc / ma + 1.0);
  return c;
}

TexelTaps background_taps(const CubeMap& cube, const Vec3& dir) {
  TexelTaps taps;
  const int r = cube.resolution;
  if (r < 1) return taps;
  const CubeCoord cc = cube_coord(dir);
  const double x = std::clamp(cc.s * r - 0.5, 0.0, static_cast<double>(r - 1));
  const double y = std::clamp(cc.t * r - 0.5, 0.0, static_cast<double>(r - 1));
  const int x0 = std::min(static_cast<int>(std::floor(x)), r - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), r - 1);
  const int x1 = std::min(x0 + 1, r - 1);
  const int y1 = std::min(y0 + 1, r - 1);
  const double fx = x - x0, fy = y - y0;
  taps.index = {cube.texel_index(cc.face, y0, x0), cube.texel_index(cc.face, y0, x1), cube.texel_index(cc.face, y1, x0),
                cube.texel_index(cc.face, y1, x1)};
  taps.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  return taps;
}

Rgb background_raw(const CubeMap& cube, const TexelTaps& taps) {
  Rgb v = Rgb::Zero();
  if (cube.resolution < 1) return v;
  for (int k = 0; k < 4; ++k)
    for (int c = 0; c < 3; ++c) v[c] += taps.weight[static_cast<size_t>(k)] * cube.texels[taps.index[static_cast<size_t>(k)] + c];
  return v;
}

Rgb background_lookup(const CubeMap& cube, const Vec3& dir) {
  const Rgb raw = background_raw(cube, background_taps(cube, dir));
  return Rgb(lilu_forward(raw[0]), lilu_forward(raw[1]), lilu_forward(raw[2]));
}

namespace {

double density_of(RenderMode mode, double raw) {
  return mode == RenderMode::ExpSoftplus ? softplus(raw) : lilu_forward(raw);
}

}  // namespace

void trace_ray(const SceneModel& model, const Ray& ray, const RenderConfig& config, uint64_t seed, RayTrace& out) {
  const Svo& svo = model.svo;
  out.ray = ray;
  out.samples.clear();
  out.taps = background_taps(model.background, ray.dir);
  out.background_raw = background_raw(model.background, out.taps);
  for (int c = 0; c < 3; ++c) out.background[c] = lilu_forward(out.background_raw[c]);
  out.hit = ray.t_far > ray.t_near;
  out.stratified_count = 0;

  if (out.hit) {
    const std::vector<RaySample> strat = stratified_ray_samples(svo, ray, config.samples_per_side, seed);
    out.stratified_count = strat.size();
    Rng rng(stream_seed(seed, 0xCA9));
    const std::vector<size_t> first =
        config.filter ? cap_uniform_indices(strat.size(), config.max_samples, rng) : cap_uniform_indices(strat.size(), strat.size(), rng);
    const bool exponential = config.mode != RenderMode::Opacity;
    const double pre_scale = first.empty() ? 1.0 : static_cast<double>(strat.size()) / static_cast<double>(first.size());

    std::vector<TracedSample> cand(first.size());
    std::vector<double> alpha(first.size());
    StencilBuilder builder(svo);
    for (size_t i = 0; i < first.size(); ++i) {
      const RaySample& rs = strat[first[i]];
      TracedSample& s = cand[i];
      s.t = rs.t;
      s.footprint = rs.footprint;
      s.delta = rs.length;
      builder.build(Query4D{ray.at(rs.t), rs.footprint}, s.stencil);
      s.opacity_raw = interp_opacity(svo, s.stencil);
      alpha[i] = exponential ? -std::expm1(-density_of(config.mode, s.opacity_raw) * rs.length * pre_scale)
                             : tanh01(s.opacity_raw);
      s.alpha = alpha[i];
    }
    const std::vector<size_t> second = config.filter ? cap_by_opacity_indices(alpha, config.max_opacity_samples, rng)
                                                     : cap_uniform_indices(cand.size(), cand.size(), rng);
    const double scale = second.empty() ? 1.0 : static_cast<double>(strat.size()) / static_cast<double>(second.size());
    const Vec3 view = -ray.dir;
    std::vector<double> coeffs(static_cast<size_t>(svo.sh_dim()));
    double basis[kMaxShBands * kMaxShBands];
    out.samples.reserve(second.size());
    for (size_t k : second) {
      TracedSample s = cand[k];
      if (exponential) {
        s.delta *= scale;
        s.density = density_of(config.mode, s.opacity_raw);
        s.alpha = -std::expm1(-s.density * s.delta);
      }
      interp_sh(svo, s.stencil, coeffs.data());
      s.radiance_raw = radiance_raw(svo, coeffs.data(), view, basis);
      for (int c = 0; c < 3; ++c) s.radiance[c] = lilu_forward(s.radiance_raw[c]);
      out.samples.push_back(s);
    }
  }

  double trans = 1.0;
  double depth_acc = 0.0;
  Rgb acc = Rgb::Zero();
  for (const TracedSample& s : out.samples) {
    const double w = trans * s.alpha;
    acc += w * s.radiance;
    depth_acc += w * s.t;
    trans *= 1.0 - s.alpha;
  }
  out.composite.radiance = acc + trans * out.background;
  out.composite.opacity = 1.0 - trans;
  out.composite.depth = depth_acc / std::max(out.composite.opacity, 1e-10);
  out.pixel = sensor_response(out.composite.radiance, config.sensor);
}

Ray pixel_ray(const Camera& camera, const PixelId& pixel, const Aabb& aabb) {
  Ray r = make_ray(camera, pixel.mip, pixel.u + 0.5, pixel.v + 0.5);
  r.pixel = pixel;
  if (!intersect_aabb(r.origin, r.dir, aabb.min, aabb.max, r.t_near, r.t_far)) r.t_near = r.t_far = 0.0;
  return r;
}

Image render_image(const SceneModel& model, const Camera& camera, int mip_level, ImageMode mode,
                   const RenderConfig& config) {
  camera.validate();
  const int w = camera.width_at(mip_level);
  const int h = camera.height_at(mip_level);
  Image img(w, h);
#pragma omp parallel
  {
    RayTrace trace;
#pragma omp for schedule(dynamic, 4)
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const PixelId pid{0, mip_level, u, v};
        const Ray ray = pixel_ray(camera, pid, model.aabb);
        const uint64_t seed = stream_seed(config.seed, static_cast<uint64_t>(v) * static_cast<uint64_t>(w) + u,
                                          static_cast<uint64_t>(mip_level));
        trace_ray(model, ray, config, seed, trace);
        Rgb value = Rgb::Zero();
        switch (mode) {
          case ImageMode::Color:
            value = trace.pixel;
            break;
          case ImageMode::Depth:
            value = Rgb::Constant(trace.composite.opacity > 1e-6 ? trace.composite.depth : 0.0);
            break;
          case ImageMode::Opacity:
            value = Rgb::Constant(trace.composite.opacity);
            break;
          case ImageMode::Normal: {
            Vec3 n = Vec3::Zero();
            double trans = 1.0;
            for (const TracedSample& s : trace.samples) {
              const double wgt = trans * s.alpha;
              trans *= 1.0 - s.alpha;
              if (wgt <= 0.0) continue;
              const auto normal = eval_normal(model.svo, Query4D{ray.at(s.t), s.footprint});
              if (normal) n += wgt * *normal;
            }
            if (n.norm() > 1e-12) n.normalize();
            value = n.array();
            break;
          }
        }
        img.set_pixel(u, v, value);
      }
    }
  }
  return img;
}

}  // namespace xrf
