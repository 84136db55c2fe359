#include "erf/grad.hpp"

#include "erf/constraints.hpp"
#include "erf/sh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace xrf {

namespace {

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

/// Derivative of the sensor response w.r.t. the composited radiance.
double sensor_derivative(double c, SensorMode mode) {
  if (!(c > 0.0 && c < 1.0)) return 0.0;
  if (mode == SensorMode::Identity) return 1.0;
  return (1.0 / 2.2) * std::pow(c, 1.0 / 2.2 - 1.0);
}

double alpha_of(RenderMode mode, double raw, double delta) {
  switch (mode) {
    case RenderMode::Opacity:
      return tanh01(raw);
    case RenderMode::ExpSoftplus:
      return -std::expm1(-softplus(raw) * delta);
    case RenderMode::ExpLilu:
      return -std::expm1(-lilu_forward(raw) * delta);
  }
  return 0.0;
}

/// Per-component parameter offsets inside a node record: f0 and the three
/// gradient rows. Component 0 is opacity, 1 + k is SH coefficient k.
struct PlaneSlots {
  int f0, gx, gy, gz;
};

PlaneSlots plane_slots(const Svo& svo, int component) {
  if (component == 0) return {0, 1, 2, 3};
  const int j = component - 1;
  return {svo.sh_f0_offset() + j, svo.sh_grad_offset(0) + j, svo.sh_grad_offset(1) + j, svo.sh_grad_offset(2) + j};
}

struct Accumulator {
  GradWorkspace::Slot& slot;
  size_t stride;
  size_t svo_params;

  void node(int32_t n, int offset, double v) {
    if (n == Svo::kNone) return;
    if (!slot.node_mark[static_cast<size_t>(n)]) {
      slot.node_mark[static_cast<size_t>(n)] = 1;
      slot.nodes.push_back(n);
    }
    slot.dense[static_cast<size_t>(n) * stride + static_cast<size_t>(offset)] += v;
  }
  void plane(const Svo& svo, int32_t n, int component, const Vec3& dx, double g) {
    const PlaneSlots s = plane_slots(svo, component);
    node(n, s.f0, g);
    node(n, s.gx, g * dx.x());
    node(n, s.gy, g * dx.y());
    node(n, s.gz, g * dx.z());
  }
  /// texel_offset addresses CubeMap::texels directly (channel included).
  void texel(size_t texel_offset, double v) {
    const size_t t = texel_offset / 3;
    if (!slot.texel_mark[t]) {
      slot.texel_mark[t] = 1;
      slot.texels.push_back(t);
    }
    slot.dense[svo_params + texel_offset] += v;
  }
};

void ray_backward(const SceneModel& model, const Tape& tape, size_t r, Accumulator& acc) {
  const Svo& svo = model.svo;
  const RayTrace& tr = tape.rays[r];
  const RenderConfig& rc = tape.config.render;
  const double inv_n = 1.0 / static_cast<double>(tape.rays.size());
  const Rgb& y = tape.targets[r];

  Rgb dc = Rgb::Zero();
  for (int c = 0; c < 3; ++c)
    dc[c] = 2.0 * (tr.pixel[c] - y[c]) * inv_n * sensor_derivative(tr.composite.radiance[c], rc.sensor);
  if ((dc == 0.0).all()) return;

  const size_t n = tr.samples.size();
  // Suffix radiance R_i = a_i L_i + (1 - a_i) R_{i+1}, R_n = background.
  std::vector<Rgb> suffix(n + 1);
  suffix[n] = tr.background;
  for (size_t i = n; i-- > 0;) {
    const TracedSample& s = tr.samples[i];
    suffix[i] = s.alpha * s.radiance + (1.0 - s.alpha) * suffix[i + 1];
  }
  const int nb = svo.sh_basis_count();
  double basis[kMaxShBands * kMaxShBands];
  sh_basis(svo.sh_bands(), -tr.ray.dir, basis);
  double trans = 1.0;
  for (size_t i = 0; i < n; ++i) {
    const TracedSample& s = tr.samples[i];
    const double d_alpha = trans * ((s.radiance - suffix[i + 1]) * dc).sum();
    double d_raw = 0.0;
    switch (rc.mode) {
      case RenderMode::Opacity:
        d_raw = tanh01_derivative(s.opacity_raw) * d_alpha;
        break;
      case RenderMode::ExpSoftplus:
        d_raw = softplus_derivative(s.opacity_raw) * (1.0 - s.alpha) * s.delta * d_alpha;
        break;
      case RenderMode::ExpLilu:
        d_raw = lilu_backward(s.opacity_raw, (1.0 - s.alpha) * s.delta * d_alpha);
        break;
    }
    Rgb d_lraw;
    for (int c = 0; c < 3; ++c) d_lraw[c] = lilu_backward(s.radiance_raw[c], trans * s.alpha * dc[c]);
    for (int e = 0; e < s.stencil.size; ++e) {
      const StencilEntry& en = s.stencil.entries[static_cast<size_t>(e)];
      if (en.node == Svo::kNone || en.weight == 0.0) continue;
      if (d_raw != 0.0) acc.plane(svo, en.node, 0, en.offset, en.weight * d_raw);
      for (int c = 0; c < 3; ++c) {
        if (d_lraw[c] == 0.0) continue;
        const double g = en.weight * d_lraw[c];
        for (int k = 0; k < nb; ++k) acc.plane(svo, en.node, 1 + c * nb + k, en.offset, g * basis[k]);
      }
    }
    trans *= 1.0 - s.alpha;
  }
  for (int c = 0; c < 3; ++c) {
    const double g = lilu_backward(tr.background_raw[c], trans * dc[c]);
    if (g == 0.0) continue;
    for (int k = 0; k < 4; ++k)
      if (tr.taps.weight[static_cast<size_t>(k)] != 0.0)
        acc.texel(tr.taps.index[static_cast<size_t>(k)] + static_cast<size_t>(c), tr.taps.weight[static_cast<size_t>(k)] * g);
  }
}

void node_prior_backward(const Svo& svo, const NodePriorEntry& e, double scale, double delta, Accumulator& acc) {
  const int components = 1 + svo.sh_dim();
  const std::vector<int32_t> nbrs = face_neighbours(svo, e.node);
  const int32_t partner = level_partner(svo, e.node, e.point);
  const Vec3 dx = e.point - svo.center(e.node);
  const Vec3 dxp = partner != Svo::kNone ? Vec3(e.point - svo.center(partner)) : Vec3::Zero();
  const double* r = svo.record(e.node);
  for (int j = 0; j < components; ++j) {
    const int f0 = plane_slots(svo, j).f0;
    for (int32_t m : nbrs) {
      const double g = scale * huber_derivative(r[f0] - svo.record(m)[f0], delta);
      if (g == 0.0) continue;
      acc.node(e.node, f0, g);
      acc.node(m, f0, -g);
    }
    const double v = plane_value(svo, e.node, j, e.point);
    if (partner != Svo::kNone) {
      const double g = scale * huber_derivative(v - plane_value(svo, partner, j, e.point), delta);
      if (g != 0.0) {
        acc.plane(svo, e.node, j, dx, g);
        acc.plane(svo, partner, j, dxp, -g);
      }
    }
    const double gz = scale * huber_derivative(v, delta);
    if (gz != 0.0) acc.plane(svo, e.node, j, dx, gz);
  }
}

void texel_prior_backward(const CubeMap& cube, size_t texel, double scale, double delta, Accumulator& acc) {
  const auto nb = texel_neighbours(cube, texel);
  for (size_t c = 0; c < 3; ++c) {
    const double x = cube.texels[texel * 3 + c];
    for (int64_t n : nb) {
      if (n < 0) continue;
      const double g = scale * huber_derivative(x - cube.texels[static_cast<size_t>(n) * 3 + c], delta);
      if (g == 0.0) continue;
      acc.texel(texel * 3 + c, g);
      acc.texel(static_cast<size_t>(n) * 3 + c, -g);
    }
    const double g = scale * huber_derivative(x, delta);
    if (g != 0.0) acc.texel(texel * 3 + c, g);
  }
}

/// Photo loss of one taped ray from per-sample raw values.
double ray_loss(const Svo& svo, const Tape& tape, size_t r, const double* opacity_raw, const double* coeffs,
                const Rgb& bg_raw) {
  const RayTrace& tr = tape.rays[r];
  const RenderConfig& rc = tape.config.render;
  const int dim = svo.sh_dim();
  double basis[kMaxShBands * kMaxShBands];
  Rgb acc = Rgb::Zero();
  double trans = 1.0;
  for (size_t i = 0; i < tr.samples.size(); ++i) {
    const double a = alpha_of(rc.mode, opacity_raw[i], tr.samples[i].delta);
    const Rgb raw = radiance_raw(svo, coeffs + i * static_cast<size_t>(dim), -tr.ray.dir, basis);
    const Rgb l(lilu_forward(raw[0]), lilu_forward(raw[1]), lilu_forward(raw[2]));
    acc += trans * a * l;
    trans *= 1.0 - a;
  }
  const Rgb bg(lilu_forward(bg_raw[0]), lilu_forward(bg_raw[1]), lilu_forward(bg_raw[2]));
  acc += trans * bg;
  return photo_loss(sensor_response(acc, rc.sensor), tape.targets[r]) / static_cast<double>(tape.rays.size());
}

struct RayValues {
  std::vector<double> opacity_raw;
  std::vector<double> coeffs;
  Rgb bg_raw = Rgb::Zero();
};

void ray_values(const SceneModel& model, const RayTrace& tr, RayValues& v) {
  const Svo& svo = model.svo;
  const auto dim = static_cast<size_t>(svo.sh_dim());
  v.opacity_raw.resize(tr.samples.size());
  v.coeffs.resize(tr.samples.size() * dim);
  for (size_t i = 0; i < tr.samples.size(); ++i) {
    v.opacity_raw[i] = interp_opacity(svo, tr.samples[i].stencil);
    interp_sh(svo, tr.samples[i].stencil, v.coeffs.data() + i * dim);
  }
  v.bg_raw = background_raw(model.background, tr.taps);
}

bool stencil_has(const Stencil& s, int32_t node) {
  for (int e = 0; e < s.size; ++e)
    if (s.entries[static_cast<size_t>(e)].node == node && s.entries[static_cast<size_t>(e)].weight != 0.0) return true;
  return false;
}

}  // namespace

std::vector<RayTask> make_ray_tasks(const Dataset& data, const PixelBatch& batch, const Aabb& aabb, uint64_t seed) {
  std::vector<RayTask> tasks(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const PixelSample& p = batch[i];
    tasks[i].ray = pixel_ray(data.cameras[static_cast<size_t>(p.pixel.image)], p.pixel, aabb);
    tasks[i].target = p.target;
    tasks[i].seed = stream_seed(seed, i);
  }
  return tasks;
}

Tape forward(const SceneModel& model, const std::vector<RayTask>& tasks, const PriorBatch& priors,
             const ObjectiveConfig& config) {
  Tape tape;
  tape.revision = model.revision;
  tape.structure_revision = model.svo.structure_revision();
  tape.parameter_count = model.parameter_count();
  tape.config = config;
  tape.priors = priors;
  const auto n = static_cast<int64_t>(tasks.size());
  tape.rays.resize(tasks.size());
  tape.targets.resize(tasks.size());
  tape.pixel_losses.resize(tasks.size());
  std::vector<double> losses(tasks.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<size_t>(i);
    trace_ray(model, tasks[k].ray, config.render, tasks[k].seed, tape.rays[k]);
    tape.targets[k] = tasks[k].target;
    const Rgb err = (tape.rays[k].pixel - tasks[k].target).square();
    tape.pixel_losses[k] = err.maxCoeff();
    losses[k] = err.sum();
  }
  double sum = 0.0;
  for (double l : losses) sum += l;
  tape.photo = tasks.empty() ? 0.0 : sum / static_cast<double>(tasks.size());
  tape.prior = prior_losses(model, priors, config.lambda, config.huber_delta);
  if (!std::isfinite(tape.photo) || !std::isfinite(tape.prior)) throw NumericalError("forward: non-finite objective");
  return tape;
}

double GradientSet::get(size_t id) const {
  const auto it = std::lower_bound(index.begin(), index.end(), id);
  return it != index.end() && *it == id ? value[static_cast<size_t>(it - index.begin())] : 0.0;
}

std::vector<GradWorkspace::Slot>& GradWorkspace::slots(int threads, size_t params, size_t nodes, size_t texels) {
  if (slots_.size() != static_cast<size_t>(threads)) slots_.resize(static_cast<size_t>(threads));
  for (Slot& s : slots_) {
    if (s.dense.size() != params) s.dense.assign(params, 0.0);
    if (s.node_mark.size() != nodes) s.node_mark.assign(nodes, 0);
    if (s.texel_mark.size() != texels) s.texel_mark.assign(texels, 0);
    s.nodes.clear();
    s.texels.clear();
  }
  return slots_;
}

GradientSet backward(const SceneModel& model, const Tape& tape, GradWorkspace* workspace) {
  if (tape.revision != model.revision || tape.structure_revision != model.svo.structure_revision() ||
      tape.parameter_count != model.parameter_count())
    throw InvalidArgument("backward: model changed since the forward pass was recorded");
  GradWorkspace local;
  GradWorkspace& ws = workspace ? *workspace : local;
  const int threads = thread_count();
  const size_t stride = static_cast<size_t>(model.svo.stride());
  const size_t svo_params = model.svo_parameter_count();
  auto& slots = ws.slots(threads, model.parameter_count(), model.svo.node_count(), model.background.texel_count());
  const auto n_rays = static_cast<int64_t>(tape.rays.size());
  const auto n_nodes = static_cast<int64_t>(tape.priors.nodes.size());
  const auto n_texels = static_cast<int64_t>(tape.priors.texels.size());
  const double node_scale = n_nodes > 0 ? tape.config.lambda / static_cast<double>(n_nodes) : 0.0;
  const double texel_scale = n_texels > 0 ? tape.config.lambda / static_cast<double>(n_texels) : 0.0;
#pragma omp parallel
  {
    Accumulator acc{slots[static_cast<size_t>(thread_id())], stride, svo_params};
#pragma omp for schedule(static)
    for (int64_t i = 0; i < n_rays; ++i) ray_backward(model, tape, static_cast<size_t>(i), acc);
#pragma omp for schedule(static)
    for (int64_t i = 0; i < n_nodes; ++i)
      node_prior_backward(model.svo, tape.priors.nodes[static_cast<size_t>(i)], node_scale, tape.config.huber_delta, acc);
#pragma omp for schedule(static)
    for (int64_t i = 0; i < n_texels; ++i)
      texel_prior_backward(model.background, tape.priors.texels[static_cast<size_t>(i)], texel_scale,
                           tape.config.huber_delta, acc);
  }
  // Deterministic reduction: ids ascending, slots in thread order.
  std::vector<int32_t> nodes;
  std::vector<size_t> texels;
  for (auto& s : slots) {
    nodes.insert(nodes.end(), s.nodes.begin(), s.nodes.end());
    texels.insert(texels.end(), s.texels.begin(), s.texels.end());
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::sort(texels.begin(), texels.end());
  texels.erase(std::unique(texels.begin(), texels.end()), texels.end());
  GradientSet out;
  out.index.reserve(nodes.size() * stride + texels.size() * 3);
  out.value.reserve(out.index.capacity());
  auto gather = [&](size_t id) {
    double v = 0.0;
    for (auto& s : slots) {
      v += s.dense[id];
      s.dense[id] = 0.0;
    }
    if (v != 0.0) {
      if (!std::isfinite(v)) throw NumericalError("backward: non-finite gradient");
      out.index.push_back(id);
      out.value.push_back(v);
    }
  };
  for (int32_t nd : nodes)
    for (size_t k = 0; k < stride; ++k) gather(static_cast<size_t>(nd) * stride + k);
  for (size_t t : texels)
    for (size_t c = 0; c < 3; ++c) gather(svo_params + t * 3 + c);
  for (auto& s : slots) {
    for (int32_t nd : s.nodes) s.node_mark[static_cast<size_t>(nd)] = 0;
    for (size_t t : s.texels) s.texel_mark[t] = 0;
    s.nodes.clear();
    s.texels.clear();
  }
  return out;
}

double replay_objective(const SceneModel& model, const Tape& tape) {
  double photo = 0.0;
  RayValues v;
  for (size_t r = 0; r < tape.rays.size(); ++r) {
    ray_values(model, tape.rays[r], v);
    photo += ray_loss(model.svo, tape, r, v.opacity_raw.data(), v.coeffs.data(), v.bg_raw);
  }
  return photo + prior_losses(model, tape.priors, tape.config.lambda, tape.config.huber_delta);
}

namespace {

void add_node_params(std::vector<size_t>& out, size_t stride, int32_t node) {
  if (node == Svo::kNone) return;
  for (size_t k = 0; k < stride; ++k) out.push_back(static_cast<size_t>(node) * stride + k);
}

void sort_unique(std::vector<size_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::vector<size_t> touched_parameters(const SceneModel& model, const Tape& tape) {
  const Svo& svo = model.svo;
  const auto stride = static_cast<size_t>(svo.stride());
  const size_t svo_params = model.svo_parameter_count();
  std::vector<int32_t> nodes;
  std::vector<size_t> out;
  for (const RayTrace& tr : tape.rays) {
    for (const TracedSample& s : tr.samples)
      for (int e = 0; e < s.stencil.size; ++e) {
        const StencilEntry& en = s.stencil.entries[static_cast<size_t>(e)];
        if (en.node != Svo::kNone && en.weight != 0.0) nodes.push_back(en.node);
      }
    if (model.background.resolution > 0)
      for (int k = 0; k < 4; ++k)
        if (tr.taps.weight[static_cast<size_t>(k)] != 0.0)
          for (size_t c = 0; c < 3; ++c) out.push_back(svo_params + tr.taps.index[static_cast<size_t>(k)] + c);
  }
  for (const auto& e : tape.priors.nodes) {
    nodes.push_back(e.node);
    for (int32_t m : face_neighbours(svo, e.node)) nodes.push_back(m);
    const int32_t p = level_partner(svo, e.node, e.point);
    if (p != Svo::kNone) nodes.push_back(p);
  }
  for (size_t t : tape.priors.texels) {
    for (size_t c = 0; c < 3; ++c) out.push_back(svo_params + t * 3 + c);
    for (int64_t n : texel_neighbours(model.background, t))
      if (n >= 0)
        for (size_t c = 0; c < 3; ++c) out.push_back(svo_params + static_cast<size_t>(n) * 3 + c);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (int32_t n : nodes) add_node_params(out, stride, n);
  sort_unique(out);
  return out;
}

std::vector<size_t> kink_parameters(const SceneModel& model, const Tape& tape, double margin) {
  const Svo& svo = model.svo;
  const auto stride = static_cast<size_t>(svo.stride());
  const size_t svo_params = model.svo_parameter_count();
  const int nb = svo.sh_basis_count();
  const RenderConfig& rc = tape.config.render;
  const double delta = tape.config.huber_delta;
  std::vector<size_t> out;
  auto add_component = [&](int32_t node, int component) {
    if (node == Svo::kNone) return;
    const PlaneSlots s = plane_slots(svo, component);
    const size_t base = static_cast<size_t>(node) * stride;
    for (int off : {s.f0, s.gx, s.gy, s.gz}) out.push_back(base + static_cast<size_t>(off));
  };
  auto near_kink = [&](double x) { return std::abs(std::abs(x) - delta) <= margin; };
  for (const RayTrace& tr : tape.rays) {
    bool clamp_kink = false;
    for (int c = 0; c < 3; ++c) {
      const double v = tr.composite.radiance[c];
      if (std::abs(v) <= margin || std::abs(v - 1.0) <= margin) clamp_kink = true;
    }
    for (const TracedSample& s : tr.samples) {
      for (int e = 0; e < s.stencil.size; ++e) {
        const StencilEntry& en = s.stencil.entries[static_cast<size_t>(e)];
        if (en.node == Svo::kNone || en.weight == 0.0) continue;
        if (clamp_kink) add_node_params(out, stride, en.node);
        if (rc.mode == RenderMode::ExpLilu && s.opacity_raw <= margin) add_component(en.node, 0);
        for (int c = 0; c < 3; ++c)
          if (s.radiance_raw[c] <= margin)
            for (int k = 0; k < nb; ++k) add_component(en.node, 1 + c * nb + k);
      }
    }
    if (model.background.resolution > 0)
      for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 3; ++c)
          if (clamp_kink || tr.background_raw[c] <= margin)
            out.push_back(svo_params + tr.taps.index[static_cast<size_t>(k)] + static_cast<size_t>(c));
  }
  for (const auto& e : tape.priors.nodes) {
    const std::vector<int32_t> nbrs = face_neighbours(svo, e.node);
    const int32_t partner = level_partner(svo, e.node, e.point);
    const double* r = svo.record(e.node);
    for (int j = 0; j < 1 + svo.sh_dim(); ++j) {
      const int f0 = plane_slots(svo, j).f0;
      for (int32_t m : nbrs)
        if (near_kink(r[f0] - svo.record(m)[f0])) {
          out.push_back(static_cast<size_t>(e.node) * stride + static_cast<size_t>(f0));
          out.push_back(static_cast<size_t>(m) * stride + static_cast<size_t>(f0));
        }
      const double v = plane_value(svo, e.node, j, e.point);
      if (partner != Svo::kNone && near_kink(v - plane_value(svo, partner, j, e.point))) {
        add_component(e.node, j);
        add_component(partner, j);
      }
      if (near_kink(v)) add_component(e.node, j);
    }
  }
  for (size_t t : tape.priors.texels) {
    const auto nbrs = texel_neighbours(model.background, t);
    for (size_t c = 0; c < 3; ++c) {
      const double x = model.background.texels[t * 3 + c];
      for (int64_t n : nbrs)
        if (n >= 0 && near_kink(x - model.background.texels[static_cast<size_t>(n) * 3 + c])) {
          out.push_back(svo_params + t * 3 + c);
          out.push_back(svo_params + static_cast<size_t>(n) * 3 + c);
        }
      if (near_kink(x)) out.push_back(svo_params + t * 3 + c);
    }
  }
  sort_unique(out);
  return out;
}

FdReport finite_difference_check(SceneModel& model, const Tape& tape, const FdOptions& options) {
  const GradientSet grads = backward(model, tape);
  const Svo& svo = model.svo;
  const auto stride = static_cast<size_t>(svo.stride());
  const size_t svo_params = model.svo_parameter_count();
  const auto dim = static_cast<size_t>(svo.sh_dim());
  const double h = options.h;
  const double abs_tol = options.abs_tolerance >= 0.0 ? options.abs_tolerance : 10.0 * h * h;

  std::vector<size_t> params = touched_parameters(model, tape);
  if (options.max_parameters > 0 && params.size() > options.max_parameters) {
    std::vector<size_t> subset;
    Rng rng(stream_seed(options.seed, 0xFD));
    std::sample(params.begin(), params.end(), std::back_inserter(subset), options.max_parameters, rng);
    params = std::move(subset);
  }
  std::vector<size_t> kinks = kink_parameters(model, tape, 10.0 * h * std::max(1.0, svo.root_side()));

  // Which rays and prior entries read each node / texel.
  std::unordered_map<int32_t, std::vector<size_t>> node_rays, node_priors;
  std::unordered_map<size_t, std::vector<size_t>> texel_rays, texel_priors;
  for (size_t r = 0; r < tape.rays.size(); ++r) {
    std::vector<int32_t> ns;
    for (const TracedSample& s : tape.rays[r].samples)
      for (int e = 0; e < s.stencil.size; ++e)
        if (s.stencil.entries[static_cast<size_t>(e)].node != Svo::kNone) ns.push_back(s.stencil.entries[static_cast<size_t>(e)].node);
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    for (int32_t nd : ns) node_rays[nd].push_back(r);
    if (model.background.resolution > 0) {
      std::vector<size_t> ts;
      for (size_t idx : tape.rays[r].taps.index) ts.push_back(idx / 3);
      sort_unique(ts);
      for (size_t t : ts) texel_rays[t].push_back(r);
    }
  }
  for (size_t i = 0; i < tape.priors.nodes.size(); ++i) {
    const auto& e = tape.priors.nodes[i];
    std::vector<int32_t> ns = face_neighbours(svo, e.node);
    ns.push_back(e.node);
    const int32_t p = level_partner(svo, e.node, e.point);
    if (p != Svo::kNone) ns.push_back(p);
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    for (int32_t nd : ns) node_priors[nd].push_back(i);
  }
  for (size_t i = 0; i < tape.priors.texels.size(); ++i) {
    const size_t t = tape.priors.texels[i];
    texel_priors[t].push_back(i);
    for (int64_t n : texel_neighbours(model.background, t))
      if (n >= 0) texel_priors[static_cast<size_t>(n)].push_back(i);
  }
  for (auto& [k, v] : texel_priors) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  std::vector<RayValues> base(tape.rays.size());
  for (size_t r = 0; r < tape.rays.size(); ++r) ray_values(model, tape.rays[r], base[r]);

  const double node_scale =
      tape.priors.nodes.empty() ? 0.0 : tape.config.lambda / static_cast<double>(tape.priors.nodes.size());
  const double texel_scale =
      tape.priors.texels.empty() ? 0.0 : tape.config.lambda / static_cast<double>(tape.priors.texels.size());
  static const std::vector<size_t> kEmpty;

  // Objective restricted to the terms that read parameter p.
  auto local_objective = [&](size_t p) {
    double sum = 0.0;
    RayValues v;
    if (p < svo_params) {
      const auto node = static_cast<int32_t>(p / stride);
      const auto itr = node_rays.find(node);
      for (size_t r : itr == node_rays.end() ? kEmpty : itr->second) {
        v = base[r];
        const RayTrace& tr = tape.rays[r];
        for (size_t i = 0; i < tr.samples.size(); ++i) {
          if (!stencil_has(tr.samples[i].stencil, node)) continue;
          v.opacity_raw[i] = interp_opacity(svo, tr.samples[i].stencil);
          interp_sh(svo, tr.samples[i].stencil, v.coeffs.data() + i * dim);
        }
        sum += ray_loss(svo, tape, r, v.opacity_raw.data(), v.coeffs.data(), v.bg_raw);
      }
      const auto itp = node_priors.find(node);
      for (size_t i : itp == node_priors.end() ? kEmpty : itp->second)
        sum += node_scale * node_prior_term(svo, tape.priors.nodes[i], tape.config.huber_delta);
    } else {
      const size_t t = (p - svo_params) / 3;
      const auto itr = texel_rays.find(t);
      for (size_t r : itr == texel_rays.end() ? kEmpty : itr->second) {
        const RayValues& b = base[r];
        const Rgb bg = background_raw(model.background, tape.rays[r].taps);
        sum += ray_loss(svo, tape, r, b.opacity_raw.data(), b.coeffs.data(), bg);
      }
      const auto itp = texel_priors.find(t);
      for (size_t i : itp == texel_priors.end() ? kEmpty : itp->second)
        sum += texel_scale * texel_prior_term(model.background, tape.priors.texels[i], tape.config.huber_delta);
    }
    return sum;
  };
  auto central = [&](size_t p, double step) {
    double& x = model.parameter(p);
    const double x0 = x;
    x = x0 + step;
    const double fp = local_objective(p);
    x = x0 - step;
    const double fm = local_objective(p);
    x = x0;
    return (fp - fm) / (2.0 * step);
  };

  FdReport report;
  for (size_t p : params) {
    FdEntry e;
    e.parameter = p;
    e.analytic = grads.get(p);
    e.numeric = central(p, h);
    e.abs_error = std::abs(e.analytic - e.numeric);
    const double denom = std::max(std::abs(e.analytic), std::abs(e.numeric));
    e.rel_error = denom > 0.0 ? e.abs_error / denom : 0.0;
    e.nonsmooth = std::binary_search(kinks.begin(), kinks.end(), p);
    e.passed = e.rel_error <= options.tolerance || e.abs_error <= abs_tol;
    if (!e.passed && !e.nonsmooth) {
      // Error that shrinks with the step points at truncation, not at the gradient.
      const double finer = std::abs(e.analytic - central(p, 0.25 * h));
      e.truncation_dominated = finer < 0.5 * e.abs_error;
    }
    ++report.checked;
    if (e.nonsmooth) ++report.nonsmooth;
    if (e.truncation_dominated) ++report.truncation_dominated;
    if (!e.nonsmooth && denom > 100.0 * abs_tol) report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    if (!e.passed && !e.nonsmooth) ++report.failures;
    report.entries.push_back(e);
  }
  return report;
}

SceneModel make_gradcheck_model(const Aabb& aabb, int depth, int sh_bands, uint64_t seed) {
  SceneModel model = create_dense_grid(aabb, depth, sh_bands, 4);
  Svo& svo = model.svo;
  Rng rng(stream_seed(seed, 0x6c));
  const int bases = svo.sh_basis_count();
  for (size_t n = 0; n < svo.node_count(); ++n) {
    const auto node = static_cast<int32_t>(n);
    const double inv_side = 1.0 / svo.side(svo.info(node).depth);
    auto p = svo.node_params(node);
    p[0] = rng.uniform(-1.0, 1.0);
    for (int a = 0; a < 3; ++a) p[static_cast<size_t>(1 + a)] = rng.uniform(-0.5, 0.5) * inv_side;
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < bases; ++k) {
        const auto j = static_cast<size_t>(c * bases + k);
        p[static_cast<size_t>(svo.sh_f0_offset()) + j] = k == 0 ? rng.uniform(0.2, 1.2) : rng.uniform(-0.2, 0.2);
        for (int a = 0; a < 3; ++a)
          p[static_cast<size_t>(svo.sh_grad_offset(a)) + j] = rng.uniform(-0.3, 0.3) * inv_side;
      }
  }
  for (double& t : model.background.texels) t = rng.uniform(-0.2, 1.2);
  ++model.revision;
  return model;
}

Tape make_gradcheck_tape(const SceneModel& model, const Dataset& data, const GradCheckConfig& config) {
  const std::vector<int> train = data.indices(Split::Train);
  if (train.empty()) throw DataError("gradient check: no training images");
  Rng rng(stream_seed(config.seed, 0x9c));
  PixelBatch batch;
  for (size_t attempts = 0; batch.size() < config.rays; ++attempts) {
    if (attempts > 1000 * config.rays) throw DataError("gradient check: too few pixels see the scene bounds");
    const int image = train[rng.below(train.size())];
    const Image& img = data.pyramids[static_cast<size_t>(image)][0];
    const int u = static_cast<int>(rng.below(static_cast<uint64_t>(img.width)));
    const int v = static_cast<int>(rng.below(static_cast<uint64_t>(img.height)));
    if (!cast_ray(data.cameras[static_cast<size_t>(image)], 0, u, v, model.aabb)) continue;
    PixelSample ps;
    ps.pixel = PixelId{image, 0, u, v};
    ps.target = img.pixel(u, v);
    batch.push_back(ps);
  }
  const std::vector<RayTask> tasks = make_ray_tasks(data, batch, model.aabb, stream_seed(config.seed, 0x7a));
  const PriorBatch priors = sample_prior_batch(model, config.prior_batch, rng);
  ObjectiveConfig oc;
  oc.render.mode = config.mode;
  oc.render.sensor = config.sensor;
  oc.render.max_samples = config.max_samples;
  oc.render.max_opacity_samples = config.max_samples;
  oc.render.seed = config.seed;
  oc.lambda = config.lambda;
  return forward(model, tasks, priors, oc);
}

}  // namespace xrf
