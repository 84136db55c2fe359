#include "erf/hierarchy.hpp"

#include "erf/constraints.hpp"
#include "erf/field.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace xrf {

std::vector<double> probe_max_opacity(const Svo& svo, int probe_resolution) {
  if (probe_resolution < 1) throw InvalidArgument("probe_max_opacity: resolution must be >= 1");
  const auto n = static_cast<int64_t>(svo.node_count());
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  const int res = probe_resolution;
  // Per-axis dual-grid base offset (-1 or 0) and fraction of each probe.
  std::vector<int> base(static_cast<size_t>(res));
  std::vector<double> frac(static_cast<size_t>(res));
  for (int i = 0; i < res; ++i) {
    const double u = (i + 0.5) / res - 0.5;
    base[static_cast<size_t>(i)] = u < 0.0 ? -1 : 0;
    frac[static_cast<size_t>(i)] = u < 0.0 ? u + 1.0 : u;
  }
#pragma omp parallel for schedule(dynamic, 64)
  for (int64_t k = 0; k < n; ++k) {
    const auto node = static_cast<int32_t>(k);
    const NodeInfo& info = svo.info(node);
    const double side = svo.side(info.depth);
    const double* rec[27];
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const GridCoord c = {info.coord[0] + dx, info.coord[1] + dy, info.coord[2] + dz};
          const int32_t m = svo.coord_in_range(info.depth, c) ? svo.find(info.depth, c) : Svo::kNone;
          rec[(dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)] = svo.record(m);
        }
    double best = -std::numeric_limits<double>::infinity();
    for (int iz = 0; iz < res; ++iz)
      for (int iy = 0; iy < res; ++iy)
        for (int ix = 0; ix < res; ++ix) {
          const int b[3] = {base[static_cast<size_t>(ix)], base[static_cast<size_t>(iy)], base[static_cast<size_t>(iz)]};
          const double f[3] = {frac[static_cast<size_t>(ix)], frac[static_cast<size_t>(iy)], frac[static_cast<size_t>(iz)]};
          double raw = 0.0;
          for (int o = 0; o < 8; ++o) {
            const int bit[3] = {o & 1, (o >> 1) & 1, (o >> 2) & 1};
            double w = 1.0;
            const int d[3] = {b[0] + bit[0], b[1] + bit[1], b[2] + bit[2]};
            for (int a = 0; a < 3; ++a) w *= bit[a] ? f[a] : 1.0 - f[a];
            const double* r = rec[(d[2] + 1) * 9 + (d[1] + 1) * 3 + (d[0] + 1)];
            raw += w * (r[0] + side * ((f[0] - bit[0]) * r[1] + (f[1] - bit[1]) * r[2] + (f[2] - bit[2]) * r[3]));
          }
          best = std::max(best, raw);
        }
    out[static_cast<size_t>(k)] = tanh01(best);
  }
  return out;
}

std::vector<uint8_t> required_from_probes(const Svo& svo, const std::vector<double>& max_opacity,
                                          const RequiredConfig& config) {
  const size_t n = svo.node_count();
  if (max_opacity.size() != n) throw InvalidArgument("required_nodes: probe count differs from node count");
  std::vector<uint8_t> visited(n, 0);
  std::vector<int32_t> queue;
  auto for_neighbours = [&](int32_t node, auto&& fn) {
    const NodeInfo& info = svo.info(node);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const GridCoord c = {info.coord[0] + dx, info.coord[1] + dy, info.coord[2] + dz};
          if (!svo.coord_in_range(info.depth, c)) continue;
          const int32_t m = svo.find(info.depth, c);
          if (m != Svo::kNone) fn(m);
        }
  };
  // Node ids never mix levels within one search: neighbours share the depth.
  for (size_t s = 0; s < n; ++s) {
    if (visited[s] || max_opacity[s] < config.seed_threshold) continue;
    visited[s] = 1;
    queue.assign(1, static_cast<int32_t>(s));
    for (size_t q = 0; q < queue.size(); ++q) {
      for_neighbours(queue[q], [&](int32_t m) {
        if (visited[static_cast<size_t>(m)] || max_opacity[static_cast<size_t>(m)] < config.expand_threshold) return;
        visited[static_cast<size_t>(m)] = 1;
        queue.push_back(m);
      });
    }
  }
  std::vector<uint8_t> required = visited;
  for (size_t s = 0; s < n; ++s)
    if (visited[s]) for_neighbours(static_cast<int32_t>(s), [&](int32_t m) { required[static_cast<size_t>(m)] = 1; });
  return required;
}

std::vector<uint8_t> required_nodes(const Svo& svo, const RequiredConfig& config) {
  return required_from_probes(svo, probe_max_opacity(svo, config.probe_resolution), config);
}

std::vector<int32_t> merge(Svo& svo, const std::vector<uint8_t>& required) {
  const size_t n = svo.node_count();
  if (required.size() != n) throw InvalidArgument("merge: required mask size mismatch");
  std::vector<uint8_t> keep(n, 1);
  std::vector<uint8_t> leaf(n);
  for (size_t i = 0; i < n; ++i) leaf[i] = svo.is_leaf(static_cast<int32_t>(i)) ? 1 : 0;
  std::vector<std::vector<int32_t>> parents_by_depth(static_cast<size_t>(svo.max_depth() + 1));
  for (size_t i = 0; i < n; ++i)
    if (!leaf[i]) parents_by_depth[static_cast<size_t>(svo.info(static_cast<int32_t>(i)).depth)].push_back(static_cast<int32_t>(i));
  for (int d = svo.max_depth() - 1; d >= 0; --d) {
    for (int32_t p : parents_by_depth[static_cast<size_t>(d)]) {
      const int32_t first = svo.info(p).first_child;
      bool drop = true;
      for (int o = 0; o < 8 && drop; ++o) {
        const auto c = static_cast<size_t>(first + o);
        if (required[c] || !leaf[c]) drop = false;
      }
      if (!drop) continue;
      for (int o = 0; o < 8; ++o) keep[static_cast<size_t>(first + o)] = 0;
      leaf[static_cast<size_t>(p)] = 1;
    }
  }
  return svo.compact(keep);
}

bool nyquist_allows(const std::vector<Camera>& cameras, const Vec3& p, double side) {
  for (const Camera& cam : cameras) {
    const Vec3 local = cam.rotation.transpose() * (p - cam.position);
    if (!(local.z() < 0.0)) continue;
    const double depth = -local.z();
    const double x = cam.cx + cam.fx * local.x() / depth;
    const double y = cam.cy - cam.fy * local.y() / depth;
    if (x < 0.0 || y < 0.0 || x >= cam.width || y >= cam.height) continue;
    if (side >= footprint(cam, 0, local.norm())) return true;
  }
  return false;
}

SubdivideResult subdivide(Svo& svo, const std::vector<uint8_t>& required, const std::vector<Camera>& cameras,
                          size_t node_budget, const std::vector<double>* max_opacity) {
  SubdivideResult result;
  const size_t n = svo.node_count();
  if (required.size() != n) throw InvalidArgument("subdivide: required mask size mismatch");
  std::vector<double> probes;
  if (!max_opacity) {
    probes = probe_max_opacity(svo);
    max_opacity = &probes;
  }
  std::vector<int32_t> candidates;
  for (size_t i = 0; i < n; ++i) {
    const auto node = static_cast<int32_t>(i);
    if (!required[i] || !svo.is_leaf(node)) continue;
    const int depth = svo.info(node).depth;
    if (depth + 1 > Svo::kMaxDepth) continue;
    if (nyquist_allows(cameras, svo.center(node), svo.side(depth + 1))) candidates.push_back(node);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](int32_t a, int32_t b) {
    return (*max_opacity)[static_cast<size_t>(a)] > (*max_opacity)[static_cast<size_t>(b)];
  });
  const int count = 1 + svo.sh_dim();
  std::vector<double> value(static_cast<size_t>(count));
  std::vector<double> grad(static_cast<size_t>(3 * count));
  for (size_t k = 0; k < candidates.size(); ++k) {
    if (svo.node_count() + 8 > node_budget) {
      result.skipped_budget = candidates.size() - k;
      std::fprintf(stderr, "warning: node budget %zu reached, %zu subdivisions skipped\n", node_budget,
                   result.skipped_budget);
      break;
    }
    const int32_t node = candidates[k];
    const int depth = svo.info(node).depth;
    svo.subdivide(node);
    for (int o = 0; o < 8; ++o) {
      const int32_t c = svo.child(node, o);
      eval_level(svo, svo.center(c), depth, value.data(), grad.data());
      auto p = svo.node_params(c);
      p[0] = value[0];
      for (int a = 0; a < 3; ++a) p[static_cast<size_t>(1 + a)] = grad[static_cast<size_t>(a * count)];
      for (int j = 0; j < svo.sh_dim(); ++j) {
        p[static_cast<size_t>(svo.sh_f0_offset() + j)] = value[static_cast<size_t>(1 + j)];
        for (int a = 0; a < 3; ++a)
          p[static_cast<size_t>(svo.sh_grad_offset(a) + j)] = grad[static_cast<size_t>(a * count + 1 + j)];
      }
    }
    ++result.subdivided;
  }
  result.changed = result.subdivided > 0;
  return result;
}

PhaseResult structure_phase(SceneModel& model, OptState& opt, const Dataset& data, const TrainConfig& config) {
  PhaseResult r;
  Svo& svo = model.svo;
  r.nodes_before = svo.node_count();
  RequiredConfig rc;
  rc.seed_threshold = config.seed_threshold;
  rc.expand_threshold = config.expand_threshold;
  const std::vector<double> probes = probe_max_opacity(svo, rc.probe_resolution);
  const std::vector<uint8_t> required = required_from_probes(svo, probes, rc);
  r.required = static_cast<size_t>(std::count(required.begin(), required.end(), uint8_t{1}));
  const std::vector<int32_t> new_of_old = merge(svo, required);
  r.nodes_after_merge = svo.node_count();
  std::vector<uint8_t> required_new(svo.node_count(), 0);
  std::vector<double> probes_new(svo.node_count(), 0.0);
  for (size_t i = 0; i < new_of_old.size(); ++i) {
    const int32_t m = new_of_old[i];
    if (m == Svo::kNone) continue;
    required_new[static_cast<size_t>(m)] = required[i];
    probes_new[static_cast<size_t>(m)] = probes[i];
  }
  std::vector<Camera> cameras;
  for (int i : data.indices(Split::Train)) cameras.push_back(data.cameras[static_cast<size_t>(i)]);
  const SubdivideResult sub = subdivide(svo, required_new, cameras, config.node_budget, &probes_new);
  r.nodes_after_subdivide = svo.node_count();
  if (r.nodes_after_merge != r.nodes_before || sub.changed) {
    ++model.revision;
    reset_optimizer(opt, model.parameter_count());
  }
  r.done = !sub.changed;
  return r;
}

std::vector<PhaseReport> train_coarse_to_fine(SceneModel& model, OptState& opt, const Dataset& data,
                                              const TrainConfig& config, size_t total_iterations, TrainContext& context,
                                              const IterationCallback& on_iteration, const PhaseCallback& on_phase) {
  if (config.iterations_per_phase == 0) throw InvalidArgument("train: iterations_per_phase must be positive");
  std::vector<PhaseReport> reports;
  size_t remaining = total_iterations;
  for (int phase = 0; phase < config.max_phases && remaining > 0; ++phase) {
    PhaseReport report;
    report.phase = phase;
    const size_t iters = std::min(remaining, config.iterations_per_phase);
    report.stats = train_epoch(model, opt, data, config, iters, context, on_iteration);
    remaining -= iters;
    report.iteration = context.iteration;
    if (on_phase) on_phase(model, report);
    if (remaining > 0 && phase + 1 < config.max_phases) {
      report.structure = structure_phase(model, opt, data, config);
      report.structure_ran = true;
      if (on_phase) on_phase(model, report);
    }
    reports.push_back(std::move(report));
    if (reports.back().structure_ran && reports.back().structure.done) break;
  }
  return reports;
}

}  // namespace xrf
