#include "erf/field.hpp"

#include "erf/constraints.hpp"
#include "erf/sh.hpp"

#include <cmath>

namespace xrf {

int nyquist_depth(const Svo& svo, double footprint) {
  if (!(footprint > 0.0) || footprint >= svo.root_side()) return 0;
  int d = static_cast<int>(std::floor(std::log2(svo.root_side() / footprint)));
  d = std::clamp(d, 0, Svo::kMaxDepth);
  while (d < Svo::kMaxDepth && svo.side(d + 1) >= footprint) ++d;
  while (d > 0 && svo.side(d) < footprint) --d;
  return d;
}

DepthSelection select_depths(const Svo& svo, const Query4D& q) {
  DepthSelection sel;
  // Shallowest level not coarser than the footprint; the blend runs toward its parent.
  int d = nyquist_depth(svo, q.footprint);
  if (q.footprint < svo.root_side() && svo.side(d) > q.footprint && d < Svo::kMaxDepth) ++d;
  d = std::min(d, svo.max_depth());
  if (d > 0) {
    const auto node = node_lookup(svo, q.pos, d);
    if (node) d = svo.info(*node).depth;
  }
  sel.fine_depth = d;
  if (d == 0) return sel;
  const double side = svo.side(d);
  sel.lod_weight = std::clamp((q.footprint - side) / side, 0.0, 1.0);
  return sel;
}

const std::array<int32_t, 8>& StencilBuilder::cell_nodes(int depth, const GridCoord& base) {
  for (auto& c : cache_)
    if (c.depth == depth && c.base == base) return c.nodes;
  CellCache& c = cache_[static_cast<size_t>(next_slot_)];
  next_slot_ ^= 1;
  c.depth = depth;
  c.base = base;
  for (int o = 0; o < 8; ++o) {
    const GridCoord g = {base[0] + (o & 1), base[1] + ((o >> 1) & 1), base[2] + ((o >> 2) & 1)};
    c.nodes[static_cast<size_t>(o)] = svo_.coord_in_range(depth, g) ? svo_.find(depth, g) : Svo::kNone;
  }
  return c.nodes;
}

void StencilBuilder::add_level(const Vec3& pos, int depth, double scale, StencilEntry* out) {
  const double side = svo_.side(depth);
  const Vec3 g = (pos - svo_.root_min()) / side - Vec3::Constant(0.5);
  const GridCoord base = {static_cast<int32_t>(std::floor(g.x())), static_cast<int32_t>(std::floor(g.y())),
                          static_cast<int32_t>(std::floor(g.z()))};
  const Vec3 frac = g - Vec3(base[0], base[1], base[2]);
  const auto& nodes = cell_nodes(depth, base);
  for (int o = 0; o < 8; ++o) {
    const int bx = o & 1, by = (o >> 1) & 1, bz = (o >> 2) & 1;
    const double w = (bx ? frac.x() : 1.0 - frac.x()) * (by ? frac.y() : 1.0 - frac.y()) *
                     (bz ? frac.z() : 1.0 - frac.z());
    StencilEntry& e = out[o];
    e.node = nodes[static_cast<size_t>(o)];
    e.weight = scale * w;
    e.offset = side * (frac - Vec3(bx, by, bz));
  }
}

void StencilBuilder::build(const Query4D& q, Stencil& out) { build(q, select_depths(svo_, q), out); }

void StencilBuilder::build(const Query4D& q, const DepthSelection& sel, Stencil& out) {
  out.depths = sel;
  if (sel.fine_depth == 0) {
    add_level(q.pos, 0, 1.0, out.entries.data());
    out.size = 8;
    return;
  }
  add_level(q.pos, sel.fine_depth, 1.0 - sel.lod_weight, out.entries.data());
  add_level(q.pos, sel.fine_depth - 1, sel.lod_weight, out.entries.data() + 8);
  out.size = 16;
}

Stencil make_stencil(const Svo& svo, const Query4D& q) {
  Stencil s;
  StencilBuilder(svo).build(q, s);
  return s;
}

double interp_opacity(const Svo& svo, const Stencil& s) {
  double v = 0.0;
  for (int i = 0; i < s.size; ++i) {
    const StencilEntry& e = s.entries[static_cast<size_t>(i)];
    if (e.weight == 0.0) continue;
    const double* r = svo.record(e.node);
    v += e.weight * (r[0] + e.offset.x() * r[1] + e.offset.y() * r[2] + e.offset.z() * r[3]);
  }
  return v;
}

void interp_sh(const Svo& svo, const Stencil& s, double* out) {
  const int dim = svo.sh_dim();
  const int f0 = svo.sh_f0_offset();
  const int gx = svo.sh_grad_offset(0), gy = svo.sh_grad_offset(1), gz = svo.sh_grad_offset(2);
  std::fill(out, out + dim, 0.0);
  for (int i = 0; i < s.size; ++i) {
    const StencilEntry& e = s.entries[static_cast<size_t>(i)];
    if (e.weight == 0.0) continue;
    const double* r = svo.record(e.node);
    const double w = e.weight;
    const double wx = w * e.offset.x(), wy = w * e.offset.y(), wz = w * e.offset.z();
    for (int j = 0; j < dim; ++j) out[j] += w * r[f0 + j] + wx * r[gx + j] + wy * r[gy + j] + wz * r[gz + j];
  }
}

std::vector<double> interp4d(const Svo& svo, const Query4D& q, FieldKind field) {
  const Stencil s = make_stencil(svo, q);
  if (field == FieldKind::Opacity) return {interp_opacity(svo, s)};
  std::vector<double> out(static_cast<size_t>(svo.sh_dim()));
  interp_sh(svo, s, out.data());
  return out;
}

double stencil_weight_sum(const Stencil& s) {
  double sum = 0.0;
  for (int i = 0; i < s.size; ++i) sum += s.entries[static_cast<size_t>(i)].weight;
  return sum;
}

double eval_opacity(const Svo& svo, const Query4D& q) { return tanh01(interp_opacity(svo, make_stencil(svo, q))); }

Rgb radiance_raw(const Svo& svo, const double* coeffs, const Vec3& dir, double* basis_scratch) {
  double local[kMaxShBands * kMaxShBands];
  double* basis = basis_scratch ? basis_scratch : local;
  const int nb = svo.sh_basis_count();
  sh_basis(svo.sh_bands(), dir, basis);
  Rgb raw = Rgb::Zero();
  for (int c = 0; c < 3; ++c) {
    double v = 0.0;
    for (int k = 0; k < nb; ++k) v += basis[k] * coeffs[c * nb + k];
    raw[c] = v;
  }
  return raw;
}

Rgb eval_radiance(const Svo& svo, const Query4D& q, const Vec3& dir) {
  std::vector<double> coeffs = interp4d(svo, q, FieldKind::Sh);
  const Rgb raw = radiance_raw(svo, coeffs.data(), dir);
  return Rgb(lilu_forward(raw[0]), lilu_forward(raw[1]), lilu_forward(raw[2]));
}

namespace {

/// Value and spatial gradient of one dual-grid level restricted to the
/// components [first, first + count) whose f0 sits at record offset f0_offset
/// and gradient rows at grad_offset[axis].
void level_value_and_gradient(const Svo& svo, const Vec3& pos, int depth, int count, int f0_offset,
                              const std::array<int, 3>& grad_offset, double* value, double* grad) {
  const double side = svo.side(depth);
  const Vec3 g = (pos - svo.root_min()) / side - Vec3::Constant(0.5);
  const GridCoord base = {static_cast<int32_t>(std::floor(g.x())), static_cast<int32_t>(std::floor(g.y())),
                          static_cast<int32_t>(std::floor(g.z()))};
  const Vec3 frac = g - Vec3(base[0], base[1], base[2]);
  for (int o = 0; o < 8; ++o) {
    const int b[3] = {o & 1, (o >> 1) & 1, (o >> 2) & 1};
    const GridCoord c = {base[0] + b[0], base[1] + b[1], base[2] + b[2]};
    const int32_t node = svo.coord_in_range(depth, c) ? svo.find(depth, c) : Svo::kNone;
    double t[3], dt[3];
    for (int a = 0; a < 3; ++a) {
      t[a] = b[a] ? frac[a] : 1.0 - frac[a];
      dt[a] = (b[a] ? 1.0 : -1.0) / side;
    }
    const double w = t[0] * t[1] * t[2];
    const Vec3 dw(dt[0] * t[1] * t[2], t[0] * dt[1] * t[2], t[0] * t[1] * dt[2]);
    const Vec3 offset = side * (frac - Vec3(b[0], b[1], b[2]));
    const double* r = svo.record(node);
    for (int j = 0; j < count; ++j) {
      const Vec3 pg(r[grad_offset[0] + j], r[grad_offset[1] + j], r[grad_offset[2] + j]);
      const double v = r[f0_offset + j] + offset.dot(pg);
      value[j] += w * v;
      if (grad)
        for (int a = 0; a < 3; ++a) grad[a * count + j] += dw[a] * v + w * pg[a];
    }
  }
}

}  // namespace

Vec3 opacity_gradient(const Svo& svo, const Query4D& q) {
  const DepthSelection sel = select_depths(svo, q);
  const std::array<int, 3> go = {1, 2, 3};
  double v = 0.0;
  double g[3] = {0.0, 0.0, 0.0};
  double lv = 0.0;
  double lg[3] = {0.0, 0.0, 0.0};
  level_value_and_gradient(svo, q.pos, sel.fine_depth, 1, 0, go, &lv, lg);
  const double fine_scale = sel.fine_depth == 0 ? 1.0 : 1.0 - sel.lod_weight;
  v += fine_scale * lv;
  for (int a = 0; a < 3; ++a) g[a] += fine_scale * lg[a];
  if (sel.fine_depth > 0 && sel.lod_weight > 0.0) {
    lv = 0.0;
    lg[0] = lg[1] = lg[2] = 0.0;
    level_value_and_gradient(svo, q.pos, sel.fine_depth - 1, 1, 0, go, &lv, lg);
    for (int a = 0; a < 3; ++a) g[a] += sel.lod_weight * lg[a];
  }
  return Vec3(g[0], g[1], g[2]);
}

std::optional<Vec3> eval_normal(const Svo& svo, const Query4D& q) {
  const Vec3 g = opacity_gradient(svo, q);
  const double n = g.norm();
  if (!(n >= 1e-12)) return std::nullopt;
  return Vec3(-g / n);
}

void eval_level(const Svo& svo, const Vec3& pos, int depth, double* value_out, double* grad_out) {
  const int dim = svo.sh_dim();
  const int count = 1 + dim;
  std::fill(value_out, value_out + count, 0.0);
  if (grad_out) std::fill(grad_out, grad_out + 3 * count, 0.0);
  double ov = 0.0;
  double og[3] = {0.0, 0.0, 0.0};
  level_value_and_gradient(svo, pos, depth, 1, 0, {1, 2, 3}, &ov, grad_out ? og : nullptr);
  std::vector<double> sv(static_cast<size_t>(dim), 0.0);
  std::vector<double> sg(grad_out ? static_cast<size_t>(3 * dim) : 0, 0.0);
  level_value_and_gradient(svo, pos, depth, dim, svo.sh_f0_offset(),
                           {svo.sh_grad_offset(0), svo.sh_grad_offset(1), svo.sh_grad_offset(2)}, sv.data(),
                           grad_out ? sg.data() : nullptr);
  value_out[0] = ov;
  std::copy(sv.begin(), sv.end(), value_out + 1);
  if (grad_out) {
    for (int a = 0; a < 3; ++a) {
      grad_out[a * count] = og[a];
      for (int j = 0; j < dim; ++j) grad_out[a * count + 1 + j] = sg[static_cast<size_t>(a * dim + j)];
    }
  }
}

}  // namespace xrf
