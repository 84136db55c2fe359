#include "erf/objective.hpp"

#include <cmath>

namespace xrf {

double photo_loss(const Rgb& predicted, const Rgb& target) { return (predicted - target).square().sum(); }

double huber(double x, double delta) {
  const double a = std::abs(x);
  return a <= delta ? 0.5 * x * x : delta * (a - 0.5 * delta);
}

double huber_derivative(double x, double delta) {
  if (std::abs(x) <= delta) return x;
  return x > 0.0 ? delta : -delta;
}

PriorBatch sample_prior_batch(const SceneModel& model, size_t size, Rng& rng) {
  PriorBatch b;
  const size_t n_nodes = model.svo.node_count();
  const size_t n_texels = model.background.texel_count();
  if (size == 0 || n_nodes + n_texels == 0) return b;
  size_t node_share = static_cast<size_t>(std::llround(static_cast<double>(size) * static_cast<double>(n_nodes) /
                                                       static_cast<double>(n_nodes + n_texels)));
  if (n_texels > 0 && node_share == size && size > 1) --node_share;
  if (n_nodes > 0 && node_share == 0 && size > 1) node_share = 1;
  const size_t texel_share = n_texels > 0 ? size - node_share : 0;
  b.nodes.reserve(node_share);
  for (size_t i = 0; i < node_share; ++i) {
    const auto node = static_cast<int32_t>(rng.below(n_nodes));
    const NodeInfo& info = model.svo.info(node);
    const double side = model.svo.side(info.depth);
    const Vec3 lo = model.svo.cell_center(info.depth, info.coord) - Vec3::Constant(0.5 * side);
    const Vec3 p = lo + side * Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    b.nodes.push_back(NodePriorEntry{node, p});
  }
  b.texels.reserve(texel_share);
  for (size_t i = 0; i < texel_share; ++i) b.texels.push_back(rng.below(n_texels));
  return b;
}

double plane_value(const Svo& svo, int32_t node, int component, const Vec3& x) {
  const double* r = svo.record(node);
  const Vec3 dx = x - svo.center(node);
  if (component == 0) return r[0] + dx.x() * r[1] + dx.y() * r[2] + dx.z() * r[3];
  const int j = component - 1;
  return r[svo.sh_f0_offset() + j] + dx.x() * r[svo.sh_grad_offset(0) + j] + dx.y() * r[svo.sh_grad_offset(1) + j] +
         dx.z() * r[svo.sh_grad_offset(2) + j];
}

std::vector<int32_t> face_neighbours(const Svo& svo, int32_t node) {
  std::vector<int32_t> out;
  const NodeInfo& info = svo.info(node);
  for (int a = 0; a < 3; ++a) {
    for (int s : {-1, 1}) {
      GridCoord c = info.coord;
      c[static_cast<size_t>(a)] += s;
      if (!svo.coord_in_range(info.depth, c)) continue;
      const int32_t m = svo.find(info.depth, c);
      if (m != Svo::kNone) out.push_back(m);
    }
  }
  return out;
}

int32_t level_partner(const Svo& svo, int32_t node, const Vec3& point) {
  const NodeInfo& info = svo.info(node);
  if (!svo.is_leaf(node)) {
    const Vec3 c = svo.center(node);
    const int octant = (point.x() >= c.x() ? 1 : 0) | (point.y() >= c.y() ? 2 : 0) | (point.z() >= c.z() ? 4 : 0);
    return svo.child(node, octant);
  }
  return info.parent;
}

double node_prior_term(const Svo& svo, const NodePriorEntry& e, double delta) {
  const int components = 1 + svo.sh_dim();
  const std::vector<int32_t> nbrs = face_neighbours(svo, e.node);
  const int32_t partner = level_partner(svo, e.node, e.point);
  const double* r = svo.record(e.node);
  double sum = 0.0;
  for (int j = 0; j < components; ++j) {
    const int f0 = j == 0 ? 0 : svo.sh_f0_offset() + j - 1;
    for (int32_t m : nbrs) sum += huber(r[f0] - svo.record(m)[f0], delta);
    const double v = plane_value(svo, e.node, j, e.point);
    if (partner != Svo::kNone) sum += huber(v - plane_value(svo, partner, j, e.point), delta);
    sum += huber(v, delta);
  }
  return sum;
}

std::array<int64_t, 2> texel_neighbours(const CubeMap& cube, size_t texel) {
  const auto r = static_cast<size_t>(cube.resolution);
  const size_t col = texel % r;
  const size_t row = (texel / r) % r;
  return {col + 1 < r ? static_cast<int64_t>(texel + 1) : -1, row + 1 < r ? static_cast<int64_t>(texel + r) : -1};
}

double texel_prior_term(const CubeMap& cube, size_t texel, double delta) {
  const auto nb = texel_neighbours(cube, texel);
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double x = cube.texels[texel * 3 + static_cast<size_t>(c)];
    for (int64_t n : nb)
      if (n >= 0) sum += huber(x - cube.texels[static_cast<size_t>(n) * 3 + static_cast<size_t>(c)], delta);
    sum += huber(x, delta);
  }
  return sum;
}

double prior_losses(const SceneModel& model, const PriorBatch& batch, double lambda, double delta) {
  double total = 0.0;
  if (!batch.nodes.empty()) {
    double s = 0.0;
    for (const auto& e : batch.nodes) s += node_prior_term(model.svo, e, delta);
    total += s / static_cast<double>(batch.nodes.size());
  }
  if (!batch.texels.empty()) {
    double s = 0.0;
    for (size_t t : batch.texels) s += texel_prior_term(model.background, t, delta);
    total += s / static_cast<double>(batch.texels.size());
  }
  return lambda * total;
}

}  // namespace xrf
