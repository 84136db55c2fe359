#include "erf/scene_model.hpp"

#include "erf/constraints.hpp"
#include "erf/rng.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace xrf {

void Aabb::validate() const {
  if (!min.allFinite() || !max.allFinite()) throw InvalidArgument("aabb: non-finite bounds");
  if (!(min.array() < max.array()).all()) throw InvalidArgument("aabb: min must be < max componentwise");
}

size_t full_tree_node_count(int depth) {
  if (depth < 0) return 0;
  size_t total = 0;
  size_t level = 1;
  for (int d = 0; d <= depth; ++d) {
    total += level;
    level *= 8;
  }
  return total;
}

Svo::Svo(const Vec3& root_min, double root_side, int sh_bands)
    : root_min_(root_min), root_side_(root_side), sh_bands_(sh_bands) {
  if (sh_bands < 1 || sh_bands > 4) throw InvalidArgument("svo: sh_bands must be in [1, 4]");
  if (!(root_side > 0.0) || !std::isfinite(root_side)) throw InvalidArgument("svo: root side must be positive");
  border_.assign(static_cast<size_t>(stride()), 0.0);
  border_[0] = kBorderOpacityRaw;
  nodes_.push_back(NodeInfo{});
  params_.assign(static_cast<size_t>(stride()), 0.0);
  rebuild_index();
}

double Svo::side(int depth) const { return std::ldexp(root_side_, -depth); }

bool Svo::contains(const Vec3& p) const {
  return (p.array() >= root_min_.array()).all() && (p.array() <= (root_min_.array() + root_side_)).all();
}

Vec3 Svo::cell_center(int depth, const GridCoord& c) const {
  const double s = side(depth);
  return root_min_ + s * Vec3(c[0] + 0.5, c[1] + 0.5, c[2] + 0.5);
}

GridCoord Svo::cell_of(const Vec3& p, int depth) const {
  const Vec3 g = (p - root_min_) / side(depth);
  return {static_cast<int32_t>(std::floor(g.x())), static_cast<int32_t>(std::floor(g.y())),
          static_cast<int32_t>(std::floor(g.z()))};
}

bool Svo::coord_in_range(int depth, const GridCoord& c) const {
  const int32_t n = int32_t{1} << depth;
  return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < n && c[1] < n && c[2] < n;
}

void Svo::subdivide(int32_t node) {
  if (node < 0 || static_cast<size_t>(node) >= nodes_.size()) throw InvalidArgument("svo: bad node id");
  if (!is_leaf(node)) throw InvalidArgument("svo: node already has children");
  const NodeInfo parent = nodes_[static_cast<size_t>(node)];
  if (parent.depth + 1 > kMaxDepth) throw InvalidArgument("svo: maximum depth exceeded");
  const auto first = static_cast<int32_t>(nodes_.size());
  nodes_[static_cast<size_t>(node)].first_child = first;
  for (int o = 0; o < 8; ++o) {
    NodeInfo c;
    c.parent = node;
    c.depth = parent.depth + 1;
    c.coord = {2 * parent.coord[0] + (o & 1), 2 * parent.coord[1] + ((o >> 1) & 1), 2 * parent.coord[2] + ((o >> 2) & 1)};
    nodes_.push_back(c);
    index_.insert(key(c.depth, c.coord), first + o);
  }
  params_.resize(nodes_.size() * static_cast<size_t>(stride()), 0.0);
  max_depth_ = std::max(max_depth_, parent.depth + 1);
  ++structure_revision_;
}

std::vector<int32_t> Svo::breadth_first_order() const {
  std::vector<int32_t> order;
  order.reserve(nodes_.size());
  order.push_back(0);
  for (size_t i = 0; i < order.size(); ++i) {
    const int32_t first = nodes_[static_cast<size_t>(order[i])].first_child;
    if (first == kNone) continue;
    for (int o = 0; o < 8; ++o) order.push_back(first + o);
  }
  return order;
}

std::vector<int32_t> Svo::compact(const std::vector<uint8_t>& keep) {
  if (keep.size() != nodes_.size()) throw InvalidArgument("svo: keep mask size mismatch");
  if (!keep[0]) throw InvalidArgument("svo: root must be kept");
  const auto n_stride = static_cast<size_t>(stride());
  std::vector<NodeInfo> nodes;
  std::vector<double> params;
  std::vector<int32_t> old_of_new{0};
  nodes.push_back(NodeInfo{kNone, kNone, 0, nodes_[0].coord});
  for (size_t i = 0; i < old_of_new.size(); ++i) {
    const NodeInfo& old = nodes_[static_cast<size_t>(old_of_new[i])];
    if (old.first_child == kNone) continue;
    int kept = 0;
    for (int o = 0; o < 8; ++o) kept += keep[static_cast<size_t>(old.first_child + o)] ? 1 : 0;
    if (kept == 0) continue;
    if (kept != 8) throw InvalidArgument("svo: keep mask splits a sibling group");
    nodes[i].first_child = static_cast<int32_t>(nodes.size());
    for (int o = 0; o < 8; ++o) {
      const NodeInfo& oc = nodes_[static_cast<size_t>(old.first_child + o)];
      nodes.push_back(NodeInfo{static_cast<int32_t>(i), kNone, oc.depth, oc.coord});
      old_of_new.push_back(old.first_child + o);
    }
  }
  params.resize(nodes.size() * n_stride);
  for (size_t i = 0; i < nodes.size(); ++i) {
    const double* src = params_.data() + static_cast<size_t>(old_of_new[i]) * n_stride;
    std::copy(src, src + n_stride, params.data() + i * n_stride);
  }
  std::vector<int32_t> new_of_old(nodes_.size(), kNone);
  for (size_t i = 0; i < old_of_new.size(); ++i) new_of_old[static_cast<size_t>(old_of_new[i])] = static_cast<int32_t>(i);
  nodes_ = std::move(nodes);
  params_ = std::move(params);
  rebuild_index();
  ++structure_revision_;
  return new_of_old;
}

void Svo::rebuild_index() {
  index_.clear();
  index_.reserve(nodes_.size());
  max_depth_ = 0;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    index_.insert(key(nodes_[i].depth, nodes_[i].coord), static_cast<int32_t>(i));
    max_depth_ = std::max(max_depth_, nodes_[i].depth);
  }
}

SceneModel create_dense_grid(const Aabb& aabb, int depth, int sh_bands, int cube_resolution, size_t node_budget) {
  aabb.validate();
  if (depth < 1) throw InvalidArgument("create_dense_grid: depth must be >= 1");
  if (depth > Svo::kMaxDepth || full_tree_node_count(depth) > node_budget)
    throw InvalidArgument("create_dense_grid: depth " + std::to_string(depth) + " exceeds the node budget");
  if (cube_resolution < 1) throw InvalidArgument("create_dense_grid: cube resolution must be >= 1");
  const double side = aabb.extent().maxCoeff();
  SceneModel model;
  model.aabb = aabb;
  model.svo = Svo(aabb.center() - Vec3::Constant(0.5 * side), side, sh_bands);
  size_t level_begin = 0;
  size_t level_end = 1;
  for (int d = 0; d < depth; ++d) {
    for (size_t n = level_begin; n < level_end; ++n) model.svo.subdivide(static_cast<int32_t>(n));
    level_begin = level_end;
    level_end = model.svo.node_count();
  }
  model.background = CubeMap(cube_resolution);
  return model;
}

double initial_opacity_raw_bound(int depth, int samples_per_side, double max_total_opacity) {
  // Along the root diagonal a dense grid of n = 2^depth cells per axis is
  // crossed in at most 3n - 2 cells; each adds at most one rounding sample on
  // top of N * length / side.
  const double n = std::ldexp(1.0, depth);
  const double k = n * (std::ceil(samples_per_side * std::sqrt(3.0)) + 3.0);
  const double per_sample = 1.0 - std::pow(1.0 - max_total_opacity, 1.0 / k);
  return tanh01_inverse(per_sample);
}

namespace {

/// Uniform draw in [lo, hi] rounded to a float32 value that stays inside.
double draw_float(Rng& rng, double lo, double hi) {
  const double x = rng.uniform(lo, hi);
  float f = static_cast<float>(x);
  if (static_cast<double>(f) < lo) f = std::nextafter(f, std::numeric_limits<float>::infinity());
  if (static_cast<double>(f) > hi) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  return static_cast<double>(f);
}

}  // namespace

void init_random(SceneModel& model, uint64_t seed, int samples_per_side) {
  Svo& svo = model.svo;
  const double upper = initial_opacity_raw_bound(svo.max_depth(), samples_per_side);
  const double lower = std::min(kBorderOpacityRaw, upper);
  const int bases = svo.sh_basis_count();
  Rng rng(stream_seed(seed, 0x1417));
  for (size_t n = 0; n < svo.node_count(); ++n) {
    auto p = svo.node_params(static_cast<int32_t>(n));
    std::fill(p.begin(), p.end(), 0.0);
    p[0] = draw_float(rng, lower, upper);
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < bases; ++k) {
        const size_t idx = static_cast<size_t>(svo.sh_f0_offset() + c * bases + k);
        p[idx] = k == 0 ? draw_float(rng, 0.2475, 0.5025) : draw_float(rng, -0.025, 0.025);
      }
    }
  }
  for (double& t : model.background.texels) t = draw_float(rng, 0.0, 1.0);
  ++model.revision;
}

std::optional<int32_t> node_lookup(const Svo& svo, const Vec3& point, int depth) {
  if (!svo.contains(point)) return std::nullopt;
  int32_t node = 0;
  const int target = std::max(0, depth);
  while (svo.info(node).depth < target && !svo.is_leaf(node)) {
    const int d = svo.info(node).depth + 1;
    GridCoord c = svo.cell_of(point, d);
    const int32_t n = int32_t{1} << d;
    for (auto& v : c) v = std::clamp(v, 0, n - 1);
    const GridCoord& pc = svo.info(node).coord;
    const int octant = (c[0] - 2 * pc[0]) | ((c[1] - 2 * pc[1]) << 1) | ((c[2] - 2 * pc[2]) << 2);
    node = svo.child(node, octant);
  }
  return node;
}

}  // namespace xrf
