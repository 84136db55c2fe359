#include "erf/sampling.hpp"

#include "erf/field.hpp"

#include <cmath>
#include <numeric>

namespace xrf {

LossCache::LossCache(const std::vector<int>& image_ids, const std::vector<std::pair<int, int>>& sizes,
                     const LossCacheConfig& config)
    : config_(config) {
  if (image_ids.size() != sizes.size()) throw InvalidArgument("loss cache: ids and sizes differ in length");
  if (config.cell_level < 0 || config.rebuild_interval < 1 || !(config.floor > 0.0))
    throw InvalidArgument("loss cache: invalid configuration");
  const int cell = 1 << config.cell_level;
  size_t offset = 0;
  for (size_t i = 0; i < image_ids.size(); ++i) {
    ImageCells ic;
    ic.image = image_ids[i];
    ic.width = sizes[i].first;
    ic.height = sizes[i].second;
    ic.cells_x = (ic.width + cell - 1) / cell;
    ic.cells_y = (ic.height + cell - 1) / cell;
    ic.offset = offset;
    offset += static_cast<size_t>(ic.cells_x) * static_cast<size_t>(ic.cells_y);
    images_.push_back(ic);
  }
  loss_.assign(offset, config.initial_loss);
  rebuild_prefix();
}

LossCache LossCache::for_split(const Dataset& data, Split split, const LossCacheConfig& config) {
  std::vector<int> ids = data.indices(split);
  std::vector<std::pair<int, int>> sizes;
  for (int i : ids) sizes.emplace_back(data.cameras[static_cast<size_t>(i)].width, data.cameras[static_cast<size_t>(i)].height);
  return LossCache(ids, sizes, config);
}

void LossCache::rebuild_prefix() {
  prefix_.resize(loss_.size());
  double acc = 0.0;
  for (size_t i = 0; i < loss_.size(); ++i) {
    acc += live_weight(i);
    prefix_[i] = acc;
  }
}

void LossCache::tick() {
  ++updates_;
  if (updates_ % static_cast<uint64_t>(config_.rebuild_interval) == 0) rebuild_prefix();
}

size_t LossCache::draw_cell(Rng& rng) const {
  const double u = rng.uniform() * prefix_.back();
  const auto it = std::upper_bound(prefix_.begin(), prefix_.end(), u);
  return std::min(static_cast<size_t>(it - prefix_.begin()), prefix_.size() - 1);
}

LossCache::CellInfo LossCache::cell_info(size_t cell) const {
  auto it = std::upper_bound(images_.begin(), images_.end(), cell,
                             [](size_t c, const ImageCells& ic) { return c < ic.offset; });
  const auto slot = static_cast<int>(it - images_.begin()) - 1;
  const ImageCells& ic = images_[static_cast<size_t>(slot)];
  const size_t local = cell - ic.offset;
  const int cx = static_cast<int>(local % static_cast<size_t>(ic.cells_x));
  const int cy = static_cast<int>(local / static_cast<size_t>(ic.cells_x));
  const int s = 1 << config_.cell_level;
  CellInfo info;
  info.slot = slot;
  info.image = ic.image;
  info.x0 = cx * s;
  info.y0 = cy * s;
  info.x1 = std::min(info.x0 + s, ic.width);
  info.y1 = std::min(info.y0 + s, ic.height);
  return info;
}

size_t LossCache::cell_of(int slot, int x0, int y0) const {
  const ImageCells& ic = images_[static_cast<size_t>(slot)];
  const int s = config_.cell_level;
  return ic.offset + static_cast<size_t>(y0 >> s) * static_cast<size_t>(ic.cells_x) + static_cast<size_t>(x0 >> s);
}

std::vector<int> valid_mip_levels(const Dataset& data, int image, const Svo& svo, const Aabb& aabb, int max_level) {
  const Camera& cam = data.cameras[static_cast<size_t>(image)];
  const auto& pyramid = data.pyramids[static_cast<size_t>(image)];
  const double distance = (cam.position - aabb.center()).norm();
  std::vector<int> levels;
  for (int l = 0; l < static_cast<int>(pyramid.size()); ++l) {
    if (max_level >= 0 && l > max_level) break;
    if (l > 0 && footprint(cam, l, distance) > svo.root_side()) break;
    levels.push_back(l);
  }
  return levels;
}

PixelBatch sample_pixels(const LossCache& cache, const Dataset& data, const Svo& svo, const Aabb& aabb, size_t count,
                         Rng& rng, int max_mip_level) {
  PixelBatch batch;
  if (cache.empty() || count == 0) return batch;
  std::vector<std::vector<int>> levels(cache.image_count());
  batch.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    PixelSample s;
    s.cell = cache.draw_cell(rng);
    const LossCache::CellInfo info = cache.cell_info(s.cell);
    auto& lv = levels[static_cast<size_t>(info.slot)];
    if (lv.empty()) lv = valid_mip_levels(data, info.image, svo, aabb, max_mip_level);
    const int level = lv[rng.below(lv.size())];
    const int x = info.x0 + static_cast<int>(rng.below(static_cast<uint64_t>(info.x1 - info.x0)));
    const int y = info.y0 + static_cast<int>(rng.below(static_cast<uint64_t>(info.y1 - info.y0)));
    s.pixel = PixelId{info.image, level, x >> level, y >> level};
    const Image& img = data.pyramids[static_cast<size_t>(info.image)][static_cast<size_t>(level)];
    s.target = img.pixel(s.pixel.u, s.pixel.v);
    batch.push_back(s);
  }
  return batch;
}

void update_cache(LossCache& cache, const PixelBatch& batch, const std::vector<double>& losses) {
  if (losses.size() != batch.size()) throw InvalidArgument("update_cache: loss count differs from batch size");
  const double decay = cache.config().decay;
  for (size_t i = 0; i < batch.size(); ++i) {
    const double l = std::max(0.0, losses[i]);
    cache.set_loss(batch[i].cell, decay * cache.loss(batch[i].cell) + (1.0 - decay) * l);
  }
  cache.tick();
}

namespace {

struct NodeSpan {
  int32_t node;
  double t0, t1;
};

void sample_node(const Svo& svo, const Ray& ray, int32_t node, double t0, double t1, int n_per_side, uint64_t seed,
                 std::vector<RaySample>& out) {
  const NodeInfo& info = svo.info(node);
  const double side = svo.side(info.depth);
  const double len = t1 - t0;
  if (!(len > 1e-12 * side)) return;
  const auto n = static_cast<int>(std::ceil(n_per_side * len / side - 1e-9));
  const int count = std::max(n, 1);
  const uint64_t node_key = (static_cast<uint64_t>(info.depth) << 57) ^
                            (static_cast<uint64_t>(static_cast<uint32_t>(info.coord[0])) << 38) ^
                            (static_cast<uint64_t>(static_cast<uint32_t>(info.coord[1])) << 19) ^
                            static_cast<uint64_t>(static_cast<uint32_t>(info.coord[2]));
  Rng rng(stream_seed(seed, node_key));
  const double stratum = len / count;
  for (int i = 0; i < count; ++i) {
    RaySample s;
    s.t = t0 + (i + rng.uniform()) * stratum;
    s.footprint = ray.footprint(s.t);
    s.length = stratum;
    out.push_back(s);
  }
}

}  // namespace

std::vector<RaySample> stratified_ray_samples(const Svo& svo, const Ray& ray, int n_per_side, uint64_t seed) {
  std::vector<RaySample> out;
  if (n_per_side < 1) throw InvalidArgument("stratified_ray_samples: n_per_side must be >= 1");
  if (!(ray.t_far > ray.t_near)) return out;
  const Vec3 root_max = svo.root_min() + Vec3::Constant(svo.root_side());
  double r0 = 0.0, r1 = 0.0;
  if (!intersect_aabb(ray.origin, ray.dir, svo.root_min(), root_max, r0, r1)) return out;
  r0 = std::max(r0, ray.t_near);
  r1 = std::min(r1, ray.t_far);
  if (!(r1 > r0)) return out;
  const int max_depth = svo.max_depth();
  // Depth-first, front-to-back traversal with an explicit stack.
  std::vector<NodeSpan> stack{{0, r0, r1}};
  std::array<NodeSpan, 8> kids{};
  while (!stack.empty()) {
    const NodeSpan cur = stack.back();
    stack.pop_back();
    const NodeInfo& info = svo.info(cur.node);
    const int target = std::min(nyquist_depth(svo, ray.footprint(cur.t0)), max_depth);
    if (info.depth >= target) {
      sample_node(svo, ray, cur.node, cur.t0, cur.t1, n_per_side, seed, out);
      continue;
    }
    if (svo.is_leaf(cur.node)) continue;  // free space
    int nk = 0;
    const double child_side = svo.side(info.depth + 1);
    for (int o = 0; o < 8; ++o) {
      const int32_t c = svo.child(cur.node, o);
      const GridCoord& cc = svo.info(c).coord;
      const Vec3 lo = svo.root_min() + child_side * Vec3(cc[0], cc[1], cc[2]);
      const Vec3 hi = lo + Vec3::Constant(child_side);
      double a = 0.0, b = 0.0;
      if (!intersect_aabb(ray.origin, ray.dir, lo, hi, a, b)) continue;
      a = std::max(a, cur.t0);
      b = std::min(b, cur.t1);
      if (b > a) kids[static_cast<size_t>(nk++)] = NodeSpan{c, a, b};
    }
    std::sort(kids.begin(), kids.begin() + nk, [](const NodeSpan& x, const NodeSpan& y) { return x.t0 < y.t0; });
    for (int k = nk - 1; k >= 0; --k) stack.push_back(kids[static_cast<size_t>(k)]);
  }
  return out;
}

std::vector<size_t> cap_uniform_indices(size_t n, size_t n_max, Rng& rng) {
  std::vector<size_t> all(n);
  std::iota(all.begin(), all.end(), size_t{0});
  if (n <= n_max) return all;
  std::vector<size_t> out;
  out.reserve(n_max);
  std::sample(all.begin(), all.end(), std::back_inserter(out), n_max, rng);
  return out;
}

std::vector<size_t> cap_by_opacity_indices(const std::vector<double>& opacity, size_t n_max, Rng& rng) {
  const size_t n = opacity.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  if (n <= n_max) return idx;
  // Exponential race: key log(u) / w, keep the n_max largest keys.
  std::vector<double> key(n);
  for (size_t i = 0; i < n; ++i) {
    const double w = kSampleWeightFloor + std::clamp(opacity[i], 0.0, 1.0);
    double u = rng.uniform();
    if (u <= 0.0) u = 0x1.0p-60;
    key[i] = std::log(u) / w;
  }
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_max), idx.end(),
                   [&](size_t a, size_t b) { return key[a] > key[b] || (key[a] == key[b] && a < b); });
  idx.resize(n_max);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace xrf
