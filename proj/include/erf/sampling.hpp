#pragma once

// Input pixel selection driven by a cached photo-loss map, and the three-stage
// per-ray sample pipeline (stratified, uniform cap, opacity-weighted cap).

#include "erf/dataset.hpp"
#include "erf/rng.hpp"
#include "erf/scene_model.hpp"

#include <algorithm>
#include <vector>

namespace xrf {

struct LossCacheConfig {
  int cell_level = 2;  // one cell per 2^cell_level x 2^cell_level level-0 pixels
  double decay = 0.9;
  double floor = 0.05;
  double initial_loss = 1.0;
  int rebuild_interval = 5000;
  bool importance = true;  // false: all cells weighted equally
};

/// Running per-cell photo losses over a set of images, with a prefix-sum
/// table of sampling weights (loss + floor) that is refreshed periodically.
class LossCache {
 public:
  LossCache() = default;
  /// One entry per cached image: its dataset index and level-0 size.
  LossCache(const std::vector<int>& image_ids, const std::vector<std::pair<int, int>>& sizes,
            const LossCacheConfig& config = {});
  static LossCache for_split(const Dataset& data, Split split, const LossCacheConfig& config = {});

  const LossCacheConfig& config() const { return config_; }
  size_t cell_count() const { return loss_.size(); }
  size_t image_count() const { return images_.size(); }
  bool empty() const { return loss_.empty(); }

  double loss(size_t cell) const { return loss_[cell]; }
  void set_loss(size_t cell, double value) { loss_[cell] = value; }
  /// Weight as of the last prefix rebuild.
  double weight(size_t cell) const { return cell == 0 ? prefix_[0] : prefix_[cell] - prefix_[cell - 1]; }
  /// Weight implied by the current running loss.
  double live_weight(size_t cell) const { return config_.importance ? loss_[cell] + config_.floor : 1.0; }
  double total_weight() const { return prefix_.empty() ? 0.0 : prefix_.back(); }

  /// Draws a cell by weight from the prefix table.
  size_t draw_cell(Rng& rng) const;
  /// Image slot, dataset index and level-0 pixel rectangle of a cell.
  struct CellInfo {
    int slot = 0;
    int image = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // [x0, x1) x [y0, y1)
  };
  CellInfo cell_info(size_t cell) const;
  size_t cell_of(int slot, int x0, int y0) const;

  void rebuild_prefix();
  /// Counts update calls; rebuilds on the configured cadence.
  void tick();
  uint64_t updates() const { return updates_; }

 private:
  struct ImageCells {
    int image = 0;
    int width = 0, height = 0;      // level-0 pixels
    int cells_x = 0, cells_y = 0;
    size_t offset = 0;
  };
  LossCacheConfig config_;
  std::vector<ImageCells> images_;
  std::vector<double> loss_;
  std::vector<double> prefix_;
  uint64_t updates_ = 0;
};

struct PixelSample {
  PixelId pixel;
  Rgb target = Rgb::Zero();
  size_t cell = 0;
};

using PixelBatch = std::vector<PixelSample>;

/// Mip levels whose footprint at the camera-to-box-centre distance does not
/// exceed the root side, capped at max_level (negative: no cap).
std::vector<int> valid_mip_levels(const Dataset& data, int image, const Svo& svo, const Aabb& aabb,
                                  int max_level = -1);

/// Draws `count` pixels: a cell by cached weight, a mip level uniformly among
/// the valid levels, then a uniform level-0 pixel inside the cell mapped to
/// that level. An empty cache yields an empty batch.
PixelBatch sample_pixels(const LossCache& cache, const Dataset& data, const Svo& svo, const Aabb& aabb, size_t count,
                         Rng& rng, int max_mip_level = -1);

/// EMA update of the cells behind each batch entry with its per-pixel loss
/// (maximum over colour channels of the squared error).
void update_cache(LossCache& cache, const PixelBatch& batch, const std::vector<double>& losses);

struct RaySample {
  double t = 0.0;
  double footprint = 0.0;
  double length = 0.0;  // stratum length represented by the sample
};

struct Ray;

/// LoD-aware stratified samples along a ray: nodes at the Nyquist depth of
/// their entry footprint get ceil(n * len / side) jittered strata; leaves
/// shallower than min(target, max allocated depth) are free space. Jitter is
/// seeded per (seed, node), so unchanged nodes keep their samples.
std::vector<RaySample> stratified_ray_samples(const Svo& svo, const Ray& ray, int n_per_side, uint64_t seed);

/// Sorted indices of a uniform random subset of size min(n, n_max).
std::vector<size_t> cap_uniform_indices(size_t n, size_t n_max, Rng& rng);

/// Sorted indices of a weighted subset without replacement (exponential race),
/// weights 0.05 + opacity.
std::vector<size_t> cap_by_opacity_indices(const std::vector<double>& opacity, size_t n_max, Rng& rng);

template <class T>
std::vector<T> select(const std::vector<T>& items, const std::vector<size_t>& indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (size_t i : indices) out.push_back(items[i]);
  return out;
}

template <class T>
std::vector<T> cap_uniform(const std::vector<T>& samples, size_t n_max, Rng& rng) {
  if (samples.size() <= n_max) return samples;
  return select(samples, cap_uniform_indices(samples.size(), n_max, rng));
}

template <class T>
std::vector<T> cap_by_opacity(const std::vector<T>& samples, const std::vector<double>& opacity, size_t n_max,
                              Rng& rng) {
  if (samples.size() <= n_max) return samples;
  return select(samples, cap_by_opacity_indices(opacity, n_max, rng));
}

inline constexpr double kSampleWeightFloor = 0.05;

}  // namespace xrf
