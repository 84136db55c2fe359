#pragma once

// Explicit scene representation: a sparse voxel octree whose every node
// (inner nodes included) stores a local plane sample of the raw opacity field
// and of the raw spherical-harmonic radiance field, plus a background cube map.

#include "erf/common.hpp"
#include "erf/detail/flat_index.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace xrf {

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  /// Throws InvalidArgument unless min < max componentwise and all finite.
  void validate() const;
};

using GridCoord = std::array<int32_t, 3>;

/// Raw value of the constant free-space ("border") opacity plane.
inline constexpr double kBorderOpacityRaw = -1.0;

inline constexpr size_t kDefaultNodeBudget = size_t{1} << 24;

/// Number of nodes of a complete octree of the given depth, (8^(d+1) - 1) / 7.
size_t full_tree_node_count(int depth);

struct NodeInfo {
  int32_t parent = -1;
  int32_t first_child = -1;  // children occupy [first_child, first_child + 8)
  int32_t depth = 0;
  GridCoord coord{};  // cell index within the virtual 2^depth grid
};

/// Sparse voxel octree with pooled node storage.
///
/// Every node owns `stride()` contiguous raw parameters in one vector:
///   [0]                     opacity f0
///   [1, 4)                  opacity gradient (x, y, z), per world unit
///   [4, 4 + D)              SH f0, D = 3 * bands^2, channel-major (c * bands^2 + k)
///   [4 + D (1 + a), ...)    SH gradient along axis a, same ordering
/// A node has either zero or eight children; children are contiguous.
class Svo {
 public:
  static constexpr int32_t kNone = -1;
  static constexpr int kMaxDepth = 20;

  Svo() = default;
  Svo(const Vec3& root_min, double root_side, int sh_bands);

  int sh_bands() const { return sh_bands_; }
  int sh_basis_count() const { return sh_bands_ * sh_bands_; }
  int sh_dim() const { return 3 * sh_bands_ * sh_bands_; }
  int stride() const { return 4 + 4 * sh_dim(); }
  int sh_f0_offset() const { return 4; }
  int sh_grad_offset(int axis) const { return 4 + sh_dim() * (1 + axis); }

  const Vec3& root_min() const { return root_min_; }
  double root_side() const { return root_side_; }
  Vec3 root_center() const { return root_min_ + Vec3::Constant(0.5 * root_side_); }
  double side(int depth) const;
  bool contains(const Vec3& p) const;

  size_t node_count() const { return nodes_.size(); }
  /// Deepest depth of any allocated node.
  int max_depth() const { return max_depth_; }
  const NodeInfo& info(int32_t node) const { return nodes_[static_cast<size_t>(node)]; }
  bool is_leaf(int32_t node) const { return info(node).first_child == kNone; }
  int32_t child(int32_t node, int octant) const {
    const int32_t first = info(node).first_child;
    return first == kNone ? kNone : first + octant;
  }
  Vec3 center(int32_t node) const { return cell_center(info(node).depth, info(node).coord); }
  Vec3 cell_center(int depth, const GridCoord& coord) const;
  /// Cell coordinate at `depth` containing p (unclamped).
  GridCoord cell_of(const Vec3& p, int depth) const;
  bool coord_in_range(int depth, const GridCoord& coord) const;

  /// Allocated node at (depth, coord) or kNone.
  int32_t find(int depth, const GridCoord& coord) const { return index_.find(key(depth, coord), kNone); }

  /// Allocates the 8 children of a leaf; their parameters are zero.
  void subdivide(int32_t node);

  std::span<double> node_params(int32_t node) {
    return {params_.data() + static_cast<size_t>(node) * static_cast<size_t>(stride()), static_cast<size_t>(stride())};
  }
  std::span<const double> node_params(int32_t node) const {
    return {params_.data() + static_cast<size_t>(node) * static_cast<size_t>(stride()), static_cast<size_t>(stride())};
  }
  /// Parameter record of node, or of the border plane when node == kNone.
  const double* record(int32_t node) const {
    return node == kNone ? border_.data() : params_.data() + static_cast<size_t>(node) * static_cast<size_t>(stride());
  }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  /// The globally constant free-space plane substituted for missing neighbours.
  std::span<const double> border_plane() const { return border_; }

  /// Keeps exactly the nodes with keep[i] != 0. The kept set must contain the
  /// root, be closed under parents and contain complete sibling groups.
  /// Survivor parameters are copied unchanged; node ids are reassigned in
  /// breadth-first order. Returns the new id of every old node (kNone if dropped).
  std::vector<int32_t> compact(const std::vector<uint8_t>& keep);

  /// Node ids in breadth-first order (children in octant order).
  std::vector<int32_t> breadth_first_order() const;

  /// Incremented on every topology change.
  uint64_t structure_revision() const { return structure_revision_; }

 private:
  static uint64_t key(int depth, const GridCoord& c) {
    return (static_cast<uint64_t>(depth) << 57) | (static_cast<uint64_t>(static_cast<uint32_t>(c[0])) << 38) |
           (static_cast<uint64_t>(static_cast<uint32_t>(c[1])) << 19) | static_cast<uint64_t>(static_cast<uint32_t>(c[2]));
  }
  void rebuild_index();

  Vec3 root_min_ = Vec3::Zero();
  double root_side_ = 1.0;
  int sh_bands_ = 3;
  int max_depth_ = 0;
  std::vector<NodeInfo> nodes_;
  std::vector<double> params_;
  std::vector<double> border_;
  detail::FlatIndex index_;
  uint64_t structure_revision_ = 0;
};

/// Six-face environment map of raw radiance texels, face-major:
/// index = ((face * R + row) * R + col) * 3 + channel.
/// Faces are ordered +x, -x, +y, -y, +z, -z.
struct CubeMap {
  int resolution = 0;
  std::vector<double> texels;

  CubeMap() = default;
  explicit CubeMap(int r) : resolution(r), texels(static_cast<size_t>(6 * r * r * 3), 0.0) {}
  size_t texel_index(int face, int row, int col) const {
    return (static_cast<size_t>(face * resolution + row) * static_cast<size_t>(resolution) + static_cast<size_t>(col)) * 3;
  }
  size_t texel_count() const { return static_cast<size_t>(6 * resolution * resolution); }
};

/// The complete optimizable state. Global parameter ids address the SVO
/// parameter vector first, followed by the background texels.
struct SceneModel {
  Aabb aabb;
  Svo svo;
  CubeMap background;
  /// Bumped by every library mutation (optimizer steps, structure changes,
  /// edits). Forward records remember it to detect stale replays.
  uint64_t revision = 0;

  size_t svo_parameter_count() const { return svo.parameters().size(); }
  size_t parameter_count() const { return svo.parameters().size() + background.texels.size(); }
  double& parameter(size_t id) {
    const size_t n = svo.parameters().size();
    return id < n ? svo.parameters()[id] : background.texels[id - n];
  }
  double parameter(size_t id) const {
    const size_t n = svo.parameters().size();
    return id < n ? svo.parameters()[id] : background.texels[id - n];
  }
};

inline constexpr int kDefaultShBands = 3;
inline constexpr int kDefaultCubeResolution = 32;

/// Full octree of the given depth inside the smallest cube enclosing `aabb`
/// (centred on the box). All plane samples and texels are zero.
SceneModel create_dense_grid(const Aabb& aabb, int depth, int sh_bands = kDefaultShBands,
                             int cube_resolution = kDefaultCubeResolution, size_t node_budget = kDefaultNodeBudget);

/// Upper bound u for raw opacity draws such that a ray along the root-cube
/// diagonal, sampled with `samples_per_side` samples per leaf side, composites
/// at most `max_total_opacity`.
double initial_opacity_raw_bound(int depth, int samples_per_side = 8, double max_total_opacity = 0.05);

/// Randomizes a freshly created model into "grayish fog": opacity raw values
/// uniform in [kBorderOpacityRaw, u], SH band 0 in [0.2475, 0.5025], higher
/// bands in [-0.025, 0.025], texels in [0, 1], all plane gradients zero.
/// Draws are float32-representable. Deterministic in `seed`.
void init_random(SceneModel& model, uint64_t seed, int samples_per_side = 8);

/// Allocated node at `depth` containing `point`, or its deepest allocated
/// ancestor; nullopt when the point lies outside the root cube.
std::optional<int32_t> node_lookup(const Svo& svo, const Vec3& point, int depth);

}  // namespace xrf
