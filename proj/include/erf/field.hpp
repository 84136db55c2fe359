#pragma once

// Continuous 4D (position + level of detail) evaluation of the octree fields.
// A query blends two dual-grid trilinear stencils of local planes: one at the
// finest Nyquist-admissible depth and one at the next coarser depth.

#include "erf/scene_model.hpp"

#include <array>
#include <optional>
#include <vector>

namespace xrf {

struct Query4D {
  Vec3 pos = Vec3::Zero();
  double footprint = 1.0;  // back-projected pixel diameter, world units
};

struct DepthSelection {
  int fine_depth = 0;
  double lod_weight = 0.0;  // blend factor toward fine_depth - 1
};

/// Deepest depth whose node side is >= footprint, ignoring allocation.
int nyquist_depth(const Svo& svo, double footprint);

/// Shallowest depth whose side is <= footprint, clamped to the deepest
/// allocated node containing q.pos, with the linear blend weight
/// (footprint - side) / side toward the next coarser level.
DepthSelection select_depths(const Svo& svo, const Query4D& q);

struct StencilEntry {
  int32_t node = Svo::kNone;  // kNone selects the border plane
  double weight = 0.0;
  Vec3 offset = Vec3::Zero();  // query position minus node centre
};

/// The 16-node neighbourhood of a query with its combined weights.
/// Entries [0, 8) belong to fine_depth, [8, 16) to fine_depth - 1.
/// At fine_depth 0 only the first 8 entries are used.
struct Stencil {
  std::array<StencilEntry, 16> entries;
  int size = 0;
  DepthSelection depths;
};

/// Caches the node ids of the most recent dual-grid cells per depth, so
/// consecutive queries along a ray reuse hash lookups.
class StencilBuilder {
 public:
  explicit StencilBuilder(const Svo& svo) : svo_(svo) {}
  void build(const Query4D& q, Stencil& out);
  void build(const Query4D& q, const DepthSelection& sel, Stencil& out);

 private:
  struct CellCache {
    int depth = -1;
    GridCoord base{};
    std::array<int32_t, 8> nodes{};
  };
  const std::array<int32_t, 8>& cell_nodes(int depth, const GridCoord& base);
  void add_level(const Vec3& pos, int depth, double scale, StencilEntry* out);

  const Svo& svo_;
  std::array<CellCache, 2> cache_{};
  int next_slot_ = 0;
};

Stencil make_stencil(const Svo& svo, const Query4D& q);

enum class FieldKind { Opacity, Sh };

/// Raw interpolated opacity through a prepared stencil.
double interp_opacity(const Svo& svo, const Stencil& s);
/// Raw interpolated SH coefficients (sh_dim values) through a prepared stencil.
void interp_sh(const Svo& svo, const Stencil& s, double* out);

/// Raw interpolated field: 1 value for opacity, 3 * bands^2 for SH.
std::vector<double> interp4d(const Svo& svo, const Query4D& q, FieldKind field);

/// Sum of all stencil weights, border entries included.
double stencil_weight_sum(const Stencil& s);

double eval_opacity(const Svo& svo, const Query4D& q);

/// Per-channel raw radiance sum_k Y_k(dir) * coeff from interpolated coefficients.
Rgb radiance_raw(const Svo& svo, const double* coeffs, const Vec3& dir, double* basis_scratch = nullptr);

/// LiLU-constrained SH radiance leaving q.pos in direction dir.
Rgb eval_radiance(const Svo& svo, const Query4D& q, const Vec3& dir);

/// Analytic spatial gradient of the interpolated raw opacity.
Vec3 opacity_gradient(const Svo& svo, const Query4D& q);

/// Surface normal -grad / |grad|, or nullopt when |grad| < 1e-12.
std::optional<Vec3> eval_normal(const Svo& svo, const Query4D& q);

/// Single-level evaluation of the raw fields at depth d (no LoD blending).
/// Writes 1 + sh_dim values (opacity first) and their spatial gradients
/// (3 x (1 + sh_dim), row-major per axis) when grad_out is non-null.
void eval_level(const Svo& svo, const Vec3& pos, int depth, double* value_out, double* grad_out);

}  // namespace xrf
