#pragma once

// Loss terms: squared photo consistency, and Huber priors on the octree planes
// (same-level smoothness, cross-level smoothness, zero attractor) and on the
// background texels (in-face smoothness, zero attractor).

#include "erf/rng.hpp"
#include "erf/scene_model.hpp"

#include <vector>

namespace xrf {

inline constexpr double kDefaultHuberDelta = 0.1;
inline constexpr double kDefaultPriorLambda = 1e-3;

/// Sum over channels of squared differences.
double photo_loss(const Rgb& predicted, const Rgb& target);

/// 0.5 x^2 for |x| <= delta, delta (|x| - 0.5 delta) beyond.
double huber(double x, double delta = kDefaultHuberDelta);
double huber_derivative(double x, double delta = kDefaultHuberDelta);

struct NodePriorEntry {
  int32_t node = 0;
  Vec3 point = Vec3::Zero();  // random point inside the node cell
};

struct PriorBatch {
  std::vector<NodePriorEntry> nodes;
  std::vector<size_t> texels;  // texel ids (index into CubeMap texels / 3)
};

/// Splits `size` between nodes and texels in proportion to their counts and
/// draws both uniformly with replacement.
PriorBatch sample_prior_batch(const SceneModel& model, size_t size, Rng& rng);

/// Plane of `node` evaluated at `x` for field component j (0 = opacity,
/// 1 + k = SH coefficient k).
double plane_value(const Svo& svo, int32_t node, int component, const Vec3& x);

/// Same-depth face neighbours of a node (allocated ones only).
std::vector<int32_t> face_neighbours(const Svo& svo, int32_t node);

/// Partner plane for the cross-level term: the child containing `point` when
/// the node has children, else the parent; kNone for a childless root.
int32_t level_partner(const Svo& svo, int32_t node, const Vec3& point);

/// Unscaled prior sum of one node entry over all field components.
double node_prior_term(const Svo& svo, const NodePriorEntry& e, double delta);

/// Unscaled prior sum of one texel over its three channels.
double texel_prior_term(const CubeMap& cube, size_t texel, double delta);

/// In-face right and lower neighbours of a texel (absent at the face edge).
std::array<int64_t, 2> texel_neighbours(const CubeMap& cube, size_t texel);

/// lambda * (mean node term + mean texel term).
double prior_losses(const SceneModel& model, const PriorBatch& batch, double lambda,
                    double delta = kDefaultHuberDelta);

}  // namespace xrf
