#pragma once

// Structure adaptation between optimization rounds: hysteresis search for
// required nodes, merging of free-space sibling groups, and Nyquist-gated
// subdivision with smooth child initialization.

#include "erf/optimize.hpp"

#include <vector>

namespace xrf {

struct RequiredConfig {
  double seed_threshold = 0.75;
  double expand_threshold = 0.075;
  int probe_resolution = 8;  // probes per axis inside each node
};

/// Maximum constrained opacity of each node over a cell-centred probe grid,
/// evaluated on the node's own level field.
std::vector<double> probe_max_opacity(const Svo& svo, int probe_resolution = 8);

/// Per level, on the 26-connected same-depth graph: breadth-first searches
/// seeded at nodes with max opacity >= seed, expanding into nodes with max
/// opacity >= expand, then a one-ring dilation. Returns a node mask.
std::vector<uint8_t> required_nodes(const Svo& svo, const RequiredConfig& config = {});
std::vector<uint8_t> required_from_probes(const Svo& svo, const std::vector<double>& max_opacity,
                                          const RequiredConfig& config = {});

/// Bottom-up removal of sibling groups with no required member and no
/// surviving children. Survivor parameters are unchanged. Returns the new id
/// of every old node (Svo::kNone if removed).
std::vector<int32_t> merge(Svo& svo, const std::vector<uint8_t>& required);

struct SubdivideResult {
  bool changed = false;
  size_t subdivided = 0;
  size_t skipped_budget = 0;
};

/// True when some camera sees point p inside its image with a level-0
/// footprint no larger than `side`.
bool nyquist_allows(const std::vector<Camera>& cameras, const Vec3& p, double side);

/// Subdivides required leaves that pass the Nyquist gate for the child level.
/// Children get the parent-level field value and analytic gradient at their
/// centres. Candidates are processed in descending max opacity until the
/// node budget is exhausted.
SubdivideResult subdivide(Svo& svo, const std::vector<uint8_t>& required, const std::vector<Camera>& cameras,
                          size_t node_budget = kDefaultNodeBudget, const std::vector<double>* max_opacity = nullptr);

struct PhaseResult {
  bool done = false;
  size_t nodes_before = 0;
  size_t nodes_after_merge = 0;
  size_t nodes_after_subdivide = 0;
  size_t required = 0;
};

/// Merge then subdivide. Resets the optimizer whenever the tree changed;
/// done is true when subdivision added nothing.
PhaseResult structure_phase(SceneModel& model, OptState& opt, const Dataset& data, const TrainConfig& config);

struct PhaseReport {
  int phase = 0;
  uint64_t iteration = 0;  // global iterations completed
  TrainStats stats;
  PhaseResult structure;
  bool structure_ran = false;
};

using PhaseCallback = std::function<void(const SceneModel&, const PhaseReport&)>;

/// Alternates optimization rounds of config.iterations_per_phase steps with
/// structure phases, until subdivision adds nothing, config.max_phases rounds
/// ran, or `total_iterations` steps were taken. `on_phase` runs after every
/// optimization round and again after its structure phase.
std::vector<PhaseReport> train_coarse_to_fine(SceneModel& model, OptState& opt, const Dataset& data,
                                              const TrainConfig& config, size_t total_iterations, TrainContext& context,
                                              const IterationCallback& on_iteration = {},
                                              const PhaseCallback& on_phase = {});

}  // namespace xrf
