#pragma once

// Reverse-mode gradients of the batch objective (mean photo loss plus priors)
// from a recorded forward tape, and a finite-difference oracle that replays
// the same tape.

#include "erf/dataset.hpp"
#include "erf/objective.hpp"
#include "erf/render.hpp"
#include "erf/sampling.hpp"

#include <vector>

namespace xrf {

struct ObjectiveConfig {
  RenderConfig render;
  double lambda = kDefaultPriorLambda;
  double huber_delta = kDefaultHuberDelta;
};

/// Everything the backward pass and the replay need: retained samples with
/// their stencils, background taps, targets and the prior batch.
struct Tape {
  uint64_t revision = 0;
  uint64_t structure_revision = 0;
  size_t parameter_count = 0;
  ObjectiveConfig config;
  std::vector<RayTrace> rays;
  std::vector<Rgb> targets;
  PriorBatch priors;
  std::vector<double> pixel_losses;  // per ray, max over channels of squared error
  double photo = 0.0;                // mean photo loss
  double prior = 0.0;
  double objective() const { return photo + prior; }
};

/// Ray + target pairs for the forward pass.
struct RayTask {
  Ray ray;
  Rgb target = Rgb::Zero();
  uint64_t seed = 0;
};

std::vector<RayTask> make_ray_tasks(const Dataset& data, const PixelBatch& batch, const Aabb& aabb, uint64_t seed);

/// Records the forward pass of a ray batch plus a prior batch.
Tape forward(const SceneModel& model, const std::vector<RayTask>& tasks, const PriorBatch& priors,
             const ObjectiveConfig& config);

/// Sparse gradient: strictly increasing global parameter ids with non-zero values.
struct GradientSet {
  std::vector<size_t> index;
  std::vector<double> value;
  size_t size() const { return index.size(); }
  bool empty() const { return index.empty(); }
  double get(size_t id) const;
};

/// Reusable per-thread dense accumulators.
class GradWorkspace {
 public:
  struct Slot {
    std::vector<double> dense;
    std::vector<uint8_t> node_mark;
    std::vector<int32_t> nodes;
    std::vector<uint8_t> texel_mark;
    std::vector<size_t> texels;
  };
  std::vector<Slot>& slots(int threads, size_t params, size_t nodes, size_t texels);

 private:
  std::vector<Slot> slots_;
};

/// Analytic gradient of the taped objective. Throws InvalidArgument when the
/// model changed since the tape was recorded.
GradientSet backward(const SceneModel& model, const Tape& tape, GradWorkspace* workspace = nullptr);

/// Objective recomputed from the tape's recorded decisions with the current
/// parameters (samples, stencils, taps and prior points are held fixed).
double replay_objective(const SceneModel& model, const Tape& tape);

/// Global ids of every parameter the tape reads.
std::vector<size_t> touched_parameters(const SceneModel& model, const Tape& tape);

/// Parameters within margin of a LiLU border, a sensor clamp bound or a Huber
/// kink at the taped state; finite differences are not meaningful there.
std::vector<size_t> kink_parameters(const SceneModel& model, const Tape& tape, double margin);

struct FdEntry {
  size_t parameter = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  bool nonsmooth = false;
  bool truncation_dominated = false;
  bool passed = false;
};

struct FdReport {
  std::vector<FdEntry> entries;
  size_t checked = 0;
  size_t failures = 0;
  size_t nonsmooth = 0;
  size_t truncation_dominated = 0;
  double max_rel_error = 0.0;  // over smooth entries above 100x the absolute tolerance
  bool ok() const { return failures == 0; }
};

struct FdOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  double abs_tolerance = -1.0;  // negative: 10 h^2
  size_t max_parameters = 0;  // 0: all touched parameters
  uint64_t seed = 0;          // subset selection
};

/// Central differences (L(p + h) - L(p - h)) / 2h on the replayed objective
/// versus the analytic gradient. The model is restored before returning.
FdReport finite_difference_check(SceneModel& model, const Tape& tape, const FdOptions& options);

struct GradCheckConfig {
  int depth = 2;
  size_t rays = 16;
  size_t max_samples = 32;
  size_t prior_batch = 256;
  RenderMode mode = RenderMode::Opacity;
  SensorMode sensor = SensorMode::Identity;
  double lambda = kDefaultPriorLambda;
  uint64_t seed = 0;
};

/// Dense model over the dataset bounds with every parameter randomized
/// (opacity and radiance planes including their gradients, and texels).
SceneModel make_gradcheck_model(const Aabb& aabb, int depth, int sh_bands, uint64_t seed);

/// Forward tape for `config.rays` uniformly drawn level-0 training pixels whose
/// rays hit the box, plus a prior batch.
Tape make_gradcheck_tape(const SceneModel& model, const Dataset& data, const GradCheckConfig& config);

}  // namespace xrf
