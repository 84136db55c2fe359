#pragma once

// Sparse Adam and the inner optimization loop.

#include "erf/grad.hpp"

#include <functional>
#include <vector>

namespace xrf {

struct OptState {
  uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptState make_opt_state(size_t parameter_count, double lr = 5e-3);

/// Zeroes the moments and the step counter for a (possibly resized)
/// parameter vector; hyperparameters are kept.
void reset_optimizer(OptState& opt, size_t new_parameter_count);

/// Bias-corrected Adam on the parameters present in `grads` (lazy update:
/// absent or zero entries leave parameter, m and v unchanged). Bumps the
/// global step and the model revision.
void adam_step(SceneModel& model, OptState& opt, const GradientSet& grads);

struct TrainConfig {
  ObjectiveConfig objective;
  size_t batch_size = 4096;
  size_t prior_batch_size = 4096;
  double lr = 5e-3;
  double lr_decay = 0.1;  // total decay factor over one train_epoch call
  LossCacheConfig cache;
  int max_mip_level = -1;
  uint64_t seed = 0;
  // Structure adaptation.
  double seed_threshold = 0.75;
  double expand_threshold = 0.075;
  size_t node_budget = kDefaultNodeBudget;
  int initial_depth = 4;
  int max_phases = 8;
  size_t iterations_per_phase = 5000;
  size_t stats_interval = 100;
};

/// Cross-iteration state of the inner loop.
struct TrainContext {
  LossCache cache;
  GradWorkspace workspace;
  uint64_t iteration = 0;  // global iteration counter, drives the RNG streams
};

TrainContext make_train_context(const Dataset& data, const TrainConfig& config);

struct IterationStats {
  uint64_t iteration = 0;
  double photo = 0.0;
  double prior = 0.0;
  size_t nodes = 0;
  double lr = 0.0;
};

struct TrainStats {
  std::vector<IterationStats> iterations;
  double mean_photo(size_t first, size_t last) const;
};

using IterationCallback = std::function<void(const IterationStats&)>;

/// Runs `iterations` steps of: pixel sampling, forward, backward, Adam,
/// loss-cache update. The learning rate decays exponentially from config.lr
/// by config.lr_decay over the call.
TrainStats train_epoch(SceneModel& model, OptState& opt, const Dataset& data, const TrainConfig& config,
                       size_t iterations, TrainContext& context, const IterationCallback& callback = {});

}  // namespace xrf
