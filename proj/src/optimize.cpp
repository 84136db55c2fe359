#include "erf/optimize.hpp"

#include <cmath>

namespace xrf {

OptState make_opt_state(size_t parameter_count, double lr) {
  OptState opt;
  opt.lr = lr;
  reset_optimizer(opt, parameter_count);
  return opt;
}

void reset_optimizer(OptState& opt, size_t new_parameter_count) {
  opt.step = 0;
  opt.m.assign(new_parameter_count, 0.0);
  opt.v.assign(new_parameter_count, 0.0);
}

void adam_step(SceneModel& model, OptState& opt, const GradientSet& grads) {
  const size_t n = model.parameter_count();
  if (opt.m.size() != n || opt.v.size() != n) throw InvalidArgument("adam_step: optimizer state does not match model");
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (size_t k = 0; k < grads.index.size(); ++k) {
    const double g = grads.value[k];
    if (g == 0.0) continue;
    const size_t i = grads.index[k];
    if (i >= n) throw InvalidArgument("adam_step: gradient id out of range");
    double& m = opt.m[i];
    double& v = opt.v[i];
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
    const double mhat = m / c1;
    const double vhat = v / c2;
    double& p = model.parameter(i);
    p -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    if (!std::isfinite(p)) throw NumericalError("adam_step: non-finite parameter");
  }
  ++model.revision;
}

TrainContext make_train_context(const Dataset& data, const TrainConfig& config) {
  TrainContext ctx;
  ctx.cache = LossCache::for_split(data, Split::Train, config.cache);
  return ctx;
}

double TrainStats::mean_photo(size_t first, size_t last) const {
  last = std::min(last, iterations.size());
  if (first >= last) return 0.0;
  double s = 0.0;
  for (size_t i = first; i < last; ++i) s += iterations[i].photo;
  return s / static_cast<double>(last - first);
}

TrainStats train_epoch(SceneModel& model, OptState& opt, const Dataset& data, const TrainConfig& config,
                       size_t iterations, TrainContext& context, const IterationCallback& callback) {
  TrainStats stats;
  if (iterations == 0) return stats;
  if (context.cache.empty()) throw DataError("train_epoch: no training images");
  if (opt.m.size() != model.parameter_count()) reset_optimizer(opt, model.parameter_count());
  stats.iterations.reserve(iterations);
  for (size_t it = 0; it < iterations; ++it) {
    const uint64_t seed = stream_seed(config.seed, context.iteration);
    Rng rng(seed);
    const PixelBatch batch =
        sample_pixels(context.cache, data, model.svo, model.aabb, config.batch_size, rng, config.max_mip_level);
    const std::vector<RayTask> tasks = make_ray_tasks(data, batch, model.aabb, seed);
    const PriorBatch priors = sample_prior_batch(model, config.prior_batch_size, rng);
    const Tape tape = forward(model, tasks, priors, config.objective);
    const GradientSet grads = backward(model, tape, &context.workspace);
    opt.lr = config.lr * std::pow(config.lr_decay, static_cast<double>(it) / static_cast<double>(iterations));
    adam_step(model, opt, grads);
    update_cache(context.cache, batch, tape.pixel_losses);
    IterationStats s;
    s.iteration = context.iteration;
    s.photo = tape.photo;
    s.prior = tape.prior;
    s.nodes = model.svo.node_count();
    s.lr = opt.lr;
    stats.iterations.push_back(s);
    if (callback) callback(s);
    ++context.iteration;
  }
  return stats;
}

}  // namespace xrf
