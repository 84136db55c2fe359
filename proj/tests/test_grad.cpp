#include "erf/grad.hpp"
#include "erf/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace xrf;

namespace {

const Dataset& small_data() {
  static const Dataset data = [] {
    SyntheticOptions so;
    so.resolution = 16;
    so.n_train = 3;
    so.n_test = 0;
    so.supersample = 1;
    return make_synthetic_scene(so).data;
  }();
  return data;
}

GradCheckConfig small_config(RenderMode mode = RenderMode::Opacity, SensorMode sensor = SensorMode::Identity) {
  GradCheckConfig gc;
  gc.depth = 1;
  gc.rays = 6;
  gc.max_samples = 24;
  gc.prior_batch = 64;
  gc.mode = mode;
  gc.sensor = sensor;
  gc.seed = 2;
  return gc;
}

}  // namespace

class GradCheck : public ::testing::TestWithParam<std::tuple<RenderMode, SensorMode>> {};

TEST_P(GradCheck, AnalyticMatchesCentralDifferences) {
  const auto [mode, sensor] = GetParam();
  const GradCheckConfig gc = small_config(mode, sensor);
  SceneModel model = make_gradcheck_model(small_data().aabb, gc.depth, 2, 5);
  const Tape tape = make_gradcheck_tape(model, small_data(), gc);
  const std::vector<double> params = model.svo.parameters();
  const FdReport r = finite_difference_check(model, tape, FdOptions{});
  EXPECT_GT(r.checked, 100u);
  EXPECT_EQ(r.failures, 0u) << "max rel " << r.max_rel_error;
  EXPECT_LT(r.nonsmooth, r.checked / 2);
  EXPECT_EQ(model.svo.parameters(), params);  // restored
}

INSTANTIATE_TEST_SUITE_P(Modes, GradCheck,
                         ::testing::Values(std::make_tuple(RenderMode::Opacity, SensorMode::Identity),
                                           std::make_tuple(RenderMode::Opacity, SensorMode::Gamma),
                                           std::make_tuple(RenderMode::ExpSoftplus, SensorMode::Identity),
                                           std::make_tuple(RenderMode::ExpLilu, SensorMode::Identity)));

TEST(Grad, TransparentModelOnlyTouchesTexels) {
  GradCheckConfig gc = small_config();
  gc.lambda = 0.0;
  SceneModel model = create_dense_grid(small_data().aabb, 2, 2, 4);
  Rng rng(1);
  for (size_t n = 0; n < model.svo.node_count(); ++n) {
    auto p = model.svo.node_params(static_cast<int32_t>(n));
    p[0] = -20.0;  // tanh01 is exactly 0 here
    for (size_t k = 4; k < p.size(); ++k) p[k] = rng.uniform(-1.0, 1.0);
  }
  for (double& t : model.background.texels) t = rng.uniform();
  const Tape tape = make_gradcheck_tape(model, small_data(), gc);
  const GradientSet g = backward(model, tape);
  const size_t svo_params = model.svo_parameter_count();
  const auto stride = static_cast<size_t>(model.svo.stride());
  size_t texels = 0;
  for (size_t i = 0; i < g.size(); ++i) {
    if (g.index[i] >= svo_params) {
      ++texels;
      continue;
    }
    EXPECT_LT(g.index[i] % stride, 4u) << "radiance parameter touched";
    EXPECT_LT(std::abs(g.value[i]), 1e-30);
  }
  EXPECT_GT(texels, 0u);
  EXPECT_LE(texels, gc.rays * 4 * 3);
}

TEST(Grad, SparseSetIsSortedAndNonZero) {
  const GradCheckConfig gc = small_config();
  SceneModel model = make_gradcheck_model(small_data().aabb, 1, 2, 3);
  const GradientSet g = backward(model, make_gradcheck_tape(model, small_data(), gc));
  ASSERT_FALSE(g.empty());
  for (size_t i = 0; i < g.size(); ++i) {
    EXPECT_NE(g.value[i], 0.0);
    if (i) EXPECT_LT(g.index[i - 1], g.index[i]);
    EXPECT_EQ(g.get(g.index[i]), g.value[i]);
  }
  EXPECT_EQ(g.get(model.parameter_count() + 10), 0.0);
}

TEST(Grad, Deterministic) {
  const GradCheckConfig gc = small_config();
  SceneModel model = make_gradcheck_model(small_data().aabb, 1, 2, 3);
  const Tape tape = make_gradcheck_tape(model, small_data(), gc);
  const GradientSet a = backward(model, tape);
  GradWorkspace ws;
  const GradientSet b = backward(model, tape, &ws);
  const GradientSet c = backward(model, tape, &ws);
  EXPECT_EQ(a.index, b.index);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(b.value, c.value);
}

TEST(Grad, PriorGradientIsLinearInLambda) {
  GradCheckConfig gc = small_config();
  SceneModel model = make_gradcheck_model(small_data().aabb, 1, 2, 3);
  std::vector<GradientSet> g;
  for (double lambda : {0.0, 1e-3, 2e-3}) {
    gc.lambda = lambda;
    g.push_back(backward(model, make_gradcheck_tape(model, small_data(), gc)));
  }
  for (size_t id = 0; id < model.parameter_count(); ++id) {
    const double d1 = g[1].get(id) - g[0].get(id);
    const double d2 = g[2].get(id) - g[1].get(id);
    EXPECT_NEAR(d1, d2, 1e-12 * (1.0 + std::abs(g[2].get(id)))) << id;
  }
}

TEST(Grad, ReplayMatchesForwardObjective) {
  const GradCheckConfig gc = small_config();
  SceneModel model = make_gradcheck_model(small_data().aabb, 1, 2, 3);
  const Tape tape = make_gradcheck_tape(model, small_data(), gc);
  EXPECT_NEAR(replay_objective(model, tape), tape.objective(), 1e-12 * std::abs(tape.objective()));
}

TEST(Grad, StaleTapeThrows) {
  const GradCheckConfig gc = small_config();
  SceneModel model = make_gradcheck_model(small_data().aabb, 1, 2, 3);
  const Tape tape = make_gradcheck_tape(model, small_data(), gc);
  ++model.revision;
  EXPECT_THROW(backward(model, tape), InvalidArgument);
}

TEST(Grad, CoarseStepIsFlaggedAsTruncation) {
  const GradCheckConfig gc = small_config();
  SceneModel model = make_gradcheck_model(small_data().aabb, 1, 2, 3);
  const Tape tape = make_gradcheck_tape(model, small_data(), gc);
  FdOptions fo;
  // A tolerance far below the O(h^2) truncation error of this step.
  fo.h = 1e-3;
  fo.tolerance = 1e-9;
  fo.abs_tolerance = 1e-15;
  const FdReport r = finite_difference_check(model, tape, fo);
  EXPECT_GT(r.failures, 0u);
  EXPECT_GT(r.truncation_dominated, 0u);
  for (const FdEntry& e : r.entries)
    if (e.truncation_dominated) EXPECT_FALSE(e.passed);
}

TEST(Grad, TouchedParametersCoverGradient) {
  const GradCheckConfig gc = small_config();
  SceneModel model = make_gradcheck_model(small_data().aabb, 1, 2, 3);
  const Tape tape = make_gradcheck_tape(model, small_data(), gc);
  const auto touched = touched_parameters(model, tape);
  const GradientSet g = backward(model, tape);
  for (size_t id : g.index) EXPECT_TRUE(std::binary_search(touched.begin(), touched.end(), id)) << id;
}
