#include "erf/objective.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace xrf {
namespace {

TEST(PhotoLoss, Examples) {
  EXPECT_EQ(photo_loss(Rgb(0.2, 0.3, 0.4), Rgb(0.2, 0.3, 0.4)), 0.0);
  EXPECT_EQ(photo_loss(Rgb(1, 0, 0), Rgb(0, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(photo_loss(Rgb(0.5, 0.5, 0.5), Rgb(0, 1, 0)), 0.75);
}

TEST(Huber, PiecewiseAndDerivative) {
  EXPECT_DOUBLE_EQ(huber(0.05, 0.1), 0.00125);
  EXPECT_DOUBLE_EQ(huber(-0.3, 0.1), 0.1 * (0.3 - 0.05));
  EXPECT_DOUBLE_EQ(huber(0.1, 0.1), 0.005);
  EXPECT_EQ(huber_derivative(0.05, 0.1), 0.05);
  EXPECT_EQ(huber_derivative(-2.0, 0.1), -0.1);
  for (double x : {-0.7, -0.09, 0.02, 0.3}) {
    const double h = 1e-7;
    EXPECT_NEAR(huber_derivative(x, 0.1), (huber(x + h, 0.1) - huber(x - h, 0.1)) / (2 * h), 1e-8);
  }
}

SceneModel small_model() {
  Aabb b;
  b.min = Vec3::Constant(-1);
  b.max = Vec3::Constant(1);
  return create_dense_grid(b, 1, 1, 2);
}

TEST(Priors, AllZeroFieldHasNoPrior) {
  const SceneModel m = small_model();
  Rng rng(1);
  const PriorBatch batch = sample_prior_batch(m, 64, rng);
  EXPECT_EQ(prior_losses(m, batch, 1.0), 0.0);
}

TEST(Priors, ConstantFieldOnlyAttractsToZero) {
  SceneModel m = small_model();
  const double c = 0.04;
  for (double& p : m.svo.parameters()) p = 0.0;
  for (size_t n = 0; n < m.svo.node_count(); ++n) {
    auto p = m.svo.node_params(static_cast<int32_t>(n));
    p[0] = c;
    for (int j = 0; j < m.svo.sh_dim(); ++j) p[static_cast<size_t>(4 + j)] = c;
  }
  for (double& t : m.background.texels) t = c;
  Rng rng(2);
  const PriorBatch batch = sample_prior_batch(m, 100, rng);
  const double lambda = 0.5;
  // Four node components and three texel channels each contribute Huber(c).
  EXPECT_NEAR(prior_losses(m, batch, lambda), lambda * (4 + 3) * huber(c), 1e-15);
}

TEST(Priors, TwoNodeBatchByHand) {
  SceneModel m = small_model();
  Svo& svo = m.svo;
  // Root (0) and child 0 (id 1) carry opacity planes; SH stays zero.
  svo.node_params(0)[0] = 0.3;
  svo.node_params(0)[1] = 0.2;
  svo.node_params(1)[0] = 0.05;
  svo.node_params(1)[3] = -0.4;
  svo.node_params(2)[0] = 0.25;  // +x face neighbour of child 0
  PriorBatch batch;
  const Vec3 p(-0.6, -0.3, -0.2);
  batch.nodes.push_back({0, p});
  batch.nodes.push_back({1, p});
  const double d = 0.1;
  const double root_v = 0.3 + 0.2 * p.x();
  const Vec3 c1 = svo.center(1);
  const double child_v = 0.05 - 0.4 * (p.z() - c1.z());
  // Root: partner child 0, no face neighbours; zero attractor on its plane.
  const double root_term = huber(root_v - child_v, d) + huber(root_v, d);
  // Child 0: face neighbours 2 (+x), 3 (+y), 5 (+z); partner the root.
  const double child_term = huber(0.05 - 0.25, d) + huber(0.05, d) + huber(0.05, d) + huber(child_v - root_v, d) +
                            huber(child_v, d);
  EXPECT_NEAR(node_prior_term(svo, batch.nodes[0], d), root_term, 1e-15);
  EXPECT_NEAR(node_prior_term(svo, batch.nodes[1], d), child_term, 1e-15);
  EXPECT_NEAR(prior_losses(m, batch, 2.0, d), 2.0 * 0.5 * (root_term + child_term), 1e-15);
}

TEST(Priors, NeighbourhoodHelpers) {
  const SceneModel m = small_model();
  EXPECT_TRUE(face_neighbours(m.svo, 0).empty());
  EXPECT_EQ(face_neighbours(m.svo, 1).size(), 3u);
  EXPECT_EQ(level_partner(m.svo, 0, Vec3(0.5, -0.5, 0.5)), m.svo.child(0, 5));
  EXPECT_EQ(level_partner(m.svo, 4, Vec3::Zero()), 0);
  const CubeMap cube(3);
  auto nb = texel_neighbours(cube, 0);
  EXPECT_EQ(nb[0], 1);
  EXPECT_EQ(nb[1], 3);
  nb = texel_neighbours(cube, 8);
  EXPECT_EQ(nb[0], -1);
  EXPECT_EQ(nb[1], -1);
  nb = texel_neighbours(cube, 9 + 2);  // face 1, row 0, col 2
  EXPECT_EQ(nb[0], -1);
  EXPECT_EQ(nb[1], 14);
}

TEST(Priors, BatchSplitFollowsCounts) {
  const SceneModel m = small_model();  // 9 nodes, 24 texels
  Rng rng(3);
  const PriorBatch b = sample_prior_batch(m, 330, rng);
  EXPECT_EQ(b.nodes.size(), 90u);
  EXPECT_EQ(b.texels.size(), 240u);
  for (const auto& e : b.nodes) {
    const double half = 0.5 * m.svo.side(m.svo.info(e.node).depth);
    EXPECT_LE((e.point - m.svo.center(e.node)).cwiseAbs().maxCoeff(), half);
  }
  EXPECT_TRUE(sample_prior_batch(m, 0, rng).nodes.empty());
}

}  // namespace
}  // namespace xrf
