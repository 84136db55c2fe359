#include "erf/constraints.hpp"
#include "erf/render.hpp"
#include "erf/scene_model.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace xrf {
namespace {

Aabb unit_box(double h = 1.0) {
  Aabb b;
  b.min = Vec3::Constant(-h);
  b.max = Vec3::Constant(h);
  return b;
}

TEST(Svo, LayoutArithmetic) {
  Svo svo(Vec3::Zero(), 1.0, 3);
  EXPECT_EQ(svo.sh_dim(), 27);
  EXPECT_EQ(svo.stride(), 4 + 4 * 27);
  EXPECT_EQ(svo.sh_f0_offset(), 4);
  EXPECT_EQ(svo.sh_grad_offset(0), 31);
  EXPECT_EQ(svo.sh_grad_offset(2), 85);
  EXPECT_EQ(Svo(Vec3::Zero(), 1.0, 1).stride(), 16);
}

TEST(Svo, BorderPlane) {
  Svo svo(Vec3::Zero(), 1.0, 2);
  const auto b = svo.border_plane();
  EXPECT_EQ(b[0], kBorderOpacityRaw);
  for (size_t i = 1; i < b.size(); ++i) EXPECT_EQ(b[i], 0.0);
  EXPECT_LT(tanh01(kBorderOpacityRaw), 1e-3);
}

TEST(Svo, RejectsBadConstruction) {
  EXPECT_THROW(Svo(Vec3::Zero(), 1.0, 0), InvalidArgument);
  EXPECT_THROW(Svo(Vec3::Zero(), 1.0, 5), InvalidArgument);
  EXPECT_THROW(Svo(Vec3::Zero(), -1.0, 3), InvalidArgument);
}

TEST(Svo, SubdivideAndFind) {
  Svo svo(Vec3::Zero(), 2.0, 1);
  svo.subdivide(0);
  EXPECT_EQ(svo.node_count(), 9u);
  EXPECT_EQ(svo.max_depth(), 1);
  for (int o = 0; o < 8; ++o) {
    const int32_t c = svo.child(0, o);
    EXPECT_EQ(svo.info(c).parent, 0);
    EXPECT_EQ(svo.find(1, svo.info(c).coord), c);
    for (double v : svo.node_params(c)) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(svo.center(svo.child(0, 7)), Vec3(1.5, 1.5, 1.5));
  EXPECT_EQ(svo.find(1, {2, 0, 0}), Svo::kNone);
  EXPECT_THROW(svo.subdivide(0), InvalidArgument);
}

TEST(Svo, CompactKeepsParametersAndReorders) {
  Svo svo(Vec3::Zero(), 1.0, 1);
  svo.subdivide(0);
  svo.subdivide(3);
  svo.subdivide(9);
  for (size_t n = 0; n < svo.node_count(); ++n) svo.node_params(static_cast<int32_t>(n))[0] = static_cast<double>(n);
  std::vector<uint8_t> keep(svo.node_count(), 1);
  for (int o = 0; o < 8; ++o) keep[static_cast<size_t>(svo.child(9, o))] = 0;
  const auto new_of_old = svo.compact(keep);
  EXPECT_EQ(svo.node_count(), 17u);
  for (size_t old = 0; old < new_of_old.size(); ++old) {
    if (new_of_old[old] == Svo::kNone) continue;
    EXPECT_EQ(svo.node_params(new_of_old[old])[0], static_cast<double>(old));
  }
  EXPECT_TRUE(svo.is_leaf(new_of_old[9]));
  std::vector<uint8_t> split(svo.node_count(), 1);
  split[1] = 0;
  EXPECT_THROW(svo.compact(split), InvalidArgument);
}

TEST(DenseGrid, NodeCountsAndRoot) {
  for (int d = 1; d <= 3; ++d) {
    const SceneModel m = create_dense_grid(unit_box(), d, 3, 8);
    EXPECT_EQ(m.svo.node_count(), full_tree_node_count(d));
    EXPECT_EQ(m.svo.max_depth(), d);
    EXPECT_EQ(m.background.texels.size(), 6u * 8 * 8 * 3);
  }
  EXPECT_EQ(full_tree_node_count(2), 73u);
  Aabb box;
  box.min = Vec3(0, 0, 0);
  box.max = Vec3(1, 2, 1);
  const SceneModel m = create_dense_grid(box, 1, 1, 2);
  EXPECT_DOUBLE_EQ(m.svo.root_side(), 2.0);
  EXPECT_TRUE(m.svo.root_center().isApprox(Vec3(0.5, 1.0, 0.5)));
}

TEST(DenseGrid, Errors) {
  EXPECT_THROW(create_dense_grid(unit_box(), 0), InvalidArgument);
  EXPECT_THROW(create_dense_grid(unit_box(), 4, 1, 2, 100), InvalidArgument);
  Aabb bad;
  bad.min = Vec3::Ones();
  bad.max = Vec3::Zero();
  EXPECT_THROW(create_dense_grid(bad, 1), InvalidArgument);
}

TEST(InitRandom, RangesAndDeterminism) {
  SceneModel a = create_dense_grid(unit_box(), 2, 3, 4);
  SceneModel b = create_dense_grid(unit_box(), 2, 3, 4);
  init_random(a, 42);
  init_random(b, 42);
  EXPECT_EQ(a.svo.parameters(), b.svo.parameters());
  EXPECT_EQ(a.background.texels, b.background.texels);
  const double upper = initial_opacity_raw_bound(2);
  const Svo& svo = a.svo;
  for (size_t n = 0; n < svo.node_count(); ++n) {
    const auto p = svo.node_params(static_cast<int32_t>(n));
    EXPECT_GE(p[0], std::min(kBorderOpacityRaw, upper));
    EXPECT_LE(p[0], upper);
    for (int i = 1; i < 4; ++i) EXPECT_EQ(p[static_cast<size_t>(i)], 0.0);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 9; ++k) {
        const double v = p[static_cast<size_t>(4 + c * 9 + k)];
        if (k == 0) {
          EXPECT_GE(v, 0.2475);
          EXPECT_LE(v, 0.5025);
        } else {
          EXPECT_LE(std::abs(v), 0.025);
        }
        EXPECT_EQ(static_cast<double>(static_cast<float>(v)), v);
      }
    for (size_t i = static_cast<size_t>(svo.sh_grad_offset(0)); i < p.size(); ++i) EXPECT_EQ(p[i], 0.0);
  }
  for (double t : a.background.texels) {
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
  }
  SceneModel c = create_dense_grid(unit_box(), 2, 3, 4);
  init_random(c, 43);
  EXPECT_NE(a.svo.parameters(), c.svo.parameters());
}

TEST(InitRandom, DiagonalOpacityBound) {
  // Worst case: every node at the upper bound; a ray along the root diagonal.
  for (int depth : {1, 2, 3}) {
    SceneModel m = create_dense_grid(unit_box(), depth, 1, 2);
    const double u = initial_opacity_raw_bound(depth);
    for (size_t n = 0; n < m.svo.node_count(); ++n) m.svo.node_params(static_cast<int32_t>(n))[0] = u;
    RenderConfig rc;
    rc.filter = false;
    rc.max_samples = 100000;
    Ray ray;
    ray.origin = Vec3::Constant(-1.0);
    ray.dir = Vec3::Ones().normalized();
    ray.t_near = 0.0;
    ray.t_far = std::sqrt(12.0);
    ray.footprint_slope = 0.0;
    RayTrace tr;
    trace_ray(m, ray, rc, 1, tr);
    EXPECT_GT(tr.samples.size(), 0u);
    EXPECT_LE(tr.composite.opacity, 0.05) << "depth " << depth;
  }
}

TEST(NodeLookup, FindsDeepestContainingNode) {
  SceneModel m = create_dense_grid(unit_box(), 2, 1, 2);
  const Vec3 p(0.3, -0.7, 0.9);
  const auto n = node_lookup(m.svo, p, 2);
  ASSERT_TRUE(n);
  EXPECT_EQ(m.svo.info(*n).depth, 2);
  EXPECT_TRUE(((m.svo.center(*n) - p).cwiseAbs().array() <= 0.25 + 1e-12).all());
  const auto deep = node_lookup(m.svo, p, 7);
  ASSERT_TRUE(deep);
  EXPECT_EQ(*deep, *n);
  EXPECT_EQ(*node_lookup(m.svo, p, 0), 0);
  EXPECT_FALSE(node_lookup(m.svo, Vec3(1.5, 0, 0), 2));
}

}  // namespace
}  // namespace xrf
