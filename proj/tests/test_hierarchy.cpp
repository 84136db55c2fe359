#include "erf/constraints.hpp"
#include "erf/field.hpp"
#include "erf/hierarchy.hpp"
#include "erf/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <tuple>

using namespace xrf;

namespace {

Aabb box(double h) {
  Aabb b;
  b.min = Vec3::Constant(-h);
  b.max = Vec3::Constant(h);
  return b;
}

using Key = std::tuple<int, int, int>;

int32_t node_at(const Svo& svo, int depth, int x, int y, int z) { return svo.find(depth, GridCoord{x, y, z}); }

std::set<Key> required_keys(const Svo& svo, const std::vector<uint8_t>& mask, int depth) {
  std::set<Key> out;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const NodeInfo& info = svo.info(static_cast<int32_t>(i));
    EXPECT_EQ(info.depth, depth);
    out.insert({info.coord[0], info.coord[1], info.coord[2]});
  }
  return out;
}

// Every in-range coordinate within Chebyshev distance 1 of a seed set.
std::set<Key> dilate(const std::set<Key>& seeds, int n) {
  std::set<Key> out;
  for (const auto& [x, y, z] : seeds)
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int a = x + dx, b = y + dy, c = z + dz;
          if (a >= 0 && b >= 0 && c >= 0 && a < n && b < n && c < n) out.insert({a, b, c});
        }
  return out;
}

void set_affine_opacity(Svo& svo, const Vec3& a, double b) {
  for (size_t n = 0; n < svo.node_count(); ++n) {
    auto p = svo.node_params(static_cast<int32_t>(n));
    p[0] = a.dot(svo.center(static_cast<int32_t>(n))) + b;
    for (int k = 0; k < 3; ++k) p[static_cast<size_t>(1 + k)] = a[k];
  }
}

Camera camera_at(const Vec3& eye, double fx, int size) {
  const double fov = 2.0 * std::atan(0.5 * size / fx);
  return Camera::look_at(eye, Vec3::Zero(), Vec3::UnitY(), fov, size, size);
}

}  // namespace

TEST(Required, SingleSeedGivesNodeAndRing) {
  const SceneModel m = create_dense_grid(box(1.0), 3, 1, 1);
  std::vector<double> probes(m.svo.node_count(), 0.0);
  probes[static_cast<size_t>(node_at(m.svo, 3, 3, 4, 2))] = 0.8;
  const auto req = required_from_probes(m.svo, probes);
  const auto keys = required_keys(m.svo, req, 3);
  EXPECT_EQ(keys.size(), 27u);
  EXPECT_EQ(keys, dilate({{3, 4, 2}}, 8));
}

TEST(Required, SeedAtCornerClipsRing) {
  const SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  std::vector<double> probes(m.svo.node_count(), 0.0);
  probes[static_cast<size_t>(node_at(m.svo, 2, 0, 0, 0))] = 0.9;
  EXPECT_EQ(required_keys(m.svo, required_from_probes(m.svo, probes), 2).size(), 8u);
}

TEST(Required, HysteresisChain) {
  const SceneModel m = create_dense_grid(box(1.0), 3, 1, 1);
  std::vector<double> probes(m.svo.node_count(), 0.0);
  const double chain[4] = {0.8, 0.1, 0.1, 0.02};
  for (int i = 0; i < 4; ++i) probes[static_cast<size_t>(node_at(m.svo, 3, 2 + i, 4, 4))] = chain[i];
  const auto keys = required_keys(m.svo, required_from_probes(m.svo, probes), 3);
  // Seed at x=2 expands through the two 0.1 nodes, not into 0.02; the ring
  // around x=2..4 then covers x=1..5.
  EXPECT_EQ(keys, dilate({{2, 4, 4}, {3, 4, 4}, {4, 4, 4}}, 8));
  EXPECT_EQ(keys.size(), 45u);
  EXPECT_TRUE(keys.count({5, 4, 4}));
  EXPECT_FALSE(keys.count({6, 4, 4}));
}

TEST(Required, ExpandOnlyNodesWithoutSeedAreFree) {
  const SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  std::vector<double> probes(m.svo.node_count(), 0.5);
  probes[0] = 0.0;
  for (size_t i = 1; i < 9; ++i) probes[i] = 0.0;
  const auto req = required_from_probes(m.svo, probes);
  EXPECT_EQ(std::count(req.begin(), req.end(), uint8_t{1}), 0);
}

TEST(Required, SearchStaysWithinLevel) {
  const SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  std::vector<double> probes(m.svo.node_count(), 0.0);
  // A depth-1 seed must not pull in depth-2 nodes.
  probes[static_cast<size_t>(node_at(m.svo, 1, 0, 0, 0))] = 0.9;
  const auto req = required_from_probes(m.svo, probes);
  for (size_t i = 0; i < req.size(); ++i)
    if (req[i]) EXPECT_EQ(m.svo.info(static_cast<int32_t>(i)).depth, 1);
  EXPECT_EQ(std::count(req.begin(), req.end(), uint8_t{1}), 8);
}

TEST(Required, ProbeSizeMismatchThrows) {
  const SceneModel m = create_dense_grid(box(1.0), 1, 1, 1);
  EXPECT_THROW(required_from_probes(m.svo, std::vector<double>(3, 0.0)), InvalidArgument);
}

TEST(Probe, ConstantFieldInterior) {
  SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  for (size_t n = 0; n < m.svo.node_count(); ++n) m.svo.node_params(static_cast<int32_t>(n))[0] = 0.3;
  const auto p = probe_max_opacity(m.svo);
  for (int x = 1; x <= 2; ++x)
    for (int y = 1; y <= 2; ++y)
      for (int z = 1; z <= 2; ++z) EXPECT_NEAR(p[static_cast<size_t>(node_at(m.svo, 2, x, y, z))], tanh01(0.3), 1e-14);
}

TEST(Probe, AffineFieldMaxAtOuterProbe) {
  SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  const Vec3 a(0.4, -0.2, 0.1);
  set_affine_opacity(m.svo, a, -0.1);
  const auto p = probe_max_opacity(m.svo, 8);
  const int32_t node = node_at(m.svo, 2, 1, 2, 1);
  // Outermost probe sits 7/16 of a side from the centre along each axis.
  const double side = m.svo.side(2);
  const double raw = a.dot(m.svo.center(node)) - 0.1 + 7.0 / 16.0 * side * a.cwiseAbs().sum();
  EXPECT_NEAR(p[static_cast<size_t>(node)], tanh01(raw), 1e-13);
}

TEST(Probe, RejectsBadResolution) {
  const SceneModel m = create_dense_grid(box(1.0), 1, 1, 1);
  EXPECT_THROW(probe_max_opacity(m.svo, 0), InvalidArgument);
}

TEST(Merge, NothingRequiredCollapsesToRoot) {
  SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  const auto map = merge(m.svo, std::vector<uint8_t>(m.svo.node_count(), 0));
  EXPECT_EQ(m.svo.node_count(), 1u);
  EXPECT_EQ(map[0], 0);
  for (size_t i = 1; i < map.size(); ++i) EXPECT_EQ(map[i], Svo::kNone);
}

TEST(Merge, AllLeavesRequiredKeepsTree) {
  SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  const size_t n = m.svo.node_count();
  std::vector<uint8_t> req(n, 0);
  for (size_t i = 0; i < n; ++i) req[i] = m.svo.is_leaf(static_cast<int32_t>(i)) ? 1 : 0;
  const auto map = merge(m.svo, req);
  EXPECT_EQ(m.svo.node_count(), n);
  for (size_t i = 0; i < n; ++i) EXPECT_NE(map[i], Svo::kNone);
}

TEST(Merge, OneRequiredLeafKeepsItsSiblingsAndAncestors) {
  SceneModel m = create_dense_grid(box(1.0), 2, 1, 1);
  Rng rng(4);
  for (double& v : m.svo.parameters()) v = rng.uniform(-1.0, 1.0);
  const Svo before = m.svo;
  std::vector<uint8_t> req(m.svo.node_count(), 0);
  const int32_t keep = node_at(m.svo, 2, 3, 1, 2);
  req[static_cast<size_t>(keep)] = 1;
  const auto map = merge(m.svo, req);
  EXPECT_EQ(m.svo.node_count(), 17u);
  // Survivors keep their parameters and coordinates.
  for (size_t i = 0; i < map.size(); ++i) {
    if (map[i] == Svo::kNone) continue;
    const auto old_id = static_cast<int32_t>(i);
    EXPECT_EQ(m.svo.info(map[i]).depth, before.info(old_id).depth);
    EXPECT_EQ(m.svo.info(map[i]).coord, before.info(old_id).coord);
    const auto a = before.node_params(old_id);
    const auto b = m.svo.node_params(map[i]);
    for (size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
  }
  EXPECT_NE(map[static_cast<size_t>(keep)], Svo::kNone);
}

TEST(Merge, SizeMismatchThrows) {
  SceneModel m = create_dense_grid(box(1.0), 1, 1, 1);
  EXPECT_THROW(merge(m.svo, std::vector<uint8_t>(2, 0)), InvalidArgument);
}

TEST(Nyquist, FootprintGate) {
  const Camera cam = camera_at(Vec3(0, 0, 10), 100.0, 100);
  // Footprint at distance 10 with fx = 100 is 0.1.
  EXPECT_TRUE(nyquist_allows({cam}, Vec3::Zero(), 0.1 + 1e-12));
  EXPECT_FALSE(nyquist_allows({cam}, Vec3::Zero(), 0.099));
  EXPECT_FALSE(nyquist_allows({cam}, Vec3(0, 0, 20), 10.0));  // behind the camera
  EXPECT_FALSE(nyquist_allows({cam}, Vec3(100, 0, 0), 10.0));  // outside the image
  EXPECT_FALSE(nyquist_allows({}, Vec3::Zero(), 10.0));
  const Camera near = camera_at(Vec3(0, 0, 5), 100.0, 100);
  EXPECT_TRUE(nyquist_allows({cam, near}, Vec3::Zero(), 0.06));
}

TEST(Subdivide, GateAndBudget) {
  SceneModel m = create_dense_grid(box(1.0), 1, 1, 1);
  std::vector<uint8_t> req(m.svo.node_count(), 1);
  req[0] = 0;
  // Leaves have side 1, children 0.5; a far camera cannot resolve them.
  const Camera far = camera_at(Vec3(0, 0, 200), 100.0, 100);
  auto r = subdivide(m.svo, req, {far});
  EXPECT_FALSE(r.changed);
  EXPECT_EQ(m.svo.node_count(), 9u);
  const Camera close = camera_at(Vec3(0, 0, 10), 100.0, 100);
  r = subdivide(m.svo, req, {close}, 9 + 8 * 3);
  EXPECT_EQ(r.subdivided, 3u);
  EXPECT_EQ(r.skipped_budget, 5u);
  EXPECT_EQ(m.svo.node_count(), 33u);
}

TEST(Subdivide, ChildrenReproduceAffineParent) {
  SceneModel m = create_dense_grid(box(1.0), 2, 2, 1);
  Svo& svo = m.svo;
  const Vec3 a(0.3, -0.5, 0.2);
  set_affine_opacity(svo, a, 0.05);
  for (size_t n = 0; n < svo.node_count(); ++n) {
    auto p = svo.node_params(static_cast<int32_t>(n));
    const Vec3 c = svo.center(static_cast<int32_t>(n));
    for (int j = 0; j < svo.sh_dim(); ++j) {
      p[static_cast<size_t>(svo.sh_f0_offset() + j)] = 0.1 * j + a.dot(c);
      for (int k = 0; k < 3; ++k) p[static_cast<size_t>(svo.sh_grad_offset(k) + j)] = a[k];
    }
  }
  std::vector<uint8_t> req(svo.node_count(), 0);
  const int32_t node = node_at(svo, 2, 1, 2, 1);
  req[static_cast<size_t>(node)] = 1;
  const auto r = subdivide(svo, req, {camera_at(Vec3(0, 0, 10), 1000.0, 1000)});
  ASSERT_EQ(r.subdivided, 1u);
  for (int o = 0; o < 8; ++o) {
    const int32_t c = svo.child(node, o);
    const Vec3 x = svo.center(c);
    const auto p = svo.node_params(c);
    EXPECT_NEAR(p[0], a.dot(x) + 0.05, 1e-13);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[static_cast<size_t>(1 + k)], a[k], 1e-13);
    for (int j = 0; j < svo.sh_dim(); ++j) {
      EXPECT_NEAR(p[static_cast<size_t>(svo.sh_f0_offset() + j)], 0.1 * j + a.dot(x), 1e-13);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[static_cast<size_t>(svo.sh_grad_offset(k) + j)], a[k], 1e-13);
    }
  }
}

TEST(Subdivide, SmoothForAffineFieldInAllocatedRegion) {
  SceneModel m = create_dense_grid(box(1.0), 3, 1, 1);
  Svo& svo = m.svo;
  const Vec3 a(0.3, -0.5, 0.2);
  set_affine_opacity(svo, a, 0.05);
  const Svo before = svo;
  std::vector<uint8_t> req(svo.node_count(), 0);
  for (int x = 2; x < 6; ++x)
    for (int y = 2; y < 6; ++y)
      for (int z = 2; z < 6; ++z) req[static_cast<size_t>(node_at(svo, 3, x, y, z))] = 1;
  ASSERT_TRUE(subdivide(svo, req, {camera_at(Vec3(0, 0, 10), 1000.0, 1000)}).changed);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    Query4D q;
    q.pos = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    q.footprint = rng.uniform(0.01, 0.2);
    EXPECT_NEAR(interp4d(svo, q, FieldKind::Opacity)[0], interp4d(before, q, FieldKind::Opacity)[0], 1e-12);
  }
}

TEST(StructurePhase, TransparentModelCollapsesAndFinishes) {
  SyntheticOptions so;
  so.resolution = 8;
  so.n_train = 2;
  so.n_test = 0;
  so.supersample = 1;
  const SyntheticScene s = make_synthetic_scene(so);
  SceneModel m = create_dense_grid(s.data.aabb, 2, 1, 1);
  for (size_t n = 0; n < m.svo.node_count(); ++n) m.svo.node_params(static_cast<int32_t>(n))[0] = kBorderOpacityRaw;
  OptState opt = make_opt_state(m.parameter_count());
  opt.step = 5;
  const uint64_t rev = m.revision;
  const PhaseResult r = structure_phase(m, opt, s.data, TrainConfig{});
  EXPECT_EQ(r.nodes_before, 73u);
  EXPECT_EQ(r.required, 0u);
  EXPECT_EQ(r.nodes_after_merge, 1u);
  EXPECT_EQ(r.nodes_after_subdivide, 1u);
  EXPECT_TRUE(r.done);
  EXPECT_GT(m.revision, rev);
  EXPECT_EQ(opt.step, 0u);
  EXPECT_EQ(opt.m.size(), m.parameter_count());
}

TEST(StructurePhase, OpaqueCentreSubdivides) {
  SyntheticOptions so;
  so.resolution = 32;
  so.n_train = 4;
  so.n_test = 0;
  so.supersample = 1;
  const SyntheticScene s = make_synthetic_scene(so);
  SceneModel m = create_dense_grid(s.data.aabb, 2, 1, 1);
  Svo& svo = m.svo;
  for (size_t n = 0; n < svo.node_count(); ++n) svo.node_params(static_cast<int32_t>(n))[0] = kBorderOpacityRaw;
  const int32_t hot = node_at(svo, 2, 1, 1, 1);
  svo.node_params(hot)[0] = 2.0;
  OptState opt = make_opt_state(m.parameter_count());
  const PhaseResult r = structure_phase(m, opt, s.data, TrainConfig{});
  EXPECT_GT(r.required, 0u);
  EXPECT_FALSE(r.done);
  EXPECT_GT(r.nodes_after_subdivide, r.nodes_after_merge);
  EXPECT_EQ(opt.m.size(), m.parameter_count());
}
