#include "erf/config.hpp"
#include "erf/constraints.hpp"
#include "erf/edit.hpp"
#include "erf/field.hpp"
#include "erf/image_io.hpp"
#include "erf/metrics.hpp"
#include "erf/model_io.hpp"
#include "erf/nerf_dataset.hpp"
#include "erf/rng.hpp"
#include "erf/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace xrf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("erf_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

Image random_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

double image_mean(const Image& img) {
  double s = 0.0;
  for (float v : img.data) s += v;
  return s / static_cast<double>(img.data.size());
}

Aabb box(double h) {
  Aabb b;
  b.min = Vec3::Constant(-h);
  b.max = Vec3::Constant(h);
  return b;
}

SceneModel random_model(uint64_t seed, int depth, int bands) {
  SceneModel m = create_dense_grid(box(1.0), depth, bands, 2);
  Rng rng(seed);
  for (double& v : m.svo.parameters()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  for (double& v : m.background.texels) v = static_cast<float>(rng.uniform());
  return m;
}

}  // namespace

TEST(Pyramid, ConstantImageStaysConstant) {
  const auto pyr = build_pyramid(Image(13, 6, 0.25f));
  for (const Image& level : pyr)
    for (float v : level.data) EXPECT_EQ(v, 0.25f);
  EXPECT_EQ(pyr.back().width, 1);
  EXPECT_EQ(pyr.back().height, 1);
}

TEST(Pyramid, TwoByTwoAverages) {
  Image img(2, 2);
  img.set_pixel(0, 0, Rgb(0, 0, 1));
  img.set_pixel(1, 0, Rgb(1, 0, 1));
  img.set_pixel(0, 1, Rgb(1, 0, 0));
  img.set_pixel(1, 1, Rgb(0, 0, 0));
  const auto pyr = build_pyramid(img);
  ASSERT_EQ(pyr.size(), 2u);
  EXPECT_EQ(pyr[1].at(0, 0, 0), 0.5f);
  EXPECT_EQ(pyr[1].at(0, 0, 1), 0.0f);
  EXPECT_EQ(pyr[1].at(0, 0, 2), 0.5f);
}

TEST(Pyramid, LevelCountAndSizes) {
  const auto pyr = build_pyramid(Image(800, 600));
  ASSERT_EQ(pyr.size(), 11u);  // 800 400 200 100 50 25 13 7 4 2 1
  const int widths[11] = {800, 400, 200, 100, 50, 25, 13, 7, 4, 2, 1};
  const int heights[11] = {600, 300, 150, 75, 38, 19, 10, 5, 3, 2, 1};
  for (size_t k = 0; k < pyr.size(); ++k) {
    EXPECT_EQ(pyr[k].width, widths[k]);
    EXPECT_EQ(pyr[k].height, heights[k]);
  }
}

TEST(Pyramid, BoxPreservesMeanForPowerOfTwo) {
  const Image img = random_image(64, 32, 3);
  const double mean = image_mean(img);
  for (const Image& level : build_pyramid(img)) EXPECT_NEAR(image_mean(level), mean, 1e-6);
}

TEST(Pyramid, GaussianKeepsConstant) {
  for (const Image& level : build_pyramid(Image(9, 9, 0.5f), PyramidFilter::Gaussian))
    for (float v : level.data) EXPECT_NEAR(v, 0.5f, 1e-6);
}

TEST(Pyramid, EmptyThrows) { EXPECT_THROW(build_pyramid(Image()), InvalidArgument); }

TEST(Png, RoundTripIsWithinQuantization) {
  const fs::path dir = scratch_dir("png");
  const Image img = random_image(7, 5, 9);
  write_png((dir / "a.png").string(), img);
  const Image back = read_png((dir / "a.png").string());
  ASSERT_EQ(back.width, 7);
  ASSERT_EQ(back.height, 5);
  for (size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0 + 1e-6);
  // Quantized values survive a second round trip exactly.
  write_png((dir / "b.png").string(), back);
  EXPECT_EQ(read_png((dir / "b.png").string()).data, back.data);
  fs::remove_all(dir);
}

TEST(Png, MissingFileIsDataError) { EXPECT_THROW(read_png("/nonexistent/x.png"), DataError); }

TEST(Loader, IntrinsicsAndIdentityPose) {
  const fs::path dir = scratch_dir("loader");
  write_png((dir / "r_0.png").string(), Image(800, 4, 0.5f));
  write_text(dir / "transforms_train.json", R"({"camera_angle_x": 0.6911112, "frames": [
    {"file_path": "./r_0", "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}]})");
  const Dataset d = load_nerf_synthetic(dir.string());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d.cameras[0].fx, 1111.1110434108123, 1e-9);
  EXPECT_EQ(d.cameras[0].fy, d.cameras[0].fx);
  EXPECT_EQ(d.cameras[0].width, 800);
  EXPECT_EQ(d.cameras[0].height, 4);
  EXPECT_TRUE(d.cameras[0].rotation.isIdentity(0.0));
  EXPECT_TRUE(d.cameras[0].position.isZero(0.0));
  EXPECT_EQ(d.split[0], Split::Train);
  EXPECT_TRUE(d.indices(Split::Test).empty());
  EXPECT_FALSE(d.has_aabb);
  fs::remove_all(dir);
}

TEST(Loader, ErrorsNameTheFile) {
  const fs::path dir = scratch_dir("loader_err");
  EXPECT_THROW(load_nerf_synthetic(dir.string()), DataError);
  write_text(dir / "transforms_train.json", R"({"camera_angle_x": 0.69, "frames": [)");
  try {
    load_nerf_synthetic(dir.string());
    FAIL() << "truncated JSON accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("transforms_train.json"), std::string::npos) << e.what();
  }
  write_text(dir / "transforms_train.json", R"({"camera_angle_x": 0.69, "frames": [
    {"file_path": "./r_0", "transform_matrix": [[2,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}]})");
  EXPECT_THROW(load_nerf_synthetic(dir.string()), DataError);
  fs::remove_all(dir);
}

TEST(Loader, SaveLoadRoundTrip) {
  SyntheticOptions so;
  so.resolution = 12;
  so.n_train = 2;
  so.n_test = 1;
  so.supersample = 1;
  const Dataset d = make_synthetic_scene(so).data;
  const fs::path dir = scratch_dir("saveload");
  save_nerf_synthetic(d, dir.string());
  const Dataset back = load_nerf_synthetic(dir.string());
  ASSERT_EQ(back.size(), d.size());
  EXPECT_EQ(back.indices(Split::Test).size(), 1u);
  EXPECT_TRUE(back.has_aabb);
  for (size_t i = 0; i < d.size(); ++i) {
    EXPECT_NEAR(back.cameras[i].fx, d.cameras[i].fx, 1e-6);
    EXPECT_LT((back.cameras[i].rotation - d.cameras[i].rotation).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((back.cameras[i].position - d.cameras[i].position).cwiseAbs().maxCoeff(), 1e-6);
    for (size_t k = 0; k < d.pyramids[i][0].data.size(); ++k)
      EXPECT_NEAR(back.pyramids[i][0].data[k], d.pyramids[i][0].data[k], 0.5 / 255.0 + 1e-6);
  }
  fs::remove_all(dir);
}

TEST(ModelIo, RecordSize) {
  EXPECT_EQ(node_record_size(3), 449u);  // 1 + 4 * (4 + 4 * 27)
  EXPECT_EQ(node_record_size(1), 65u);
}

TEST(ModelIo, RoundTripIsBitwise) {
  for (int bands = 1; bands <= 4; ++bands) {
    SceneModel m = random_model(static_cast<uint64_t>(bands), 2, bands);
    m.svo.subdivide(m.svo.find(2, GridCoord{1, 2, 3}));
    for (double& v : m.svo.parameters()) v = static_cast<float>(v);
    const std::string bytes = serialize_model(m);
    const SceneModel back = deserialize_model(bytes);
    EXPECT_TRUE(models_equal(m, back));
    EXPECT_EQ(serialize_model(back), bytes);
  }
}

TEST(ModelIo, FileRoundTrip) {
  const fs::path dir = scratch_dir("model");
  const SceneModel m = random_model(4, 1, 2);
  save_model(m, (dir / "m.erf").string());
  EXPECT_TRUE(models_equal(m, load_model((dir / "m.erf").string())));
  EXPECT_THROW(load_model((dir / "missing.erf").string()), DataError);
  fs::remove_all(dir);
}

TEST(ModelIo, CorruptionIsRejected) {
  const std::string bytes = serialize_model(random_model(5, 1, 1));
  EXPECT_THROW(deserialize_model(""), DataError);
  EXPECT_THROW(deserialize_model("ERF2" + bytes.substr(4)), DataError);
  for (size_t cut : {size_t{3}, size_t{20}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(deserialize_model(bytes.substr(0, cut)), DataError) << cut;
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_model(bad_version), DataError);
}

TEST(ModelIo, NonFiniteParameterIsRejected) {
  SceneModel m = random_model(6, 1, 1);
  m.svo.parameters()[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(deserialize_model(serialize_model(m)), DataError);
}

TEST(Edit, IdentityRecolorIsNoOp) {
  SceneModel m = random_model(7, 2, 2);
  const std::vector<double> before = m.svo.parameters();
  EXPECT_EQ(edit_recolor(m, box(2.0), Mat3::Identity()), m.svo.node_count());
  EXPECT_EQ(m.svo.parameters(), before);
}

TEST(Edit, ChannelSwapSwapsRadiance) {
  SceneModel m = random_model(8, 2, 2);
  const SceneModel before = m;
  Mat3 swap = Mat3::Zero();
  swap(0, 2) = swap(1, 1) = swap(2, 0) = 1.0;
  const uint64_t rev = m.revision;
  edit_recolor(m, box(2.0), swap);
  EXPECT_GT(m.revision, rev);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    Query4D q;
    q.pos = Vec3(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
    q.footprint = rng.uniform(0.05, 1.0);
    const Vec3 dir = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0).normalized();
    const Rgb a = eval_radiance(before.svo, q, dir);
    const Rgb b = eval_radiance(m.svo, q, dir);
    EXPECT_NEAR(b[0], a[2], 1e-12);
    EXPECT_NEAR(b[1], a[1], 1e-12);
    EXPECT_NEAR(b[2], a[0], 1e-12);
    EXPECT_EQ(eval_opacity(m.svo, q), eval_opacity(before.svo, q));
  }
}

TEST(Edit, RecolorOutsideBoxUntouched) {
  SceneModel m = random_model(9, 2, 1);
  const SceneModel before = m;
  Aabb corner;
  corner.min = Vec3::Constant(0.0);
  corner.max = Vec3::Constant(1.0);
  const size_t edited = edit_recolor(m, corner, Mat3::Zero());
  EXPECT_GT(edited, 0u);
  for (size_t n = 0; n < m.svo.node_count(); ++n) {
    const auto node = static_cast<int32_t>(n);
    if (corner.contains(m.svo.center(node))) continue;
    const auto a = before.svo.node_params(node);
    const auto b = m.svo.node_params(node);
    for (size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
  }
}

TEST(Edit, CutMakesFreeSpace) {
  SceneModel m = random_model(10, 2, 1);
  EXPECT_EQ(edit_cut(m, box(2.0)), m.svo.node_count());
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    Query4D q;
    q.pos = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    q.footprint = rng.uniform(0.05, 1.0);
    EXPECT_NEAR(eval_opacity(m.svo, q), tanh01(kBorderOpacityRaw), 1e-15);
  }
  Aabb bad;
  bad.min = Vec3::Constant(1.0);
  bad.max = Vec3::Constant(0.0);
  EXPECT_ANY_THROW(edit_cut(m, bad));
}

TEST(Metrics, PsnrOfKnownMse) {
  Image a(10, 10, 0.5f), b(10, 10, 0.5f);
  // 12 of 300 values off by 0.5: MSE = 12 * 0.25 / 300 = 0.01.
  for (int i = 0; i < 12; ++i) b.data[static_cast<size_t>(i * 25)] = 0.0f;
  EXPECT_NEAR(mse(a, b), 0.01, 1e-15);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
}

TEST(Metrics, IdenticalImages) {
  const Image a = random_image(20, 16, 1);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Metrics, SsimProperties) {
  const Image a = random_image(24, 24, 2);
  const Image b = random_image(24, 24, 3);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, b), 0.5);
  Image shifted = a;
  for (float& v : shifted.data) v = 0.8f * v + 0.1f;
  const double s = ssim(a, shifted);
  EXPECT_GT(s, 0.8);
  EXPECT_LT(s, 1.0);
  EXPECT_NEAR(ssim(Image(4, 4, 0.3f), Image(4, 4, 0.3f)), 1.0, 1e-12);  // window cropped
}

TEST(Metrics, SizeMismatchThrows) {
  EXPECT_THROW(psnr(Image(2, 2), Image(3, 2)), InvalidArgument);
  EXPECT_THROW(ssim(Image(), Image()), InvalidArgument);
}

TEST(Synthetic, DeterministicInSeed) {
  SyntheticOptions so;
  so.resolution = 12;
  so.n_train = 3;
  so.n_test = 2;
  so.supersample = 2;
  const Dataset a = make_synthetic_scene(so).data;
  const Dataset b = make_synthetic_scene(so).data;
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a.indices(Split::Train).size(), 3u);
  EXPECT_EQ(a.indices(Split::Test).size(), 2u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.pyramids[i][0].data, b.pyramids[i][0].data);
    EXPECT_TRUE(a.cameras[i].position == b.cameras[i].position);
  }
  so.seed = 1;
  const Dataset c = make_synthetic_scene(so).data;
  EXPECT_NE(c.pyramids[0][0].data, a.pyramids[0][0].data);
}

TEST(Synthetic, CamerasLookAtOrigin) {
  SyntheticOptions so;
  so.resolution = 8;
  so.supersample = 1;
  const Dataset d = make_synthetic_scene(so).data;
  for (const Camera& cam : d.cameras) {
    EXPECT_NEAR(cam.position.norm(), so.radius, 1e-9);
    const Vec3 forward = -cam.rotation.col(2);
    EXPECT_NEAR(forward.dot(-cam.position.normalized()), 1.0, 1e-9);
  }
}

TEST(Synthetic, AnalyticCube) {
  const AnalyticScene s;
  const auto hit = s.intersect(Vec3(0, 0, 5), Vec3(0, 0, -1));
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->t, 4.5, 1e-12);
  EXPECT_TRUE(hit->normal.isApprox(Vec3::UnitZ()));
  EXPECT_FALSE(s.intersect(Vec3(0, 0, 5), Vec3(0, 0, 1)));
  EXPECT_TRUE(s.inside(Vec3(0.4, -0.4, 0.1)));
  EXPECT_FALSE(s.inside(Vec3(0.6, 0.0, 0.0)));
}

TEST(Synthetic, InvalidOptionsThrow) {
  SyntheticOptions so;
  so.n_train = 0;
  EXPECT_THROW(make_synthetic_scene(so), InvalidArgument);
  so = {};
  so.resolution = 0;
  EXPECT_THROW(make_synthetic_scene(so), InvalidArgument);
  EXPECT_THROW(parse_synthetic_kind("teapot"), InvalidArgument);
}

TEST(Config, AppliesKnownKeys) {
  RunConfig c;
  apply_config(c, "# comment\nlr = 0.02\nrenderer = exp-softplus\nsamples_per_side=4\n\nimportance_sampling = false\n");
  EXPECT_EQ(c.train.lr, 0.02);
  EXPECT_EQ(c.train.objective.render.mode, RenderMode::ExpSoftplus);
  EXPECT_EQ(c.train.objective.render.samples_per_side, 4);
  EXPECT_FALSE(c.train.cache.importance);
}

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.train.objective.render.samples_per_side, 8);
  EXPECT_EQ(c.train.objective.render.max_samples, 256u);
  EXPECT_EQ(c.train.objective.render.max_opacity_samples, 32u);
  EXPECT_EQ(c.train.batch_size, 4096u);
  EXPECT_EQ(c.train.prior_batch_size, 4096u);
  EXPECT_EQ(c.train.seed_threshold, 0.75);
  EXPECT_EQ(c.train.expand_threshold, 0.075);
  EXPECT_EQ(c.train.cache.rebuild_interval, 5000);
  EXPECT_EQ(c.train.objective.lambda, 1e-3);
  EXPECT_FALSE(c.render.filter);
}

TEST(Config, ErrorsNameTheLine) {
  RunConfig c;
  try {
    apply_config(c, "lr = 0.1\nbogus = 3\n", "my.cfg");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("my.cfg"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos) << e.what();
  }
  EXPECT_THROW(apply_config(c, "lr = fast\n"), InvalidArgument);
  EXPECT_THROW(apply_config(c, "lr\n"), InvalidArgument);
  EXPECT_THROW(apply_config(c, "renderer = raytrace\n"), InvalidArgument);
  EXPECT_THROW(load_config("/nonexistent.cfg"), InvalidArgument);
}
