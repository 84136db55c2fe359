// erf: explicit radiance field reconstruction command-line tool.

#include "erf/config.hpp"
#include "erf/edit.hpp"
#include "erf/hierarchy.hpp"
#include "erf/image_io.hpp"
#include "erf/metrics.hpp"
#include "erf/model_io.hpp"
#include "erf/nerf_dataset.hpp"
#include "erf/synthetic.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace xrf;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Globals {
  uint64_t seed = 0;
  bool deterministic = false;
  std::string config_path;
  int threads = 0;
  std::vector<std::string> overrides;
};

RunConfig make_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  std::string text;
  for (const std::string& kv : g.overrides) text += kv + "\n";
  apply_config(c, text, "--set");
  c.train.seed = g.seed;
  c.train.objective.render.seed = g.seed;
  c.render.seed = g.seed;
  return c;
}

Dataset load_data(const std::string& dir, const RunConfig& c) { return load_nerf_synthetic(dir, c.load); }

Aabb data_bounds(const Dataset& d) {
  if (d.has_aabb) return d.aabb;
  Aabb box;
  box.min = Vec3::Constant(-1.5);
  box.max = Vec3::Constant(1.5);
  return box;
}

std::array<double, 6> parse_box(const std::string& s) {
  std::array<double, 6> v{};
  std::stringstream ss(s);
  std::string item;
  size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 6) throw InvalidArgument("--box expects 6 comma-separated numbers");
    v[i++] = std::stod(item);
  }
  if (i != 6) throw InvalidArgument("--box expects 6 comma-separated numbers");
  return v;
}

Image evaluate_view(const SceneModel& model, const Camera& cam, ImageMode mode, const RunConfig& c) {
  return render_image(model, cam, 0, mode, c.render);
}

int cmd_synth(const Globals& g, const std::string& scene, const std::string& out, int views, int test_views, int res) {
  SyntheticOptions o;
  o.kind = parse_synthetic_kind(scene);
  o.n_train = views;
  o.n_test = test_views;
  o.resolution = res;
  o.seed = g.seed;
  const SyntheticScene s = make_synthetic_scene(o);
  save_nerf_synthetic(s.data, out);
  std::printf("views=%d test_views=%d resolution=%d out=%s\n", views, test_views, res, out.c_str());
  return kOk;
}

int cmd_init(const Globals& g, const std::string& data_dir, const std::string& out, int depth) {
  const RunConfig c = make_config(g);
  const Dataset data = load_data(data_dir, c);
  SceneModel model = create_dense_grid(data_bounds(data), depth > 0 ? depth : c.train.initial_depth, c.sh_bands,
                                       c.cube_resolution, c.train.node_budget);
  init_random(model, g.seed, c.train.objective.render.samples_per_side);
  save_model(model, out);
  std::printf("nodes=%zu parameters=%zu out=%s\n", model.svo.node_count(), model.parameter_count(), out.c_str());
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir, const std::string& out, const std::string& init,
              size_t iters, const std::string& log_path) {
  const RunConfig c = make_config(g);
  const Dataset data = load_data(data_dir, c);
  SceneModel model;
  if (init.empty()) {
    model = create_dense_grid(data_bounds(data), c.train.initial_depth, c.sh_bands, c.cube_resolution,
                              c.train.node_budget);
    init_random(model, g.seed, c.train.objective.render.samples_per_side);
  } else {
    model = load_model(init);
  }
  const size_t total = iters > 0 ? iters : c.train.iterations_per_phase * static_cast<size_t>(c.train.max_phases);
  std::ofstream log(log_path.empty() ? out + ".log" : log_path);
  log << dump_config(c);
  OptState opt = make_opt_state(model.parameter_count(), c.train.lr);
  TrainContext ctx = make_train_context(data, c.train);
  const auto start = std::chrono::steady_clock::now();
  auto on_iteration = [&](const IterationStats& s) {
    if (c.train.stats_interval == 0 || s.iteration % c.train.stats_interval != 0) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << "iter=" << s.iteration << " photo=" << s.photo << " prior=" << s.prior << " nodes=" << s.nodes
        << " lr=" << s.lr << " seconds=" << secs << "\n";
    log.flush();
  };
  auto on_phase = [&](const SceneModel& m, const PhaseReport& r) {
    const std::string ckpt = out + ".phase" + std::to_string(r.phase) + (r.structure_ran ? ".structure" : ".trained");
    save_model(m, ckpt);
    log << "phase=" << r.phase << " iteration=" << r.iteration << " nodes=" << m.svo.node_count();
    if (r.structure_ran)
      log << " required=" << r.structure.required << " after_merge=" << r.structure.nodes_after_merge
          << " after_subdivide=" << r.structure.nodes_after_subdivide << " done=" << r.structure.done;
    log << " checkpoint=" << ckpt << "\n";
    log.flush();
    std::fprintf(stderr, "phase %d: iteration %llu, %zu nodes\n", r.phase, static_cast<unsigned long long>(r.iteration),
                 m.svo.node_count());
  };
  train_coarse_to_fine(model, opt, data, c.train, total, ctx, on_iteration, on_phase);
  save_model(model, out);
  std::printf("iterations=%llu nodes=%zu out=%s\n", static_cast<unsigned long long>(ctx.iteration),
              model.svo.node_count(), out.c_str());
  return kOk;
}

ImageMode parse_image_mode(const std::string& s) {
  if (s == "color") return ImageMode::Color;
  if (s == "depth") return ImageMode::Depth;
  if (s == "normal") return ImageMode::Normal;
  if (s == "opacity") return ImageMode::Opacity;
  throw InvalidArgument("unknown render mode '" + s + "' (color | depth | normal | opacity)");
}

int cmd_render(const Globals& g, const std::string& model_path, const std::string& data_dir, int view,
               const std::string& mode_name, int mip, const std::string& out) {
  const RunConfig c = make_config(g);
  const Dataset data = load_data(data_dir, c);
  const SceneModel model = load_model(model_path);
  if (view < 0 || static_cast<size_t>(view) >= data.size()) throw InvalidArgument("--view out of range");
  const ImageMode mode = parse_image_mode(mode_name);
  Image img = render_image(model, data.cameras[static_cast<size_t>(view)], mip, mode, c.render);
  if (mode == ImageMode::Depth || mode == ImageMode::Opacity) {
    write_npy(out, img, 0);
  } else {
    if (mode == ImageMode::Normal)
      for (float& v : img.data) v = 0.5f * (v + 1.0f);
    write_png(out, img);
  }
  std::printf("out=%s width=%d height=%d\n", out.c_str(), img.width, img.height);
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& model_path, const std::string& data_dir, const std::string& out_dir) {
  const RunConfig c = make_config(g);
  const Dataset data = load_data(data_dir, c);
  const SceneModel model = load_model(model_path);
  const std::vector<int> test = data.indices(Split::Test);
  if (test.empty()) throw DataError("dataset has no test views");
  if (!out_dir.empty()) fs::create_directories(out_dir);
  double sum_psnr = 0.0, sum_ssim = 0.0;
  for (int i : test) {
    const Image img = evaluate_view(model, data.cameras[static_cast<size_t>(i)], ImageMode::Color, c);
    const Image& ref = data.pyramids[static_cast<size_t>(i)][0];
    const double p = psnr(img, ref), s = ssim(img, ref);
    sum_psnr += p;
    sum_ssim += s;
    std::printf("view=%d psnr=%.4f ssim=%.5f\n", i, p, s);
    if (!out_dir.empty()) write_png((fs::path(out_dir) / ("view_" + std::to_string(i) + ".png")).string(), img);
  }
  std::printf("psnr=%.4f\nssim=%.5f\n", sum_psnr / static_cast<double>(test.size()),
              sum_ssim / static_cast<double>(test.size()));
  return kOk;
}

int cmd_edit(const std::string& model_path, const std::string& out, const std::string& op, const std::string& box_text,
             const std::vector<double>& matrix) {
  SceneModel model = load_model(model_path);
  const auto b = parse_box(box_text);
  Aabb box;
  box.min = Vec3(b[0], b[1], b[2]);
  box.max = Vec3(b[3], b[4], b[5]);
  size_t edited = 0;
  if (op == "cut") {
    edited = edit_cut(model, box);
  } else if (op == "recolor") {
    if (matrix.size() != 9) throw InvalidArgument("--matrix expects 9 numbers (row-major 3x3)");
    Mat3 m;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) m(r, k) = matrix[static_cast<size_t>(r * 3 + k)];
    edited = edit_recolor(model, box, m);
  } else {
    throw InvalidArgument("unknown edit '" + op + "' (recolor | cut)");
  }
  save_model(model, out);
  std::printf("edited_nodes=%zu out=%s\n", edited, out.c_str());
  return kOk;
}

int cmd_gradcheck(const Globals& g, const std::string& data_dir, double tol, size_t rays, int depth,
                  const std::string& mode) {
  const RunConfig c = make_config(g);
  const Dataset data = load_data(data_dir, c);
  GradCheckConfig gc;
  gc.depth = depth;
  gc.rays = rays;
  gc.seed = g.seed;
  gc.mode = parse_render_mode(mode);
  gc.sensor = c.train.objective.render.sensor;
  gc.lambda = c.train.objective.lambda;
  const auto start = std::chrono::steady_clock::now();
  SceneModel model = make_gradcheck_model(data_bounds(data), depth, c.sh_bands, g.seed);
  const Tape tape = make_gradcheck_tape(model, data, gc);
  FdOptions fo;
  fo.tolerance = tol;
  fo.seed = g.seed;
  const FdReport r = finite_difference_check(model, tape, fo);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("checked=%zu failures=%zu nonsmooth=%zu truncation_dominated=%zu max_rel_error=%.3e seconds=%.2f\n",
              r.checked, r.failures, r.nonsmooth, r.truncation_dominated, r.max_rel_error, secs);
  std::printf("result=%s\n", r.ok() ? "pass" : "fail");
  return r.ok() ? kOk : kNumerical;
}

int cmd_info(const std::string& model_path) {
  const SceneModel model = load_model(model_path);
  const Svo& svo = model.svo;
  std::vector<size_t> per_depth(static_cast<size_t>(svo.max_depth() + 1), 0);
  size_t leaves = 0;
  for (size_t n = 0; n < svo.node_count(); ++n) {
    ++per_depth[static_cast<size_t>(svo.info(static_cast<int32_t>(n)).depth)];
    if (svo.is_leaf(static_cast<int32_t>(n))) ++leaves;
  }
  std::printf("nodes=%zu\nleaves=%zu\nmax_depth=%d\nsh_bands=%d\nparameters=%zu\n", svo.node_count(), leaves,
              svo.max_depth(), svo.sh_bands(), model.parameter_count());
  std::printf("root_side=%.9g\nroot_center=%.9g,%.9g,%.9g\ncube_resolution=%d\n", svo.root_side(),
              svo.root_center().x(), svo.root_center().y(), svo.root_center().z(), model.background.resolution);
  for (size_t d = 0; d < per_depth.size(); ++d) std::printf("depth%zu_nodes=%zu\n", d, per_depth[d]);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explicit radiance field reconstruction"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_flag("--deterministic", g.deterministic, "Single-threaded bitwise reproducible run");
  app.add_option("--config", g.config_path, "Key-value config file");
  app.add_option("--set", g.overrides, "Config override 'key=value' (repeatable)");
  app.add_option("--threads", g.threads, "Worker threads (0: all)")->check(CLI::NonNegativeNumber);

  std::string scene = "checkered_cube", out, data_dir, init, model_path, log_path, mode = "color", op, box, out_dir;
  int views = 20, test_views = 5, res = 64, depth = 0, view = 0, mip = 0;
  size_t iters = 0, rays = 16;
  double tol = 1e-4;
  std::vector<double> matrix;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic posed-image dataset");
  synth->add_option("--scene", scene, "checkered_cube | textured_slab | sphere");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--views", views, "Training views")->check(CLI::PositiveNumber);
  synth->add_option("--test-views", test_views, "Test views")->check(CLI::NonNegativeNumber);
  synth->add_option("--res", res, "Image resolution")->check(CLI::PositiveNumber);

  auto* init_cmd = app.add_subcommand("init", "Create a randomized dense model for a dataset");
  init_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  init_cmd->add_option("--out", out, "Output model")->required();
  init_cmd->add_option("--depth", depth, "Dense grid depth (default: initial_depth)");

  auto* train = app.add_subcommand("train", "Coarse-to-fine reconstruction");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out, "Output model")->required();
  train->add_option("--init", init, "Start from this model instead of random fog");
  train->add_option("--iters", iters, "Total iterations (default: max_phases * iterations_per_phase)");
  train->add_option("--log", log_path, "Stats log (default: <out>.log)");

  auto* render = app.add_subcommand("render", "Render one dataset view");
  render->add_option("--model", model_path, "Model file")->required();
  render->add_option("--data", data_dir, "Dataset directory")->required();
  render->add_option("--view", view, "Dataset view index");
  render->add_option("--mode", mode, "color | depth | normal | opacity");
  render->add_option("--mip", mip, "Mip level")->check(CLI::NonNegativeNumber);
  render->add_option("--out", out, "Output PNG (color, normal) or NPY (depth, opacity)")->required();

  auto* eval = app.add_subcommand("eval", "PSNR / SSIM over the test split");
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--out-dir", out_dir, "Write rendered test views here");

  auto* edit = app.add_subcommand("edit", "Recolor or cut an axis-aligned box");
  edit->add_option("--model", model_path, "Model file")->required();
  edit->add_option("--out", out, "Output model")->required();
  edit->add_option("--op", op, "recolor | cut")->required();
  edit->add_option("--box", box, "minx,miny,minz,maxx,maxy,maxz")->required();
  edit->add_option("--matrix", matrix, "Row-major 3x3 channel map")->expected(9)->delimiter(',');

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient oracle");
  gradcheck->add_option("--data", data_dir, "Dataset directory")->required();
  gradcheck->add_option("--tol", tol, "Relative tolerance");
  gradcheck->add_option("--rays", rays, "Rays")->check(CLI::PositiveNumber);
  gradcheck->add_option("--depth", depth, "Model depth");
  gradcheck->add_option("--renderer", mode, "opacity | exp-softplus | exp-lilu");

  auto* info = app.add_subcommand("info", "Model statistics");
  info->add_option("--model", model_path, "Model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (g.deterministic) omp_set_num_threads(1);
  else if (g.threads > 0) omp_set_num_threads(g.threads);

  try {
    if (synth->parsed()) return cmd_synth(g, scene, out, views, test_views, res);
    if (init_cmd->parsed()) return cmd_init(g, data_dir, out, depth);
    if (train->parsed()) return cmd_train(g, data_dir, out, init, iters, log_path);
    if (render->parsed()) return cmd_render(g, model_path, data_dir, view, mode, mip, out);
    if (eval->parsed()) return cmd_eval(g, model_path, data_dir, out_dir);
    if (edit->parsed()) return cmd_edit(model_path, out, op, box, matrix);
    if (gradcheck->parsed())
      return cmd_gradcheck(g, data_dir, tol, rays, depth > 0 ? depth : 2, mode == "color" ? "opacity" : mode);
    if (info->parsed()) return cmd_info(model_path);
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n%s", e.what(), app.help().c_str());
    return kUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
