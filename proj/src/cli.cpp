#include "roadgs/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "roadgs/fit.hpp"
#include "roadgs/io.hpp"
#include "roadgs/metrics.hpp"
#include "roadgs/parallel.hpp"
#include "roadgs/splat.hpp"
#include "roadgs/synth.hpp"

namespace roadgs {

namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::string config_path;

  GridSpecOverrides grid;
  OptimizerConfig optimizer;
};

template <class T>
void maybe(const nlohmann::json& doc, const char* key, T& field) {
  if (doc.contains(key)) field = doc.at(key).get<T>();
}

template <class T>
void maybe_opt(const nlohmann::json& doc, const char* key, std::optional<T>& field) {
  if (doc.contains(key)) field = doc.at(key).get<T>();
}

/// Config file supplies defaults; command-line flags win.
void apply_config_file(GlobalOptions& opts) {
  if (opts.config_path.empty()) return;
  nlohmann::json doc = nlohmann::json::parse(read_text(opts.config_path));
  maybe(doc, "threads", opts.threads);
  if (doc.contains("seed")) opts.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    maybe_opt(g, "roi_width_m", opts.grid.roi_width_m);
    maybe_opt(g, "roi_length_m", opts.grid.roi_length_m);
    maybe_opt(g, "roi_start_m", opts.grid.roi_start_m);
    maybe_opt(g, "geom_interval_m", opts.grid.geom_interval_m);
    maybe_opt(g, "nx_g", opts.grid.nx_g);
    maybe_opt(g, "ny_g", opts.grid.ny_g);
    maybe_opt(g, "texture_factor", opts.grid.texture_factor);
    maybe_opt(g, "gaussian_factor", opts.grid.gaussian_factor);
    maybe_opt(g, "h_min_m", opts.grid.h_min_m);
    maybe_opt(g, "h_max_m", opts.grid.h_max_m);
    maybe_opt(g, "nz_anchors", opts.grid.nz_anchors);
    maybe_opt(g, "nb_bins", opts.grid.nb_bins);
  }
  if (doc.contains("optimizer")) {
    const auto& o = doc.at("optimizer");
    maybe(o, "lr_sh0", opts.optimizer.lr_sh0);
    maybe(o, "lr_sh1", opts.optimizer.lr_sh1);
    maybe(o, "lr_rotation", opts.optimizer.lr_rotation);
    maybe(o, "lr_opacity", opts.optimizer.lr_opacity);
    maybe(o, "lr_elevation", opts.optimizer.lr_elevation);
    maybe(o, "lr_scale", opts.optimizer.lr_scale);
    maybe(o, "iterations", opts.optimizer.iterations);
    maybe(o, "lambda_rgb", opts.optimizer.lambda_rgb);
    maybe(o, "elevation_at_geometry", opts.optimizer.elevation_at_geometry);
    maybe(o, "divergence_factor", opts.optimizer.divergence_factor);
  }
}

Frame load_frame(const std::string& image_path, const std::string& camera_path) {
  Frame frame;
  frame.image = read_ppm(image_path);
  frame.camera = read_camera(camera_path);
  if (frame.image.height() != frame.camera.height ||
      frame.image.width() != frame.camera.width)
    throw std::runtime_error("image size does not match the camera file: " + image_path);
  return frame;
}

int cmd_gen(const GlobalOptions& opts, const std::string& recipe_path,
            const std::string& out_dir, double noise_sigma, std::ostream& out) {
  SceneRecipe recipe;
  if (!recipe_path.empty()) recipe = read_recipe(recipe_path);
  if (opts.seed) recipe.seed = *opts.seed;
  const GridSpec spec = make_grid_spec(opts.grid);
  const Dataset dataset = render_dataset(recipe, spec, noise_sigma, opts.threads);
  write_dataset(out_dir, dataset);
  out << "wrote " << dataset.images.size() << " frames to " << out_dir << "\n";
  return 0;
}

int cmd_render(const GlobalOptions& opts, const std::string& scene_path,
               const std::string& camera_path, const std::string& out_path,
               const std::string& alpha_path, const std::string& depth_path,
               std::ostream& out) {
  const GaussianGrid grid = read_gaussian_grid(scene_path);
  const CameraModel cam = read_camera(camera_path);
  RenderConfig config;
  config.threads = opts.threads;
  const RenderOutput render_out = render(grid, cam, config);
  write_ppm(out_path, render_out.rgb);
  if (!alpha_path.empty()) write_feature_map(alpha_path, {render_out.alpha});
  if (!depth_path.empty()) write_feature_map(depth_path, {render_out.depth});
  out << "rendered " << cam.width << "x" << cam.height << " to " << out_path << "\n";
  return 0;
}

int cmd_opt(const GlobalOptions& opts, const std::string& scene_path,
            const std::string& image_path, const std::string& camera_path,
            const std::string& out_dir, const std::string& eval_image,
            const std::string& eval_camera, std::ostream& out) {
  const GaussianGrid grid = read_gaussian_grid(scene_path);
  const Frame frame = load_frame(image_path, camera_path);
  OptimizerConfig config = opts.optimizer;
  config.render.threads = opts.threads;

  std::optional<Frame> eval;
  if (!eval_image.empty()) eval = load_frame(eval_image, eval_camera);

  const FitResult result =
      test_time_optimize(grid, frame, config, eval ? &*eval : nullptr);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_gaussian_grid(dir / "optimized.ggrd", quantize_to_storage(result.grid));
  write_text(dir / "trace.csv", result.trace.to_csv());
  write_manifest(dir, {"optimized.ggrd"});
  out << "optimized scene over " << config.iterations << " iterations; final loss "
      << result.trace.loss.back() << "\n";
  return 0;
}

int cmd_fit(const GlobalOptions& opts, const std::string& dataset_dir,
            const std::string& out_dir, std::ostream& out) {
  const Dataset dataset = read_dataset(dataset_dir);
  // Only the spec, cameras, and images feed the fit; ground truth stays on disk.
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < dataset.images.size(); ++i)
    frames.push_back({dataset.images[i], dataset.cameras[i]});

  OptimizerConfig config = opts.optimizer;
  config.render.threads = opts.threads;
  const SceneFitResult result = fit_scene(dataset.spec, frames, config);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_gaussian_grid(dir / "fitted.ggrd", quantize_to_storage(result.grid));
  write_elevation(dir / "elevation.elev", result.elevation,
                  dataset.spec.interval(GridLevel::geometry));
  write_text(dir / "trace.csv", result.trace.to_csv());
  write_manifest(dir, {"fitted.ggrd", "elevation.elev"});
  out << "fit " << frames.size() << " frames over " << config.iterations
      << " iterations; final loss " << result.trace.loss.back() << "\n";
  return 0;
}

int cmd_eval(const GlobalOptions&, const std::string& pred_elev,
             const std::string& gt_elev, const std::string& pred_image,
             const std::string& gt_image, const std::string& out_path,
             std::ostream& out) {
  MetricReport report;
  if (!pred_elev.empty()) {
    ElevationMap pred = read_elevation(pred_elev).map;
    ElevationMap gt = read_elevation(gt_elev).map;
    const ElevationMetrics m = elevation_metrics(pred, gt);
    report.has_elevation = true;
    report.aae_cm = m.aae_m * 100.0;
    report.rmse_cm = m.rmse_m * 100.0;
    report.pct_gt_5mm = m.pct_gt_5mm;
    const SegmentAae segments = segment_aae(pred, gt, 15);
    for (std::size_t i = 0; i < segments.aae_m.size(); ++i) {
      report.segment_aae_cm.push_back(segments.aae_m[i] * 100.0);
      report.segment_has_valid.push_back(segments.has_valid[i]);
    }
  }
  if (!pred_image.empty()) {
    const Image a = read_ppm(pred_image);
    const Image b = read_ppm(gt_image);
    report.has_image = true;
    report.psnr_db = psnr(a, b);
    report.ssim = ssim(a, b).mean;
  }
  if (!report.has_elevation && !report.has_image)
    throw std::runtime_error("eval: provide --pred-elev/--gt-elev and/or --pred-image/--gt-image");

  out << report.to_text();
  if (!out_path.empty()) {
    write_text(out_path, report.to_json());
    out << "wrote " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::string* out_str,
            std::string* err_str) {
  std::ostringstream out_buf, err_buf;
  std::ostream& out = out_str ? static_cast<std::ostream&>(out_buf) : std::cout;
  std::ostream& err = err_str ? static_cast<std::ostream&>(err_buf) : std::cerr;

  CLI::App app{"grid-Gaussian road reconstruction toolkit"};
  app.require_subcommand(1);

  GlobalOptions opts;
  std::uint64_t seed_flag = 0;
  auto* seed_opt = app.add_option("--seed", seed_flag, "override scene seed");
  app.add_option("--threads", opts.threads, "worker threads (0 = all cores)");
  app.add_option("--config", opts.config_path, "JSON config file (flags win)");

  std::string recipe_path, out_dir, scene_path, camera_path, image_path, out_path;
  std::string dataset_dir;
  std::string alpha_path, depth_path, eval_image, eval_camera;
  std::string pred_elev, gt_elev, pred_image, gt_image;
  double noise_sigma = 0.0;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--recipe", recipe_path, "scene recipe JSON (omit for the default)");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--noise", noise_sigma, "pixel noise sigma");

  auto* rend = app.add_subcommand("render", "render a scene from a camera");
  rend->add_option("--scene", scene_path, ".ggrd scene")->required();
  rend->add_option("--camera", camera_path, "camera text file")->required();
  rend->add_option("--out", out_path, "output PPM")->required();
  rend->add_option("--alpha-out", alpha_path, "accumulated-opacity FMAP dump");
  rend->add_option("--depth-out", depth_path, "depth FMAP dump");

  auto* opt = app.add_subcommand("opt", "test-time optimization against one frame");
  opt->add_option("--scene", scene_path, ".ggrd scene")->required();
  opt->add_option("--image", image_path, "training image (PPM)")->required();
  opt->add_option("--camera", camera_path, "training camera")->required();
  opt->add_option("--out", out_dir, "output directory")->required();
  opt->add_option("--eval-image", eval_image, "held-out evaluation image");
  opt->add_option("--eval-camera", eval_camera, "held-out evaluation camera");

  auto* fit = app.add_subcommand("fit", "fit elevation + texture to a dataset");
  fit->add_option("--dataset", dataset_dir, "dataset directory")->required();
  fit->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "compute reconstruction metrics");
  eval->add_option("--pred-elev", pred_elev, "predicted .elev");
  eval->add_option("--gt-elev", gt_elev, "ground-truth .elev");
  eval->add_option("--pred-image", pred_image, "rendered image (PPM)");
  eval->add_option("--gt-image", gt_image, "reference image (PPM)");
  eval->add_option("--out", out_path, "write a JSON report here");

  // Optimizer knobs shared by opt/fit; config-file values are the defaults.
  for (auto* sub : {opt, fit}) {
    sub->add_option("--iters", opts.optimizer.iterations, "iterations");
    sub->add_option("--lr-sh0", opts.optimizer.lr_sh0, "DC SH learning rate");
    sub->add_option("--lr-sh1", opts.optimizer.lr_sh1, "first-order SH learning rate");
    sub->add_option("--lr-rotation", opts.optimizer.lr_rotation, "rotation learning rate");
    sub->add_option("--lr-opacity", opts.optimizer.lr_opacity, "opacity learning rate");
    sub->add_option("--lr-elevation", opts.optimizer.lr_elevation,
                    "elevation learning rate");
    sub->add_option("--lr-scale", opts.optimizer.lr_scale, "scale learning rate");
    sub->add_option("--lambda", opts.optimizer.lambda_rgb, "L1 weight in the color loss");
  }

  std::vector<std::string> argv_copy = args;
  std::vector<char*> argv;
  argv.push_back(const_cast<char*>("roadgs"));
  for (auto& a : argv_copy) argv.push_back(a.data());

  try {
    // Parse twice: first to learn --config, then with file defaults applied.
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (!opts.config_path.empty()) {
      const GlobalOptions flag_values = opts;
      GlobalOptions file_defaults;
      file_defaults.config_path = opts.config_path;
      apply_config_file(file_defaults);
      // Flags win: re-apply any flag the user actually passed.
      opts = file_defaults;
      opts.threads = app.count("--threads") ? flag_values.threads : opts.threads;
      for (auto* sub : {opt, fit}) {
        if (!sub->parsed()) continue;
        auto keep = [&](const char* name, double& dst, double flag_value) {
          if (sub->count(name)) dst = flag_value;
        };
        if (sub->count("--iters")) opts.optimizer.iterations = flag_values.optimizer.iterations;
        keep("--lr-sh0", opts.optimizer.lr_sh0, flag_values.optimizer.lr_sh0);
        keep("--lr-sh1", opts.optimizer.lr_sh1, flag_values.optimizer.lr_sh1);
        keep("--lr-rotation", opts.optimizer.lr_rotation, flag_values.optimizer.lr_rotation);
        keep("--lr-opacity", opts.optimizer.lr_opacity, flag_values.optimizer.lr_opacity);
        keep("--lr-elevation", opts.optimizer.lr_elevation, flag_values.optimizer.lr_elevation);
        keep("--lr-scale", opts.optimizer.lr_scale, flag_values.optimizer.lr_scale);
        keep("--lambda", opts.optimizer.lambda_rgb, flag_values.optimizer.lambda_rgb);
      }
    }
    if (seed_opt->count()) opts.seed = seed_flag;
    set_default_threads(opts.threads);

    int rc = 1;
    if (gen->parsed()) rc = cmd_gen(opts, recipe_path, out_dir, noise_sigma, out);
    else if (rend->parsed())
      rc = cmd_render(opts, scene_path, camera_path, out_path, alpha_path, depth_path, out);
    else if (opt->parsed())
      rc = cmd_opt(opts, scene_path, image_path, camera_path, out_dir, eval_image,
                   eval_camera, out);
    else if (fit->parsed()) rc = cmd_fit(opts, dataset_dir, out_dir, out);
    else if (eval->parsed())
      rc = cmd_eval(opts, pred_elev, gt_elev, pred_image, gt_image, out_path, out);

    if (out_str) *out_str = out_buf.str();
    if (err_str) *err_str = err_buf.str();
    return rc;
  } catch (const CLI::ParseError& e) {
    std::ostringstream dummy_out;
    const int rc = app.exit(e, out_str ? dummy_out : std::cout, err);
    if (out_str) *out_str = out_buf.str() + dummy_out.str();
    if (err_str) *err_str = err_buf.str();
    return rc;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (out_str) *out_str = out_buf.str();
    if (err_str) *err_str = err_buf.str();
    return 1;
  }
}

}  // namespace roadgs
