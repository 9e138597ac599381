#include "roadgs/fit.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "roadgs/metrics.hpp"

namespace roadgs {

void adam_update(Eigen::Ref<Eigen::ArrayXXd> param,
                 const Eigen::Ref<const Eigen::ArrayXXd>& grad,
                 Eigen::Ref<Eigen::ArrayXXd> m, Eigen::Ref<Eigen::ArrayXXd> v,
                 double lr, const OptimizerConfig& config, int step) {
  m = config.beta1 * m + (1.0 - config.beta1) * grad;
  v = config.beta2 * v + (1.0 - config.beta2) * grad.square();
  if (lr == 0.0) return;  // moments still decay, parameters untouched
  const double m_corr = 1.0 - std::pow(config.beta1, step);
  const double v_corr = 1.0 - std::pow(config.beta2, step);
  param -= lr * (m / m_corr) / ((v / v_corr).sqrt() + config.epsilon);
}

AdamSceneState AdamSceneState::zeros(std::int64_t gaussians, std::int64_t elevation_params) {
  AdamSceneState s;
  s.sh = AdamMoments::zeros(gaussians, kShCoeffs);
  s.opacity = AdamMoments::zeros(gaussians, 1);
  s.rotation = AdamMoments::zeros(gaussians, 4);
  s.scale = AdamMoments::zeros(3, 1);
  s.elevation = AdamMoments::zeros(elevation_params, 1);
  return s;
}

namespace {

void check_finite(const Eigen::Ref<const Eigen::ArrayXXd>& grad, const char* group) {
  if (!grad.isFinite().all()) {
    std::ostringstream msg;
    msg << "adam_step: non-finite gradient in parameter group '" << group << "'";
    throw std::runtime_error(msg.str());
  }
}

}  // namespace

void adam_step(GaussianGrid& grid, const SceneGradients& grads, AdamSceneState& state,
               const OptimizerConfig& config, Eigen::ArrayXXd* elevation_geometry,
               const Eigen::ArrayXXd* elevation_grad_geometry) {
  const std::int64_t n = grid.count();
  ++state.step;
  const int t = state.step;

  {
    Eigen::ArrayXXd sh = grid.sh.array();
    const Eigen::ArrayXXd sh_grad = grads.sh.array();
    if (config.lr_sh0 != 0.0) check_finite(sh_grad.leftCols(3), "sh0");
    if (config.lr_sh1 != 0.0) check_finite(sh_grad.rightCols(kShCoeffs - 3), "sh1");
    adam_update(sh.leftCols(3), sh_grad.leftCols(3), state.sh.m.leftCols(3),
                state.sh.v.leftCols(3), config.lr_sh0, config, t);
    adam_update(sh.rightCols(kShCoeffs - 3), sh_grad.rightCols(kShCoeffs - 3),
                state.sh.m.rightCols(kShCoeffs - 3), state.sh.v.rightCols(kShCoeffs - 3),
                config.lr_sh1, config, t);
    grid.sh = sh.matrix();
  }

  {
    Eigen::ArrayXXd rot = grid.rotation.array();
    const Eigen::ArrayXXd rot_grad = grads.rotation.array();
    if (config.lr_rotation != 0.0) check_finite(rot_grad, "rotation");
    adam_update(rot, rot_grad, state.rotation.m, state.rotation.v, config.lr_rotation,
                config, t);
    grid.rotation = rot.matrix();
    if (config.lr_rotation != 0.0)
      for (std::int64_t g = 0; g < n; ++g) grid.rotation.row(g).normalize();
  }

  {
    Eigen::ArrayXXd opa = grid.opacity.array();
    const Eigen::ArrayXXd opa_grad = grads.opacity.array();
    if (config.lr_opacity != 0.0) check_finite(opa_grad, "opacity");
    adam_update(opa, opa_grad, state.opacity.m, state.opacity.v, config.lr_opacity,
                config, t);
    grid.opacity = opa.min(1.0).max(0.0).matrix();
  }

  {
    Eigen::ArrayXXd scale = grid.scale.array();
    const Eigen::ArrayXXd scale_grad = grads.scale.array();
    if (config.lr_scale != 0.0) check_finite(scale_grad, "scale");
    adam_update(scale, scale_grad, state.scale.m, state.scale.v, config.lr_scale, config,
                t);
    grid.scale = scale.max(1e-6).matrix();
  }

  if (elevation_geometry != nullptr) {
    if (elevation_grad_geometry == nullptr)
      throw std::invalid_argument("adam_step: missing geometry elevation gradient");
    if (config.lr_elevation != 0.0) check_finite(*elevation_grad_geometry, "elevation");
    Eigen::Map<Eigen::ArrayXXd> flat(elevation_geometry->data(),
                                     elevation_geometry->size(), 1);
    const Eigen::Map<const Eigen::ArrayXXd> gflat(elevation_grad_geometry->data(),
                                                  elevation_grad_geometry->size(), 1);
    adam_update(flat, gflat, state.elevation.m, state.elevation.v, config.lr_elevation,
                config, t);
    *elevation_geometry = elevation_geometry->min(grid.spec.h_max_m).max(grid.spec.h_min_m);
    if (config.lr_elevation != 0.0)
      grid.elevation.values = upsample_bilinear(
          *elevation_geometry, grid.ny(), grid.nx());
  } else {
    Eigen::ArrayXXd elev(n, 1);
    for (std::int64_t g = 0; g < n; ++g)
      elev(g, 0) = grid.elevation.values(g / grid.nx(), g % grid.nx());
    const Eigen::Map<const Eigen::ArrayXXd> eg(grads.elevation.data(), n, 1);
    if (config.lr_elevation != 0.0) check_finite(eg, "elevation");
    adam_update(elev, eg, state.elevation.m, state.elevation.v, config.lr_elevation,
                config, t);
    if (config.lr_elevation != 0.0)
      for (std::int64_t g = 0; g < n; ++g)
        grid.elevation.values(g / grid.nx(), g % grid.nx()) =
            std::clamp(elev(g, 0), grid.spec.h_min_m, grid.spec.h_max_m);
  }
}

std::string FitTrace::to_csv() const {
  std::ostringstream os;
  os << "iteration,loss,psnr,ssim,ms\n";
  char buf[160];
  for (std::size_t i = 0; i < loss.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.4g\n", i, loss[i],
                  psnr_db[i], ssim[i], iter_ms[i]);
    os << buf;
  }
  return os.str();
}

namespace {

struct IterationEval {
  std::vector<RenderOutput> renders;
  RgbLossGrad loss_grad;
};

IterationEval evaluate(const GaussianGrid& grid, const std::vector<Frame>& frames,
                       const OptimizerConfig& config) {
  IterationEval ev;
  std::vector<Image> actuals;
  for (const Frame& f : frames) {
    ev.renders.push_back(render(grid, f.camera, config.render));
    actuals.push_back(f.image);
  }
  ev.loss_grad = rgb_loss_with_grad(ev.renders, actuals, config.lambda_rgb);
  return ev;
}

void record_eval_view(FitTrace& trace, const GaussianGrid& grid, const Frame& eval_frame,
                      const OptimizerConfig& config, const RenderOutput* reuse) {
  RenderOutput fresh;
  const RenderOutput* out = reuse;
  if (out == nullptr) {
    fresh = render(grid, eval_frame.camera, config.render);
    out = &fresh;
  }
  trace.psnr_db.push_back(psnr(out->rgb, eval_frame.image));
  trace.ssim.push_back(ssim(out->rgb, eval_frame.image).mean);
}

FitTrace run_loop(GaussianGrid& grid, const std::vector<Frame>& frames,
                  const OptimizerConfig& config, const Frame* eval_frame,
                  Eigen::ArrayXXd* elevation_geometry, int elevation_warmup = 0) {
  using clock = std::chrono::steady_clock;
  const Frame& eval = eval_frame != nullptr ? *eval_frame : frames.front();
  const bool eval_is_frame0 = eval_frame == nullptr;

  AdamSceneState state = AdamSceneState::zeros(
      grid.count(),
      elevation_geometry != nullptr ? elevation_geometry->size() : grid.count());

  FitTrace trace;
  IterationEval ev = evaluate(grid, frames, config);
  const double initial_loss = ev.loss_grad.loss;
  trace.loss.push_back(initial_loss);
  trace.iter_ms.push_back(0.0);
  record_eval_view(trace, grid, eval, config, eval_is_frame0 ? &ev.renders[0] : nullptr);

  for (int it = 1; it <= config.iterations; ++it) {
    const auto start = clock::now();

    SceneGradients grads = SceneGradients::zeros(grid.count());
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const SceneGradients part = render_backward(grid, frames[f].camera,
                                                  ev.loss_grad.d_rendered[f],
                                                  config.render);
      grads.sh += part.sh;
      grads.opacity += part.opacity;
      grads.rotation += part.rotation;
      grads.scale += part.scale;
      grads.elevation += part.elevation;
    }

    Eigen::ArrayXXd elev_grad_geom;
    if (elevation_geometry != nullptr) {
      Array2d gauss_grad(grid.ny(), grid.nx());
      for (std::int64_t g = 0; g < grid.count(); ++g)
        gauss_grad(g / grid.nx(), g % grid.nx()) = grads.elevation[g];
      elev_grad_geom = upsample_bilinear_adjoint(
          gauss_grad, static_cast<int>(elevation_geometry->rows()),
          static_cast<int>(elevation_geometry->cols()));
    }
    OptimizerConfig step_config = config;
    if (config.iterations > 1 && config.final_lr_fraction != 1.0) {
      const double t = static_cast<double>(it - 1) / (config.iterations - 1);
      const double decay = 1.0 + (config.final_lr_fraction - 1.0) * t;
      step_config.lr_sh0 *= decay;
      step_config.lr_sh1 *= decay;
      step_config.lr_rotation *= decay;
      step_config.lr_opacity *= decay;
      step_config.lr_elevation *= decay;
      step_config.lr_scale *= decay;
    }
    if (it <= elevation_warmup) step_config.lr_elevation = 0.0;
    adam_step(grid, grads, state, step_config, elevation_geometry,
              elevation_geometry != nullptr ? &elev_grad_geom : nullptr);

    ev = evaluate(grid, frames, config);
    const double loss = ev.loss_grad.loss;
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "optimization produced a non-finite loss at iteration " << it;
      throw std::runtime_error(msg.str());
    }
    if (loss > config.divergence_factor * initial_loss && initial_loss > 0.0) {
      std::ostringstream msg;
      msg << "optimization diverged at iteration " << it << " (loss " << loss << " > "
          << config.divergence_factor << " x initial " << initial_loss << ")";
      throw std::runtime_error(msg.str());
    }

    trace.loss.push_back(loss);
    record_eval_view(trace, grid, eval, config, eval_is_frame0 ? &ev.renders[0] : nullptr);
    trace.iter_ms.push_back(
        std::chrono::duration<double, std::milli>(clock::now() - start).count());
  }
  return trace;
}

}  // namespace

FitResult test_time_optimize(const GaussianGrid& grid, const Frame& frame,
                             const OptimizerConfig& config, const Frame* eval_frame) {
  FitResult result;
  result.grid = grid;
  const std::vector<Frame> frames{frame};
  result.trace = run_loop(result.grid, frames, config, eval_frame, nullptr);
  return result;
}

SceneFitResult fit_scene(const GridSpec& spec, const std::vector<Frame>& frames,
                         const OptimizerConfig& config, const Frame* eval_frame) {
  if (frames.size() < 2)
    throw std::invalid_argument(
        "fit_scene: at least two frames are required (single-view geometry is ill-posed)");

  SceneFitResult result;
  const ElevationMap flat = flat_elevation(spec, GridLevel::gaussian);
  const Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> neutral_sh =
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(
          spec.cell_count(GridLevel::gaussian), kShCoeffs);
  result.grid = init_gaussian_grid(spec, flat, neutral_sh);
  // Scale tracks the lattice pitch so coarse desk grids stay contiguous;
  // reproduces the stock 0.002 m at the stock lattice.
  result.grid.scale =
      Eigen::Vector3d::Constant(spec.interval(GridLevel::gaussian) * (8.0 / 15.0));

  Eigen::ArrayXXd elevation_geometry;
  Eigen::ArrayXXd* geom_ptr = nullptr;
  if (config.elevation_at_geometry) {
    elevation_geometry = Eigen::ArrayXXd::Zero(spec.ny(GridLevel::geometry),
                                               spec.nx(GridLevel::geometry));
    geom_ptr = &elevation_geometry;
  }
  result.trace = run_loop(result.grid, frames, config, eval_frame, geom_ptr,
                          config.elevation_warmup_iters);

  const int factor = spec.texture_factor * spec.gaussian_factor;
  result.elevation.values = downsample_area(result.grid.elevation.values, factor);
  result.elevation.valid = Mask2d::Constant(spec.ny(GridLevel::geometry),
                                            spec.nx(GridLevel::geometry), true);
  result.elevation.level = GridLevel::geometry;
  return result;
}

}  // namespace roadgs
