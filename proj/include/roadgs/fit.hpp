#pragma once

#include <string>
#include <vector>

#include "roadgs/camera.hpp"
#include "roadgs/gaussians.hpp"
#include "roadgs/image.hpp"
#include "roadgs/splat.hpp"

namespace roadgs {

/// One posed image.
struct Frame {
  Image image;
  CameraModel camera;
};

/// Per-group learning rates and Adam constants. The stock rates are the
/// test-time values (DC SH 0.05, first-order SH / rotation / opacity 0.001);
/// elevation and scale start frozen.
struct OptimizerConfig {
  double lr_sh0 = 0.05;
  double lr_sh1 = 0.001;
  double lr_rotation = 0.001;
  double lr_opacity = 0.001;
  double lr_elevation = 0.0;
  double lr_scale = 0.0;
  int iterations = 60;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda_rgb = 0.5;
  /// fit_scene only: keep elevation parameters on the geometry lattice and
  /// bridge to the Gaussian lattice bilinearly each iteration.
  bool elevation_at_geometry = true;
  /// Iterations with elevation frozen at the start of fit_scene, so texture
  /// roughly settles before geometry moves (the joint problem is poorly
  /// conditioned while the texture is still neutral gray).
  int elevation_warmup_iters = 20;
  /// Linear learning-rate decay toward this fraction of the initial rates at
  /// the final iteration; 1.0 keeps the rates fixed.
  double final_lr_fraction = 1.0;
  double divergence_factor = 10.0;
  RenderConfig render;
};

/// Adam first/second moments for one parameter array.
struct AdamMoments {
  Eigen::ArrayXXd m;
  Eigen::ArrayXXd v;

  static AdamMoments zeros(Eigen::Index rows, Eigen::Index cols) {
    return {Eigen::ArrayXXd::Zero(rows, cols), Eigen::ArrayXXd::Zero(rows, cols)};
  }
};

/// Bias-corrected Adam update of one array in place; m/v may alias blocks of
/// a larger moment store.
void adam_update(Eigen::Ref<Eigen::ArrayXXd> param,
                 const Eigen::Ref<const Eigen::ArrayXXd>& grad,
                 Eigen::Ref<Eigen::ArrayXXd> m, Eigen::Ref<Eigen::ArrayXXd> v,
                 double lr, const OptimizerConfig& config, int step);

/// Moment state for every scene parameter group.
struct AdamSceneState {
  AdamMoments sh;
  AdamMoments opacity;
  AdamMoments rotation;
  AdamMoments scale;
  AdamMoments elevation;  // geometry or gaussian lattice, per config
  int step = 0;

  static AdamSceneState zeros(std::int64_t gaussians, std::int64_t elevation_params);
};

/// One Adam step over all groups. Quaternions are renormalized and opacities
/// clamped to [0,1] afterwards; elevation gradients must already be at the
/// state's resolution. Throws on NaN gradients, naming the group.
void adam_step(GaussianGrid& grid, const SceneGradients& grads, AdamSceneState& state,
               const OptimizerConfig& config,
               Eigen::ArrayXXd* elevation_geometry = nullptr,
               const Eigen::ArrayXXd* elevation_grad_geometry = nullptr);

/// Loss / image metrics per iteration; entry 0 is the state before any step.
struct FitTrace {
  std::vector<double> loss;
  std::vector<double> psnr_db;
  std::vector<double> ssim;
  std::vector<double> iter_ms;

  std::string to_csv() const;
};

struct FitResult {
  GaussianGrid grid;
  FitTrace trace;
};

/// Single-frame test-time refinement of color, rotation, and opacity
/// (elevation and scale follow the config, frozen by default). eval_frame
/// picks the view used for the trace's PSNR/SSIM; defaults to the training
/// frame.
FitResult test_time_optimize(const GaussianGrid& grid, const Frame& frame,
                             const OptimizerConfig& config,
                             const Frame* eval_frame = nullptr);

struct SceneFitResult {
  GaussianGrid grid;
  ElevationMap elevation;  // geometry resolution
  FitTrace trace;
};

/// Full inverse fit from >= 2 posed frames: flat / mid-gray initialization,
/// then joint elevation + texture optimization. Returns the fitted scene and
/// the geometry-resolution elevation map (area-averaged from the Gaussian
/// lattice). Throws on < 2 frames, empty coverage, NaN loss, or divergence
/// beyond divergence_factor x the initial loss.
SceneFitResult fit_scene(const GridSpec& spec, const std::vector<Frame>& frames,
                         const OptimizerConfig& config,
                         const Frame* eval_frame = nullptr);

}  // namespace roadgs
