#pragma once

#include <Eigen/Core>
#include <vector>

#include "roadgs/camera.hpp"
#include "roadgs/gaussians.hpp"
#include "roadgs/image.hpp"

namespace roadgs {

/// Rasterizer tuning knobs. The defaults are the conventional splatting
/// constants: opacity cap 0.99, 2D blur floor 0.3 px^2, contributions below
/// 1/255 skipped, per-pixel early stop once transmittance falls under 1e-4.
/// alpha_min = 0 disables both the skip and the bounding boxes (smooth mode).
struct RenderConfig {
  double alpha_cap = 0.99;
  double blur_floor_px2 = 0.3;
  double alpha_min = 1.0 / 255.0;
  double t_min = 1e-4;
  double coverage_threshold = 1e-3;
  double near_clip_m = 1e-3;
  int tile_px = 32;
  int threads = 0;  // 0 -> process default
};

/// Per-pixel render products. depth is the compositing-weighted mean camera
/// depth (0 where nothing splatted); coverage(p) <=> alpha(p) > threshold.
struct RenderOutput {
  Image rgb;
  Array2d alpha;
  Array2d depth;
  Mask2d coverage;
};

/// A Gaussian after projection: image-plane mean, 2x2 covariance (blur floor
/// included), camera depth, shaded color, opacity, and source lattice index.
struct ProjectedGaussian {
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;
  double depth = 0.0;
  Eigen::Vector3d color;
  double opacity = 0.0;
  std::int64_t source_index = -1;
};

/// Sigma = R diag(s) diag(s)^T R^T. The quaternion (w,x,y,z) is normalized
/// internally; throws if its norm is off unit by more than `tol`.
Eigen::Matrix3d world_covariance(const Eigen::Vector3d& scale,
                                 const Eigen::Vector4d& quaternion, double tol = 1e-3);

/// Affine Jacobian of the pinhole projection at a camera-space point
/// (depth must exceed the near clip).
Eigen::Matrix<double, 2, 3> camera_jacobian(const Eigen::Vector3d& point_cam,
                                            const CameraModel& cam);

/// Sigma' = J W Sigma W^T J^T + blur I, with W the camera rotation.
Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma,
                                   const Eigen::Matrix3d& cam_rotation,
                                   const Eigen::Matrix<double, 2, 3>& jacobian,
                                   double blur_floor_px2 = 0.3);

/// First-order real-SH shading with the mid-gray bias: per channel
/// clamp(0.5 + k0 a0 + k1 (-a1 dy + a2 dz - a3 dx), 0, 1).
Eigen::Vector3d eval_sh(const Eigen::Matrix<double, kShCoeffs, 1>& coeffs,
                        const Eigen::Vector3d& view_dir);

inline constexpr double kSh0 = 0.28209479177387814;
inline constexpr double kSh1 = 0.4886025119029199;

/// Culling + projection + shading for every Gaussian, in lattice order.
/// Entries for culled Gaussians carry source_index = -1.
std::vector<ProjectedGaussian> project_gaussians(const GaussianGrid& grid,
                                                 const CameraModel& cam,
                                                 const RenderConfig& config = {});

/// Tiled front-to-back rasterizer with per-Gaussian bounding boxes sized so
/// that no contribution above alpha_min is ever missed. Deterministic for
/// any thread count.
RenderOutput render(const GaussianGrid& grid, const CameraModel& cam,
                    const RenderConfig& config = {});

/// Oracle renderer: per-pixel loop over all depth-sorted Gaussians, no
/// bounding boxes. Same contract and skip rules as render.
RenderOutput render_reference(const GaussianGrid& grid, const CameraModel& cam,
                              const RenderConfig& config = {});

/// Adjoints of L = sum_p dL_dI(p) . I(p) with respect to every Gaussian
/// parameter. Non-contributing Gaussians receive exact zeros. scale is the
/// grid-shared 3-vector, so its gradient is a single 3-vector too.
struct SceneGradients {
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh;
  Eigen::VectorXd opacity;
  Eigen::Matrix<double, Eigen::Dynamic, 4> rotation;
  Eigen::Vector3d scale = Eigen::Vector3d::Zero();
  Eigen::VectorXd elevation;

  static SceneGradients zeros(std::int64_t count);
};

/// Analytic backward pass matching render's forward exactly (same culling,
/// caps, and skip rules). dL_dI must be H x W x 3 for the camera; throws on
/// shape mismatch.
SceneGradients render_backward(const GaussianGrid& grid, const CameraModel& cam,
                               const Image& dL_dI, const RenderConfig& config = {});

}  // namespace roadgs
