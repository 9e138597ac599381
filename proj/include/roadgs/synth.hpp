#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "roadgs/camera.hpp"
#include "roadgs/gaussians.hpp"
#include "roadgs/grid.hpp"
#include "roadgs/image.hpp"

namespace roadgs {

/// Smooth cosine-profile depression: depth at the center, zero at the rim,
/// C1 everywhere.
struct Pothole {
  double center_x_m = 0.0;
  double center_y_m = 0.0;
  double radius_m = 0.1;
  double depth_m = 0.02;
};

/// Groove along a polyline, same cosine cross-section with radius width/2.
struct Crack {
  std::vector<Eigen::Vector2d> polyline;
  double width_m = 0.02;
  double depth_m = 0.01;
};

struct TrajectoryRecipe {
  int frame_count = 4;
  double step_m = 0.35;
  double camera_height_m = 0.60;
  double pitch_rad = 0.42;  // downward
  double stereo_baseline_m = 0.12;
  int image_width = 320;
  int image_height = 256;
  double focal_px = 300.0;
};

/// Deterministic synthetic road description: base plane tilt, defects, a
/// value-noise albedo, and the camera trajectory.
struct SceneRecipe {
  std::uint64_t seed = 1;
  double tilt_pitch_rad = 0.0;
  double tilt_roll_rad = 0.0;
  std::vector<Pothole> potholes;
  std::vector<Crack> cracks;
  Eigen::Vector3d albedo = {0.46, 0.43, 0.40};
  double noise_amplitude = 0.12;
  double noise_scale_m = 0.06;  // albedo correlation length
  /// Gaussian scale for the ground-truth scene; 0 picks 8/15 of the lattice
  /// pitch, which reproduces the stock 0.002 m at the stock lattice.
  double gaussian_scale_m = 0.0;
  TrajectoryRecipe trajectory;
};

/// Analytic ground-truth surface height at a road-frame point (pre-clamp).
double surface_height(const SceneRecipe& recipe, double x, double y);

struct GeneratedScene {
  ElevationMap elevation;  // geometry level
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh;  // gaussian level
};

/// Ground-truth elevation (geometry lattice) and SH texture (Gaussian
/// lattice). Deterministic in recipe.seed. Throws when the recipe drives
/// elevation beyond bounds by more than half the elevation range.
GeneratedScene generate_scene(const SceneRecipe& recipe, const GridSpec& spec);

/// Cameras along +y at the recipe height and pitch; a nonzero baseline
/// yields left/right pairs (left first). Throws if the camera would sit at
/// or below the reference plane.
std::vector<CameraModel> make_trajectory(const SceneRecipe& recipe);

struct Dataset {
  GridSpec spec;
  SceneRecipe recipe;
  GaussianGrid gt_gaussians;      // storage-quantized
  ElevationMap gt_elevation;      // geometry level
  std::vector<CameraModel> cameras;
  std::vector<Image> images;
};

/// Renders ground-truth views of the generated scene through the project
/// renderer. noise_sigma adds clamped Gaussian pixel noise (0 = bit-exact
/// reproducibility). The scene is storage-quantized first so a re-render
/// from serialized files reproduces the images exactly.
Dataset render_dataset(const SceneRecipe& recipe, const GridSpec& spec,
                       double noise_sigma = 0.0, int threads = 0);

}  // namespace roadgs
