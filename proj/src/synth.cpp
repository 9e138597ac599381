#include "roadgs/synth.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "roadgs/random.hpp"
#include "roadgs/splat.hpp"

namespace roadgs {

namespace {

double cosine_bump(double dist, double radius) {
  if (dist >= radius || radius <= 0.0) return 0.0;
  return 0.5 * (1.0 + std::cos(M_PI * dist / radius));
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double polyline_distance(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& pts) {
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  if (pts.size() == 1) return (p - pts[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    best = std::min(best, point_segment_distance(p, pts[i], pts[i + 1]));
  return best;
}

/// 0..1 darkening weight of defects at a point (1 = deepest point of the
/// deepest defect).
double defect_fraction(const SceneRecipe& recipe, double x, double y) {
  double frac = 0.0;
  const Eigen::Vector2d p(x, y);
  for (const Pothole& hole : recipe.potholes)
    frac = std::max(frac, cosine_bump((p - Eigen::Vector2d(hole.center_x_m,
                                                            hole.center_y_m))
                                          .norm(),
                                      hole.radius_m));
  for (const Crack& crack : recipe.cracks)
    frac = std::max(frac, cosine_bump(polyline_distance(p, crack.polyline),
                                      0.5 * crack.width_m));
  return frac;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Hash of an integer lattice point to [-1, 1], pure in (seed, ix, iy).
double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) ^
                                                 0x51ed270b2f6e29full));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, double x, double y, double scale) {
  const double u = x / scale;
  const double v = y / scale;
  const std::int64_t ix = static_cast<std::int64_t>(std::floor(u));
  const std::int64_t iy = static_cast<std::int64_t>(std::floor(v));
  const double fx = smoothstep(u - ix);
  const double fy = smoothstep(v - iy);
  const double v00 = lattice_value(seed, ix, iy);
  const double v01 = lattice_value(seed, ix + 1, iy);
  const double v10 = lattice_value(seed, ix, iy + 1);
  const double v11 = lattice_value(seed, ix + 1, iy + 1);
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
         fy * ((1.0 - fx) * v10 + fx * v11);
}

double albedo_noise(const SceneRecipe& recipe, double x, double y) {
  if (recipe.noise_amplitude <= 0.0) return 1.0;
  const double coarse = value_noise(recipe.seed, x, y, recipe.noise_scale_m);
  const double fine = value_noise(recipe.seed + 0x9e37ull, x, y,
                                  0.5 * recipe.noise_scale_m);
  return 1.0 + recipe.noise_amplitude * (0.65 * coarse + 0.35 * fine);
}

}  // namespace

double surface_height(const SceneRecipe& recipe, double x, double y) {
  double z = std::tan(recipe.tilt_pitch_rad) * y + std::tan(recipe.tilt_roll_rad) * x;
  const Eigen::Vector2d p(x, y);
  for (const Pothole& hole : recipe.potholes)
    z -= hole.depth_m *
         cosine_bump((p - Eigen::Vector2d(hole.center_x_m, hole.center_y_m)).norm(),
                     hole.radius_m);
  for (const Crack& crack : recipe.cracks)
    z -= crack.depth_m *
         cosine_bump(polyline_distance(p, crack.polyline), 0.5 * crack.width_m);
  return z;
}

GeneratedScene generate_scene(const SceneRecipe& recipe, const GridSpec& spec) {
  for (const Pothole& hole : recipe.potholes)
    if (!(hole.radius_m > 0.0))
      throw std::invalid_argument("generate_scene: pothole radius must be positive");
  if (recipe.trajectory.frame_count < 1)
    throw std::invalid_argument("generate_scene: frame count must be >= 1");

  const double range = spec.h_max_m - spec.h_min_m;
  GeneratedScene scene;
  scene.elevation = flat_elevation(spec, GridLevel::geometry);
  for (int r = 0; r < spec.ny(GridLevel::geometry); ++r)
    for (int c = 0; c < spec.nx(GridLevel::geometry); ++c) {
      const double z = surface_height(recipe, center_x(spec, GridLevel::geometry, c),
                                      center_y(spec, GridLevel::geometry, r));
      if (z > spec.h_max_m + 0.5 * range || z < spec.h_min_m - 0.5 * range) {
        std::ostringstream msg;
        msg << "generate_scene: recipe drives elevation to " << z
            << " m, beyond bounds by more than half the range";
        throw std::invalid_argument(msg.str());
      }
      scene.elevation.values(r, c) = std::clamp(z, spec.h_min_m, spec.h_max_m);
    }

  const std::int64_t n = spec.cell_count(GridLevel::gaussian);
  const int nxg = spec.nx(GridLevel::gaussian);
  scene.sh.setZero(n, kShCoeffs);
  for (std::int64_t g = 0; g < n; ++g) {
    const double x = center_x(spec, GridLevel::gaussian, static_cast<int>(g % nxg));
    const double y = center_y(spec, GridLevel::gaussian, static_cast<int>(g / nxg));
    const double gain = albedo_noise(recipe, x, y);
    const double dark = 1.0 - 0.45 * defect_fraction(recipe, x, y);
    for (int ch = 0; ch < 3; ++ch) {
      const double color = std::clamp(recipe.albedo[ch] * gain * dark, 0.02, 0.98);
      scene.sh(g, ch) = (color - 0.5) / kSh0;
    }
  }
  return scene;
}

std::vector<CameraModel> make_trajectory(const SceneRecipe& recipe) {
  const TrajectoryRecipe& t = recipe.trajectory;
  if (t.frame_count < 1)
    throw std::invalid_argument("make_trajectory: frame count must be >= 1");
  if (!(t.camera_height_m > 0.0))
    throw std::invalid_argument("make_trajectory: camera at or below the road plane");

  // Camera axes in the road frame: x right, y down-ish, z forward pitched
  // down by pitch_rad.
  const double cp = std::cos(t.pitch_rad);
  const double sp = std::sin(t.pitch_rad);
  Eigen::Matrix3d rot;
  rot.row(0) << 1.0, 0.0, 0.0;
  rot.row(1) << 0.0, -sp, -cp;
  rot.row(2) << 0.0, cp, -sp;

  std::vector<CameraModel> cams;
  for (int k = 0; k < t.frame_count; ++k) {
    std::vector<double> offsets;
    if (t.stereo_baseline_m > 0.0)
      offsets = {-0.5 * t.stereo_baseline_m, 0.5 * t.stereo_baseline_m};
    else
      offsets = {0.0};
    for (double ox : offsets) {
      CameraModel cam;
      cam.fx = cam.fy = t.focal_px;
      cam.width = t.image_width;
      cam.height = t.image_height;
      cam.cx = 0.5 * (t.image_width - 1);
      cam.cy = 0.5 * (t.image_height - 1);
      cam.rotation = rot;
      const Eigen::Vector3d center(ox, k * t.step_m, t.camera_height_m);
      cam.translation = -rot * center;
      validate_camera(cam);
      cams.push_back(cam);
    }
  }
  return cams;
}

Dataset render_dataset(const SceneRecipe& recipe, const GridSpec& spec,
                       double noise_sigma, int threads) {
  Dataset dataset;
  dataset.spec = spec;
  dataset.recipe = recipe;

  const GeneratedScene scene = generate_scene(recipe, spec);
  dataset.gt_elevation = scene.elevation;
  const ElevationMap gauss_elev =
      upsample_elevation(scene.elevation, spec, GridLevel::gaussian);
  GaussianGrid gt = init_gaussian_grid(spec, gauss_elev, scene.sh);
  const double scale = recipe.gaussian_scale_m > 0.0
                           ? recipe.gaussian_scale_m
                           : spec.interval(GridLevel::gaussian) * (8.0 / 15.0);
  gt.scale = Eigen::Vector3d::Constant(scale);
  dataset.gt_gaussians = quantize_to_storage(gt);
  dataset.cameras = make_trajectory(recipe);

  RenderConfig config;
  config.threads = threads;
  Rng rng(recipe.seed ^ 0xA11CE5ull);
  for (const CameraModel& cam : dataset.cameras) {
    RenderOutput out = render(dataset.gt_gaussians, cam, config);
    if (noise_sigma > 0.0) {
      for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < cam.height; ++r)
          for (int c = 0; c < cam.width; ++c)
            out.rgb.ch[ch](r, c) = std::clamp(
                out.rgb.ch[ch](r, c) + rng.normal(0.0, noise_sigma), 0.0, 1.0);
    }
    dataset.images.push_back(std::move(out.rgb));
  }
  return dataset;
}

}  // namespace roadgs
