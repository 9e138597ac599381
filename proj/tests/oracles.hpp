#pragma once

// Test-only reference implementations, written as explicit double-precision
// loops, independent of the library code paths they check.

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "roadgs/bev.hpp"
#include "roadgs/gaussians.hpp"
#include "roadgs/grid.hpp"
#include "roadgs/random.hpp"

namespace roadgs::testing {

/// Softmax-weighted anchor fusion, scalar loops.
inline Eigen::ArrayXd brute_fuse_cell(const std::vector<double>& features,
                                      const std::vector<double>& logits) {
  const std::size_t nz = logits.size();
  double peak = logits[0];
  for (double l : logits) peak = std::max(peak, l);
  std::vector<double> w(nz);
  double denom = 0.0;
  for (std::size_t z = 0; z < nz; ++z) {
    w[z] = std::exp(logits[z] - peak);
    denom += w[z];
  }
  double acc = 0.0;
  for (std::size_t z = 0; z < nz; ++z) acc += features[z] * (w[z] / denom);
  Eigen::ArrayXd out(1);
  out[0] = acc;
  return out;
}

inline double brute_softmax_dot(const std::vector<double>& values,
                                const std::vector<double>& logits) {
  return brute_fuse_cell(values, logits)[0];
}

/// Scalar bilinear interpolation with edge clamping.
inline double brute_bilinear(const Array2d& plane, double x, double y) {
  const int w = static_cast<int>(plane.cols());
  const int h = static_cast<int>(plane.rows());
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  x0 = std::max(0, std::min(x0, w - 1));
  y0 = std::max(0, std::min(y0, h - 1));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  double fx = x - x0;
  double fy = y - y0;
  fx = std::max(0.0, std::min(fx, 1.0));
  fy = std::max(0.0, std::min(fy, 1.0));
  return plane(y0, x0) * (1 - fx) * (1 - fy) + plane(y0, x1) * fx * (1 - fy) +
         plane(y1, x0) * (1 - fx) * fy + plane(y1, x1) * fx * fy;
}

/// Small random scene on a coarse lattice; parameters stay away from the
/// color clamp and opacity cap so the rendered image is smooth in them.
struct RandomScene {
  GaussianGrid grid;
  CameraModel camera;
};

inline RandomScene make_random_scene(Rng& rng, int image_size, int max_side) {
  GridSpecOverrides o;
  o.nx_g = 1 + rng.uniform_int(1, std::max(2, max_side / 2));
  o.ny_g = 1 + rng.uniform_int(1, std::max(2, max_side / 2));
  o.geom_interval_m = 0.08;
  o.texture_factor = 1;
  o.gaussian_factor = rng.uniform_int(1, 2);
  o.roi_start_m = 0.25;
  const GridSpec spec = make_grid_spec(o);

  ElevationMap elev = flat_elevation(spec, GridLevel::gaussian);
  for (int r = 0; r < elev.rows(); ++r)
    for (int c = 0; c < elev.cols(); ++c)
      elev.values(r, c) = rng.uniform(-0.06, 0.06);

  const std::int64_t n = spec.cell_count(GridLevel::gaussian);
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh(n, kShCoeffs);
  for (std::int64_t g = 0; g < n; ++g) {
    for (int ch = 0; ch < 3; ++ch) sh(g, ch) = rng.uniform(-0.8, 0.8);
    for (int k = 3; k < kShCoeffs; ++k) sh(g, k) = rng.uniform(-0.15, 0.15);
  }

  RandomScene scene;
  scene.grid = init_gaussian_grid(spec, elev, sh);
  scene.grid.scale =
      Eigen::Vector3d(rng.uniform(0.01, 0.05), rng.uniform(0.01, 0.05),
                      rng.uniform(0.01, 0.05));
  for (std::int64_t g = 0; g < n; ++g) {
    Eigen::Vector4d q;
    for (int k = 0; k < 4; ++k) q[k] = rng.normal();
    q.normalize();
    scene.grid.rotation.row(g) = q.transpose();
    scene.grid.opacity[g] = rng.uniform(0.15, 0.9);
  }

  // Keep depths pairwise separated so the sort is stable under tiny
  // parameter perturbations (finite differencing needs smoothness).
  CameraModel cam;
  cam.fx = cam.fy = 0.9 * image_size;
  cam.cx = cam.cy = 0.5 * (image_size - 1);
  cam.width = cam.height = image_size;
  const double pitch = rng.uniform(0.5, 0.9);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  Eigen::Matrix3d rot;
  rot.row(0) << 1, 0, 0;
  rot.row(1) << 0, -sp, -cp;
  rot.row(2) << 0, cp, -sp;
  cam.rotation = rot;
  const Eigen::Vector3d center(rng.uniform(-0.05, 0.05), rng.uniform(-0.12, 0.0),
                               rng.uniform(0.5, 0.8));
  cam.translation = -rot * center;
  scene.camera = cam;
  return scene;
}

/// Enforce a minimum pairwise depth gap by re-solving elevations along the
/// sorted depth order; keeps central differences clear of sort-order flips.
inline void separate_depths(RandomScene& scene, double min_gap) {
  const Eigen::Matrix3d& rot = scene.camera.rotation;
  const double dz = rot(2, 2);  // ddepth/delevation
  if (std::abs(dz) < 0.05) return;
  for (int pass = 0; pass < 4; ++pass) {
    std::vector<std::pair<double, std::int64_t>> depths;
    for (std::int64_t g = 0; g < scene.grid.count(); ++g)
      depths.push_back({scene.camera.to_camera(scene.grid.center(g)).z(), g});
    std::sort(depths.begin(), depths.end());
    bool ok = true;
    double floor_depth = depths.empty() ? 0.0 : depths[0].first;
    for (std::size_t i = 1; i < depths.size(); ++i) {
      if (depths[i].first - floor_depth < min_gap) {
        const std::int64_t g = depths[i].second;
        const int row = static_cast<int>(g / scene.grid.nx());
        const int col = static_cast<int>(g % scene.grid.nx());
        const double target = floor_depth + 1.5 * min_gap;
        const double delta_z = (target - depths[i].first) / dz;
        scene.grid.elevation.values(row, col) =
            std::clamp(scene.grid.elevation.values(row, col) + delta_z,
                       scene.grid.spec.h_min_m, scene.grid.spec.h_max_m);
        floor_depth = target;
        ok = false;
      } else {
        floor_depth = depths[i].first;
      }
    }
    if (ok) return;
  }
}

}  // namespace roadgs::testing
