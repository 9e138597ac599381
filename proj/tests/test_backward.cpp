#include <doctest.h>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "roadgs/splat.hpp"

using namespace roadgs;

namespace {

/// Smooth rasterizer configuration for differentiation tests: a negligible
/// contribution threshold and no early transmittance stop, so the rendered
/// image is smooth in every parameter.
RenderConfig smooth_config() {
  RenderConfig config;
  config.alpha_min = 1e-14;  // keeps skip discontinuities far below FD noise
  config.t_min = 0.0;
  config.threads = 2;
  return config;
}

double loss_of(const GaussianGrid& grid, const CameraModel& cam, const Image& adjoint,
               const RenderConfig& config) {
  const RenderOutput out = render(grid, cam, config);
  double loss = 0.0;
  for (int ch = 0; ch < 3; ++ch) loss += (out.rgb.ch[ch] * adjoint.ch[ch]).sum();
  return loss;
}

Image random_adjoint(Rng& rng, int h, int w) {
  Image adj(h, w);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) adj.ch[ch](r, c) = rng.uniform(-1.0, 1.0);
  return adj;
}

struct FdStats {
  int checked = 0;
  double worst_rel = 0.0;
};

void compare(FdStats& stats, double analytic, double fd) {
  if (std::abs(analytic) <= 1e-6) return;
  const double rel = std::abs(fd - analytic) / std::max(std::abs(fd), std::abs(analytic));
  stats.worst_rel = std::max(stats.worst_rel, rel);
  ++stats.checked;
  CHECK(rel < 1e-3);
}

/// Central differences over every parameter of every Gaussian.
FdStats finite_difference_check(GaussianGrid grid, const CameraModel& cam,
                                const Image& adjoint, const RenderConfig& config) {
  const double h = 1e-4;
  const SceneGradients grads = render_backward(grid, cam, adjoint, config);
  FdStats stats;

  auto fd_pair = [&](auto&& set, double& slot) {
    set(+h);
    const double hi = loss_of(grid, cam, adjoint, config);
    set(-2.0 * h);
    const double lo = loss_of(grid, cam, adjoint, config);
    set(+h);  // restore
    compare(stats, slot, (hi - lo) / (2.0 * h));
  };

  for (std::int64_t g = 0; g < grid.count(); ++g) {
    for (int k = 0; k < kShCoeffs; ++k) {
      double slot = grads.sh(g, k);
      fd_pair([&](double d) { grid.sh(g, k) += d; }, slot);
    }
    {
      double slot = grads.opacity[g];
      fd_pair([&](double d) { grid.opacity[g] += d; }, slot);
    }
    for (int k = 0; k < 4; ++k) {
      double slot = grads.rotation(g, k);
      fd_pair([&](double d) { grid.rotation(g, k) += d; }, slot);
    }
    {
      const int row = static_cast<int>(g / grid.nx());
      const int col = static_cast<int>(g % grid.nx());
      double slot = grads.elevation[g];
      fd_pair([&](double d) { grid.elevation.values(row, col) += d; }, slot);
    }
  }
  for (int k = 0; k < 3; ++k) {
    double slot = grads.scale[k];
    fd_pair([&](double d) { grid.scale[k] += d; }, slot);
  }
  return stats;
}

}  // namespace

TEST_CASE("zero adjoint yields exactly zero gradients") {
  Rng rng(42);
  auto scene = testing::make_random_scene(rng, 24, 6);
  const Image adj(24, 24);
  const SceneGradients grads =
      render_backward(scene.grid, scene.camera, adj, smooth_config());
  CHECK(grads.sh.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.opacity.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.rotation.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.scale.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.elevation.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adjoint shape mismatch is rejected") {
  Rng rng(43);
  auto scene = testing::make_random_scene(rng, 24, 6);
  const Image adj(16, 24);
  CHECK_THROWS_AS(render_backward(scene.grid, scene.camera, adj, smooth_config()),
                  std::invalid_argument);
}

TEST_CASE("single-Gaussian DC gradient is the compositing weight times k0") {
  GridSpecOverrides o;
  o.nx_g = 1;
  o.ny_g = 1;
  o.geom_interval_m = 0.1;
  o.texture_factor = 1;
  o.gaussian_factor = 1;
  o.roi_start_m = -0.05;  // center at y = 0
  const GridSpec spec = make_grid_spec(o);
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh =
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(1, kShCoeffs);
  sh(0, 0) = 0.3;  // keep the red channel away from the clamp
  GaussianGrid grid = init_gaussian_grid(spec, flat_elevation(spec, GridLevel::gaussian), sh);

  CameraModel cam;
  cam.fx = cam.fy = 40.0;
  cam.cx = cam.cy = 16.0;
  cam.width = cam.height = 33;
  Eigen::Matrix3d rot;
  rot.row(0) << 1, 0, 0;
  rot.row(1) << 0, 1, 0;
  rot.row(2) << 0, 0, -1;
  cam.rotation = rot;
  cam.translation = -rot * Eigen::Vector3d(0, 0, 1.0);

  Image adj(33, 33);
  adj.ch[0](16, 16) = 1.0;  // loss = rendered red value at the center pixel

  const SceneGradients grads = render_backward(grid, cam, adj, smooth_config());
  // alpha' = 0.99 at the center, T = 1, so dL/d(a0_red) = w * k0.
  CHECK(grads.sh(0, 0) == doctest::Approx(0.99 * kSh0).epsilon(1e-9));
  CHECK(grads.sh(0, 1) == 0.0);  // green channel has zero adjoint
}

TEST_CASE("rotation gradients are tangent to the unit quaternion sphere") {
  Rng rng(7);
  auto scene = testing::make_random_scene(rng, 32, 6);
  const Image adj = random_adjoint(rng, 32, 32);
  const SceneGradients grads =
      render_backward(scene.grid, scene.camera, adj, smooth_config());
  for (std::int64_t g = 0; g < scene.grid.count(); ++g) {
    const Eigen::Vector4d q = scene.grid.rotation.row(g).transpose();
    CHECK(std::abs(grads.rotation.row(g).dot(q.transpose())) < 1e-10);
  }
}

TEST_CASE("analytic gradients match central finite differences on random scenes") {
  Rng rng(31415);
  const RenderConfig config = smooth_config();
  int scenes = 0;
  FdStats total;
  while (scenes < 8) {
    auto scene = testing::make_random_scene(rng, 32, 6);
    testing::separate_depths(scene, 1e-3);
    const Image adj = random_adjoint(rng, 32, 32);
    const FdStats stats = finite_difference_check(scene.grid, scene.camera, adj, config);
    total.checked += stats.checked;
    total.worst_rel = std::max(total.worst_rel, stats.worst_rel);
    ++scenes;
  }
  CHECK(total.checked > 500);  // the mask must not trivialize the test
  MESSAGE("finite-difference comparisons: ", total.checked,
          ", worst relative error: ", total.worst_rel);
}
