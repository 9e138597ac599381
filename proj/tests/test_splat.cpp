#include <doctest.h>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "roadgs/splat.hpp"

using namespace roadgs;

namespace {

/// nx lateral x ny longitudinal lattice, both refinement factors 1.
GridSpec lattice(int nx, int ny, double pitch, double start) {
  GridSpecOverrides o;
  o.nx_g = nx;
  o.ny_g = ny;
  o.geom_interval_m = pitch;
  o.texture_factor = 1;
  o.gaussian_factor = 1;
  o.roi_start_m = start;
  return make_grid_spec(o);
}

/// Camera at the road-frame origin looking along +y, z up in the image.
CameraModel forward_camera(int size, double focal) {
  CameraModel cam;
  cam.fx = cam.fy = focal;
  cam.cx = cam.cy = (size - 1) / 2;
  cam.width = cam.height = size;
  Eigen::Matrix3d rot;
  rot.row(0) << 1, 0, 0;    // x_cam = x
  rot.row(1) << 0, 0, -1;   // y_cam = -z (down)
  rot.row(2) << 0, 1, 0;    // z_cam = y (forward)
  cam.rotation = rot;
  cam.translation.setZero();
  return cam;
}

}  // namespace

TEST_CASE("world covariance: isotropic, stock, and rotated-diagonal forms") {
  const Eigen::Vector4d identity_q(1, 0, 0, 0);
  const Eigen::Matrix3d iso = world_covariance({0.1, 0.1, 0.1}, identity_q);
  CHECK((iso - 0.01 * Eigen::Matrix3d::Identity()).norm() == doctest::Approx(0.0));

  const Eigen::Matrix3d stock = world_covariance({0.002, 0.002, 0.002}, identity_q);
  CHECK((stock - 4e-6 * Eigen::Matrix3d::Identity()).norm() ==
        doctest::Approx(0.0).epsilon(1e-18));

  // 90 degree rotation about z swaps the x/y variances.
  const double s = std::sqrt(0.5);
  const Eigen::Vector4d qz(s, 0, 0, s);
  const Eigen::Matrix3d rotated = world_covariance({0.1, 0.2, 0.3}, qz);
  Eigen::Matrix3d expected = Eigen::Vector3d(0.04, 0.01, 0.09).asDiagonal();
  CHECK((rotated - expected).norm() < 1e-12);
}

TEST_CASE("world covariance rejects far-from-unit quaternions") {
  CHECK_THROWS_AS(world_covariance({0.1, 0.1, 0.1}, {2.0, 0, 0, 0}),
                  std::invalid_argument);
  // Small drift (finite-difference scale) is tolerated and renormalized.
  CHECK_NOTHROW(world_covariance({0.1, 0.1, 0.1}, {1.0 + 1e-4, 0, 0, 0}));
}

TEST_CASE("camera jacobian: on-axis form, finite differences, depth scaling") {
  CameraModel cam = forward_camera(64, 100.0);

  const Eigen::Matrix<double, 2, 3> on_axis = camera_jacobian({0, 0, 2.0}, cam);
  CHECK(on_axis(0, 0) == doctest::Approx(50.0));
  CHECK(on_axis(1, 1) == doctest::Approx(50.0));
  CHECK(on_axis(0, 1) == doctest::Approx(0.0));
  CHECK(on_axis(0, 2) == doctest::Approx(0.0));
  CHECK(on_axis(1, 2) == doctest::Approx(0.0));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector3d p(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                            rng.uniform(0.5, 3.0));
    const auto jac = camera_jacobian(p, cam);
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d lo = p, hi = p;
      lo[k] -= h;
      hi[k] += h;
      const double du =
          (cam.fx * hi.x() / hi.z() - cam.fx * lo.x() / lo.z()) / (2 * h);
      const double dv =
          (cam.fy * hi.y() / hi.z() - cam.fy * lo.y() / lo.z()) / (2 * h);
      CHECK(jac(0, k) == doctest::Approx(du).epsilon(1e-5));
      CHECK(jac(1, k) == doctest::Approx(dv).epsilon(1e-5));
    }
  }

  const auto near = camera_jacobian({0.1, 0.2, 1.0}, cam);
  const auto far = camera_jacobian({0.1, 0.2, 2.0}, cam);
  CHECK(far(0, 0) == doctest::Approx(near(0, 0) / 2));
  CHECK(far(1, 1) == doctest::Approx(near(1, 1) / 2));
}

TEST_CASE("projected covariance: on-axis closed form, blur floor, rotation invariance") {
  CameraModel cam = forward_camera(64, 80.0);
  const Eigen::Vector3d point(0, 0, 2.0);
  const auto jac = camera_jacobian(point, cam);

  const Eigen::Matrix3d sigma = 0.01 * Eigen::Matrix3d::Identity();
  const Eigen::Matrix2d cov =
      project_covariance(sigma, Eigen::Matrix3d::Identity(), jac, 0.3);
  CHECK(cov(0, 0) == doctest::Approx(0.01 * 40.0 * 40.0 + 0.3));
  CHECK(cov(1, 1) == doctest::Approx(0.01 * 40.0 * 40.0 + 0.3));
  CHECK(cov(0, 1) == doctest::Approx(0.0));

  const Eigen::Matrix2d degenerate =
      project_covariance(Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Identity(), jac, 0.3);
  CHECK((degenerate - 0.3 * Eigen::Matrix2d::Identity()).norm() ==
        doctest::Approx(0.0));

  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector4d q;
    for (int k = 0; k < 4; ++k) q[k] = rng.normal();
    q.normalize();
    const Eigen::Matrix3d rot_q =
        Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
    Eigen::Matrix3d a = Eigen::Matrix3d::Random();
    const Eigen::Matrix3d spd = a * a.transpose() + 0.01 * Eigen::Matrix3d::Identity();
    const Eigen::Matrix3d pose = forward_camera(64, 80.0).rotation;
    const Eigen::Matrix2d direct = project_covariance(spd, pose, jac, 0.3);
    const Eigen::Matrix2d conjugated = project_covariance(
        rot_q * spd * rot_q.transpose(), pose * rot_q.transpose(), jac, 0.3);
    CHECK((direct - conjugated).norm() < 1e-9);
  }
}

TEST_CASE("SH shading: bias, clamp, and first-order parity") {
  Eigen::Matrix<double, kShCoeffs, 1> coeffs = Eigen::Matrix<double, kShCoeffs, 1>::Zero();
  const Eigen::Vector3d dir = Eigen::Vector3d(0.3, -0.5, 0.8).normalized();
  const Eigen::Vector3d gray = eval_sh(coeffs, dir);
  CHECK(gray[0] == doctest::Approx(0.5));
  CHECK(gray[1] == doctest::Approx(0.5));
  CHECK(gray[2] == doctest::Approx(0.5));

  coeffs[0] = coeffs[1] = coeffs[2] = 1.0 / kSh0;
  const Eigen::Vector3d white = eval_sh(coeffs, dir);
  CHECK(white[0] == doctest::Approx(1.0));
  CHECK(white[2] == doctest::Approx(1.0));

  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Matrix<double, kShCoeffs, 1> c;
    for (int k = 0; k < kShCoeffs; ++k) c[k] = rng.uniform(-0.2, 0.2);
    Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
    d.normalize();
    const Eigen::Vector3d plus = eval_sh(c, d);
    const Eigen::Vector3d minus = eval_sh(c, -d);
    Eigen::Matrix<double, kShCoeffs, 1> dc_only = Eigen::Matrix<double, kShCoeffs, 1>::Zero();
    dc_only.head<3>() = c.head<3>();
    const Eigen::Vector3d dc = eval_sh(dc_only, d);
    for (int ch = 0; ch < 3; ++ch) {
      // first-order contribution flips sign, the DC part stays
      CHECK(plus[ch] - dc[ch] == doctest::Approx(-(minus[ch] - dc[ch])).epsilon(1e-12));
    }
  }
}

TEST_CASE("single opaque Gaussian centered on a pixel") {
  const GridSpec spec = lattice(1, 1, 0.1, -0.05);  // center at y = 0
  ElevationMap elev = flat_elevation(spec, GridLevel::gaussian);
  elev.values.setConstant(0.0);
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh =
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(1, kShCoeffs);
  sh(0, 0) = 0.4;
  sh(0, 1) = -0.2;
  sh(0, 2) = 0.1;
  GaussianGrid grid = init_gaussian_grid(spec, elev, sh);

  // Camera 1 m above, looking straight down: the Gaussian center projects
  // exactly onto the principal point (a pixel center).
  CameraModel cam;
  cam.fx = cam.fy = 40.0;
  cam.cx = cam.cy = 16.0;
  cam.width = cam.height = 33;
  Eigen::Matrix3d rot;
  rot.row(0) << 1, 0, 0;
  rot.row(1) << 0, 1, 0;   // y_cam = +y (down in image = forward on road)
  rot.row(2) << 0, 0, -1;  // looking down
  cam.rotation = rot;
  cam.translation = -rot * Eigen::Vector3d(0, 0, 1.0);

  const RenderOutput out = render(grid, cam);
  const Eigen::Vector3d dir = (grid.center(0) - cam.center()).normalized();
  const Eigen::Vector3d color = eval_sh(sh.row(0).transpose(), dir);
  for (int ch = 0; ch < 3; ++ch)
    CHECK(out.rgb.ch[ch](16, 16) == doctest::Approx(0.99 * color[ch]).epsilon(1e-9));
  CHECK(out.alpha(16, 16) == doctest::Approx(0.99));
  CHECK(out.coverage(16, 16));
  CHECK(out.depth(16, 16) == doctest::Approx(1.0));
}

TEST_CASE("fully transparent scene renders black with empty coverage") {
  const GridSpec spec = lattice(2, 2, 0.1, 0.2);
  GaussianGrid grid = init_gaussian_grid(
      spec, flat_elevation(spec, GridLevel::gaussian),
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(4, kShCoeffs));
  grid.opacity.setZero();
  const CameraModel cam = forward_camera(32, 40.0);
  const RenderOutput out = render(grid, cam);
  CHECK(out.rgb.ch[0].abs().maxCoeff() == 0.0);
  CHECK(out.alpha.abs().maxCoeff() == 0.0);
  CHECK_FALSE(out.coverage.any());
}

TEST_CASE("two stacked Gaussians composite by hand") {
  // Two cells along y with zero elevation; camera at the origin looking
  // along +y projects both centers onto the principal point.
  const GridSpec spec = lattice(1, 2, 0.5, 0.75);  // centers y = 1.0, 1.5
  ElevationMap elev = flat_elevation(spec, GridLevel::gaussian);
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh =
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(2, kShCoeffs);
  sh(0, 0) = 0.5;   // front (y = 1.0)
  sh(0, 1) = 0.2;
  sh(0, 2) = -0.3;
  sh(1, 0) = -0.4;  // back
  sh(1, 1) = 0.6;
  sh(1, 2) = 0.1;
  GaussianGrid grid = init_gaussian_grid(spec, elev, sh);
  grid.opacity[0] = 0.5;
  grid.opacity[1] = 1.0;  // alpha capped at 0.99

  const CameraModel cam = forward_camera(33, 32.0);
  const RenderOutput out = render(grid, cam);

  const Eigen::Vector3d a = eval_sh(sh.row(0).transpose(), Eigen::Vector3d(0, 1, 0));
  const Eigen::Vector3d b = eval_sh(sh.row(1).transpose(), Eigen::Vector3d(0, 1, 0));
  for (int ch = 0; ch < 3; ++ch)
    CHECK(out.rgb.ch[ch](16, 16) ==
          doctest::Approx(0.5 * a[ch] + 0.5 * 0.99 * b[ch]).epsilon(1e-6));
  CHECK(out.alpha(16, 16) == doctest::Approx(1.0 - 0.5 * 0.01));
}

TEST_CASE("render is deterministic across runs and thread counts") {
  Rng rng(123);
  auto scene = testing::make_random_scene(rng, 48, 8);
  RenderConfig one;
  one.threads = 1;
  RenderConfig four;
  four.threads = 4;
  const RenderOutput a = render(scene.grid, scene.camera, one);
  const RenderOutput b = render(scene.grid, scene.camera, four);
  const RenderOutput c = render(scene.grid, scene.camera, four);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK((a.rgb.ch[ch] == b.rgb.ch[ch]).all());
    CHECK((b.rgb.ch[ch] == c.rgb.ch[ch]).all());
  }
  CHECK((a.alpha == b.alpha).all());
  CHECK((a.depth == b.depth).all());
}

TEST_CASE("depth ties break deterministically on the lattice index") {
  const GridSpec spec = lattice(2, 1, 0.2, 0.9);  // two cells, same depth
  ElevationMap elev = flat_elevation(spec, GridLevel::gaussian);
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh =
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(2, kShCoeffs);
  GaussianGrid grid = init_gaussian_grid(spec, elev, sh);
  const CameraModel cam = forward_camera(33, 32.0);
  const auto projected = project_gaussians(grid, cam);
  REQUIRE(projected.size() == 2);
  CHECK(projected[0].depth == projected[1].depth);
  CHECK(projected[0].source_index == 0);
  CHECK(projected[1].source_index == 1);
}

TEST_CASE("optimized renderer matches the per-pixel oracle") {
  Rng rng(2024);
  RenderConfig config;
  config.threads = 2;
  for (int trial = 0; trial < 30; ++trial) {
    auto scene = testing::make_random_scene(rng, 8 + 8 * rng.uniform_int(0, 5), 8);
    const RenderOutput fast = render(scene.grid, scene.camera, config);
    const RenderOutput slow = render_reference(scene.grid, scene.camera, config);
    for (int ch = 0; ch < 3; ++ch)
      CHECK((fast.rgb.ch[ch] - slow.rgb.ch[ch]).abs().maxCoeff() < 1e-5);
    CHECK((fast.alpha - slow.alpha).abs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("image and alpha stay inside [0, 1] on random scenes") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto scene = testing::make_random_scene(rng, 32, 10);
    const RenderOutput out = render(scene.grid, scene.camera);
    CHECK(out.alpha.minCoeff() >= 0.0);
    CHECK(out.alpha.maxCoeff() <= 1.0);
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(out.rgb.ch[ch].minCoeff() >= 0.0);
      CHECK(out.rgb.ch[ch].maxCoeff() <= 1.0 + 1e-12);
    }
    // coverage <=> alpha above threshold
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        CHECK(out.coverage(r, c) == (out.alpha(r, c) > 1e-3));
  }
}

TEST_CASE("well-separated depth ordering is stable under tiny camera motion") {
  const GridSpec spec = lattice(1, 2, 0.5, 0.75);
  GaussianGrid grid = init_gaussian_grid(
      spec, flat_elevation(spec, GridLevel::gaussian),
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(2, kShCoeffs));
  CameraModel cam = forward_camera(33, 32.0);
  const auto before = project_gaussians(grid, cam);
  cam.translation.z() -= 1e-9;  // nudge along the optical axis (z_cam = +y)
  const auto after = project_gaussians(grid, cam);
  REQUIRE(before.size() == 2);
  REQUIRE(after.size() == 2);
  CHECK(before[0].source_index == after[0].source_index);
  CHECK(before[1].source_index == after[1].source_index);
}

TEST_CASE("zero-size camera image is rejected") {
  const GridSpec spec = lattice(1, 1, 0.1, 0.2);
  GaussianGrid grid = init_gaussian_grid(
      spec, flat_elevation(spec, GridLevel::gaussian),
      Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>::Zero(1, kShCoeffs));
  CameraModel cam = forward_camera(32, 40.0);
  cam.width = 0;
  CHECK_THROWS_AS(render(grid, cam), std::invalid_argument);
}
