#include "roadgs/gaussians.hpp"

#include <sstream>
#include <stdexcept>

namespace roadgs {

GaussianGrid init_gaussian_grid(const GridSpec& spec, const ElevationMap& elevation,
                                const Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>& sh) {
  if (elevation.level != GridLevel::gaussian)
    throw std::invalid_argument("init_gaussian_grid: elevation must be at gaussian level");
  validate_elevation(elevation, spec);
  const std::int64_t n = spec.cell_count(GridLevel::gaussian);
  if (sh.rows() != n) {
    std::ostringstream msg;
    msg << "init_gaussian_grid: sh rows " << sh.rows() << " != gaussian cell count " << n;
    throw std::invalid_argument(msg.str());
  }

  GaussianGrid grid;
  grid.spec = spec;
  grid.elevation = elevation;
  grid.sh = sh;
  grid.scale = Eigen::Vector3d::Constant(0.002);
  grid.rotation.resize(n, 4);
  grid.rotation.col(0).setOnes();   // identity (w,x,y,z)
  grid.rotation.rightCols<3>().setZero();
  grid.opacity = Eigen::VectorXd::Ones(n);
  validate_gaussian_grid(grid);
  return grid;
}

void validate_gaussian_grid(const GaussianGrid& grid) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  const std::int64_t n = grid.spec.cell_count(GridLevel::gaussian);
  if (grid.sh.rows() != n) fail("gaussian grid: sh array length mismatch");
  if (grid.rotation.rows() != n) fail("gaussian grid: rotation array length mismatch");
  if (grid.opacity.size() != n) fail("gaussian grid: opacity array length mismatch");
  if (grid.elevation.level != GridLevel::gaussian)
    fail("gaussian grid: elevation must be at gaussian level");
  validate_elevation(grid.elevation, grid.spec);
  if (!(grid.scale.minCoeff() > 0.0)) fail("gaussian grid: scales must be positive");
  for (std::int64_t g = 0; g < n; ++g) {
    if (std::abs(grid.rotation.row(g).norm() - 1.0) > 1e-6) {
      std::ostringstream msg;
      msg << "gaussian grid: quaternion " << g << " is not unit norm (1e-6)";
      fail(msg.str());
    }
    if (grid.opacity[g] < 0.0 || grid.opacity[g] > 1.0) {
      std::ostringstream msg;
      msg << "gaussian grid: opacity " << g << " outside [0, 1]";
      fail(msg.str());
    }
  }
}

namespace {
double through_f32(double x) { return static_cast<double>(static_cast<float>(x)); }
}  // namespace

GaussianGrid quantize_to_storage(const GaussianGrid& grid) {
  GaussianGrid out = grid;
  auto quantize = [](auto& array) {
    for (Eigen::Index i = 0; i < array.size(); ++i)
      array.data()[i] = through_f32(array.data()[i]);
  };
  quantize(out.elevation.values);
  quantize(out.sh);
  quantize(out.rotation);
  quantize(out.opacity);
  for (int k = 0; k < 3; ++k) out.scale[k] = through_f32(out.scale[k]);
  return out;
}

}  // namespace roadgs
