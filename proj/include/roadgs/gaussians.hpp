#pragma once

#include <Eigen/Core>

#include "roadgs/grid.hpp"

namespace roadgs {

inline constexpr int kShOrder = 1;
inline constexpr int kShBasis = (kShOrder + 1) * (kShOrder + 1);  // 4
inline constexpr int kShCoeffs = 3 * kShBasis;                    // 12

/// Splattable scene on the Gaussian-level BEV lattice. Horizontal centers
/// are implicit in the lattice; only the vertical coordinate is stored (the
/// elevation map). SH coefficients are band-major per Gaussian:
/// [dc_r, dc_g, dc_b, a1_r, a1_g, a1_b, a2_*, a3_*].
struct GaussianGrid {
  GridSpec spec;
  ElevationMap elevation;                              // gaussian level
  Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs> sh; // N x 12, row-major grid order
  Eigen::Vector3d scale = Eigen::Vector3d::Constant(0.002);  // shared by all
  Eigen::Matrix<double, Eigen::Dynamic, 4> rotation;   // unit quaternions (w,x,y,z)
  Eigen::VectorXd opacity;                             // in [0,1]

  std::int64_t count() const { return sh.rows(); }
  int nx() const { return spec.nx(GridLevel::gaussian); }
  int ny() const { return spec.ny(GridLevel::gaussian); }

  /// World position of Gaussian g (row-major lattice index).
  Eigen::Vector3d center(std::int64_t g) const {
    const int row = static_cast<int>(g / nx());
    const int col = static_cast<int>(g % nx());
    return {center_x(spec, GridLevel::gaussian, col),
            center_y(spec, GridLevel::gaussian, row),
            elevation.values(row, col)};
  }
};

/// Builds a grid with identity rotations, stock scale and opacity 1, and the
/// given elevation / SH fields (both at Gaussian resolution). Throws on
/// shape mismatch or invariant violation.
GaussianGrid init_gaussian_grid(const GridSpec& spec, const ElevationMap& elevation,
                                const Eigen::Matrix<double, Eigen::Dynamic, kShCoeffs>& sh);

/// Throws std::invalid_argument when any invariant fails: quaternions unit
/// to 1e-6, opacities in [0,1], scales positive, array lengths matching the
/// lattice.
void validate_gaussian_grid(const GaussianGrid& grid);

/// Rounds every field through the f32 storage precision so in-memory scenes
/// match their serialized form bit-exactly.
GaussianGrid quantize_to_storage(const GaussianGrid& grid);

}  // namespace roadgs
