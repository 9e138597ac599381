#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace roadgs {

using Array2d = Eigen::ArrayXXd;
using Mask2d = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Resolution levels of the BEV lattice. Geometry is the coarse elevation
/// grid; texture refines it by texture_factor per axis; the Gaussian lattice
/// refines texture by gaussian_factor per axis.
enum class GridLevel { geometry, texture, gaussian };

const char* to_string(GridLevel level);

/// Road-frame ROI geometry and grid resolutions.
///
/// Conventions: x lateral (right positive), y longitudinal (forward
/// positive), z up. The elevation reference plane z=0 lies below the camera.
/// Grids are stored row-major with rows indexing y (near to far) and columns
/// indexing x (left to right).
struct GridSpec {
  double roi_width_m = 1.92;
  double roi_length_m = 4.92;
  double roi_start_m = 0.3;
  double geom_interval_m = 0.03;
  int nx_g = 64;
  int ny_g = 164;
  int texture_factor = 4;
  int gaussian_factor = 2;
  double h_min_m = -0.20;
  double h_max_m = 0.20;
  int nz_anchors = 20;
  int nb_bins = 40;

  int nx(GridLevel level) const;
  int ny(GridLevel level) const;
  double interval(GridLevel level) const;
  std::int64_t cell_count(GridLevel level) const {
    return static_cast<std::int64_t>(nx(level)) * ny(level);
  }
};

/// Partial configuration for make_grid_spec. Unset fields take the stock
/// configuration (64x164 geometry cells at 3 cm, texture x4, Gaussian x2,
/// elevation bounds +/-20 cm, 20 anchors, 40 bins).
struct GridSpecOverrides {
  std::optional<double> roi_width_m;
  std::optional<double> roi_length_m;
  std::optional<double> roi_start_m;
  std::optional<double> geom_interval_m;
  std::optional<int> nx_g;
  std::optional<int> ny_g;
  std::optional<int> texture_factor;
  std::optional<int> gaussian_factor;
  std::optional<double> h_min_m;
  std::optional<double> h_max_m;
  std::optional<int> nz_anchors;
  std::optional<int> nb_bins;
};

/// Builds a validated GridSpec. Grid counts win over ROI extents: when both
/// are supplied they must agree within one pitch, and the stored extent is
/// snapped to count * pitch. Throws std::invalid_argument naming the
/// conflicting fields otherwise.
GridSpec make_grid_spec(const GridSpecOverrides& overrides = {});

/// Per-grid elevation with validity mask. rows = ny, cols = nx at `level`.
struct ElevationMap {
  Array2d values;
  Mask2d valid;
  GridLevel level = GridLevel::geometry;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

/// All-valid map of zeros shaped for `level`.
ElevationMap flat_elevation(const GridSpec& spec, GridLevel level);

/// Throws if shape does not match `spec` at the map's level or if any valid
/// value leaves [h_min_m, h_max_m].
void validate_elevation(const ElevationMap& map, const GridSpec& spec);

/// Cell-center horizontal coordinates in the road frame, row-major
/// (y varies slowest). x is centered on the camera axis, y starts at
/// roi_start_m.
std::vector<Eigen::Vector2d> grid_centers(const GridSpec& spec, GridLevel level);

double center_x(const GridSpec& spec, GridLevel level, int col);
double center_y(const GridSpec& spec, GridLevel level, int row);

/// Half-pixel-aligned bilinear upsampling; target dims must be integer
/// multiples of the source dims. Constant fields are preserved exactly.
Array2d upsample_bilinear(const Array2d& src, int target_rows, int target_cols);

/// Mean over factor x factor blocks; the inverse bridge used when reporting
/// Gaussian-level elevation at geometry resolution.
Array2d downsample_area(const Array2d& src, int factor);

/// Transpose of upsample_bilinear: scatters a fine-lattice adjoint back to
/// the coarse lattice (exact chain rule for parameters kept at the coarse
/// resolution).
Array2d upsample_bilinear_adjoint(const Array2d& grad, int src_rows, int src_cols);

ElevationMap upsample_elevation(const ElevationMap& map, const GridSpec& spec,
                                GridLevel target);

}  // namespace roadgs
