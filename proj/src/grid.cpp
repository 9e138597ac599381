#include "roadgs/grid.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace roadgs {

const char* to_string(GridLevel level) {
  switch (level) {
    case GridLevel::geometry: return "geometry";
    case GridLevel::texture: return "texture";
    case GridLevel::gaussian: return "gaussian";
  }
  return "?";
}

namespace {

int level_factor(const GridSpec& spec, GridLevel level) {
  switch (level) {
    case GridLevel::geometry: return 1;
    case GridLevel::texture: return spec.texture_factor;
    case GridLevel::gaussian: return spec.texture_factor * spec.gaussian_factor;
  }
  return 1;
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

int derive_count(double extent, double interval) {
  const int n = static_cast<int>(std::lround(extent / interval));
  return n < 1 ? 1 : n;
}

}  // namespace

int GridSpec::nx(GridLevel level) const { return nx_g * level_factor(*this, level); }
int GridSpec::ny(GridLevel level) const { return ny_g * level_factor(*this, level); }
double GridSpec::interval(GridLevel level) const {
  return geom_interval_m / level_factor(*this, level);
}

GridSpec make_grid_spec(const GridSpecOverrides& o) {
  GridSpec spec;
  const double interval = o.geom_interval_m.value_or(spec.geom_interval_m);
  if (!(interval > 0.0)) fail("make_grid_spec: geom_interval_m must be positive");

  if (o.roi_width_m && !(*o.roi_width_m > 0.0))
    fail("make_grid_spec: roi_width_m must be positive");
  if (o.roi_length_m && !(*o.roi_length_m > 0.0))
    fail("make_grid_spec: roi_length_m must be positive");

  // Counts win; an explicit ROI extent must agree with them within one pitch.
  const int nx = o.nx_g ? *o.nx_g
                        : (o.roi_width_m ? derive_count(*o.roi_width_m, interval) : spec.nx_g);
  const int ny = o.ny_g ? *o.ny_g
                        : (o.roi_length_m ? derive_count(*o.roi_length_m, interval) : spec.ny_g);
  if (nx < 1 || ny < 1) fail("make_grid_spec: grid counts must be >= 1");

  if (o.nx_g && o.roi_width_m && std::abs(nx * interval - *o.roi_width_m) > interval) {
    std::ostringstream msg;
    msg << "make_grid_spec: roi_width_m=" << *o.roi_width_m << " conflicts with nx_g="
        << nx << " * geom_interval_m=" << interval;
    fail(msg.str());
  }
  if (o.ny_g && o.roi_length_m && std::abs(ny * interval - *o.roi_length_m) > interval) {
    std::ostringstream msg;
    msg << "make_grid_spec: roi_length_m=" << *o.roi_length_m << " conflicts with ny_g="
        << ny << " * geom_interval_m=" << interval;
    fail(msg.str());
  }

  spec.geom_interval_m = interval;
  spec.nx_g = nx;
  spec.ny_g = ny;
  spec.roi_width_m = nx * interval;   // snapped
  spec.roi_length_m = ny * interval;  // snapped
  spec.roi_start_m = o.roi_start_m.value_or(spec.roi_start_m);
  spec.texture_factor = o.texture_factor.value_or(spec.texture_factor);
  spec.gaussian_factor = o.gaussian_factor.value_or(spec.gaussian_factor);
  spec.h_min_m = o.h_min_m.value_or(spec.h_min_m);
  spec.h_max_m = o.h_max_m.value_or(spec.h_max_m);
  spec.nz_anchors = o.nz_anchors.value_or(spec.nz_anchors);
  spec.nb_bins = o.nb_bins.value_or(spec.nb_bins);

  if (spec.texture_factor < 1 || spec.gaussian_factor < 1)
    fail("make_grid_spec: texture_factor and gaussian_factor must be >= 1");
  if (!(spec.h_min_m < 0.0 && 0.0 < spec.h_max_m))
    fail("make_grid_spec: elevation bounds must satisfy h_min_m < 0 < h_max_m");
  if (spec.nz_anchors < 2) fail("make_grid_spec: nz_anchors must be >= 2");
  if (spec.nb_bins < 2) fail("make_grid_spec: nb_bins must be >= 2");
  return spec;
}

ElevationMap flat_elevation(const GridSpec& spec, GridLevel level) {
  ElevationMap map;
  map.values = Array2d::Zero(spec.ny(level), spec.nx(level));
  map.valid = Mask2d::Constant(spec.ny(level), spec.nx(level), true);
  map.level = level;
  return map;
}

void validate_elevation(const ElevationMap& map, const GridSpec& spec) {
  const int ny = spec.ny(map.level);
  const int nx = spec.nx(map.level);
  if (map.rows() != ny || map.cols() != nx) {
    std::ostringstream msg;
    msg << "elevation map shape " << map.rows() << "x" << map.cols() << " does not match "
        << to_string(map.level) << " level " << ny << "x" << nx;
    fail(msg.str());
  }
  if (map.valid.rows() != map.values.rows() || map.valid.cols() != map.values.cols())
    fail("elevation validity mask shape mismatch");
  for (int r = 0; r < map.rows(); ++r)
    for (int c = 0; c < map.cols(); ++c)
      if (map.valid(r, c) &&
          (map.values(r, c) < spec.h_min_m || map.values(r, c) > spec.h_max_m)) {
        std::ostringstream msg;
        msg << "elevation value " << map.values(r, c) << " at (" << r << "," << c
            << ") outside [" << spec.h_min_m << ", " << spec.h_max_m << "]";
        fail(msg.str());
      }
}

double center_x(const GridSpec& spec, GridLevel level, int col) {
  const double pitch = spec.interval(level);
  return -0.5 * spec.nx(level) * pitch + (col + 0.5) * pitch;
}

double center_y(const GridSpec& spec, GridLevel level, int row) {
  const double pitch = spec.interval(level);
  return spec.roi_start_m + (row + 0.5) * pitch;
}

std::vector<Eigen::Vector2d> grid_centers(const GridSpec& spec, GridLevel level) {
  const int nx = spec.nx(level);
  const int ny = spec.ny(level);
  std::vector<Eigen::Vector2d> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  for (int row = 0; row < ny; ++row)
    for (int col = 0; col < nx; ++col)
      centers.emplace_back(center_x(spec, level, col), center_y(spec, level, row));
  return centers;
}

Array2d upsample_bilinear(const Array2d& src, int target_rows, int target_cols) {
  const int sr = static_cast<int>(src.rows());
  const int sc = static_cast<int>(src.cols());
  if (sr < 1 || sc < 1) fail("upsample_bilinear: empty source");
  if (target_rows % sr != 0 || target_cols % sc != 0)
    fail("upsample_bilinear: target dimensions must be integer multiples of the source");
  const double fr = static_cast<double>(target_rows) / sr;
  const double fc = static_cast<double>(target_cols) / sc;

  Array2d out(target_rows, target_cols);
  for (int r = 0; r < target_rows; ++r) {
    // Half-pixel alignment: destination sample r maps to (r + 0.5)/f - 0.5.
    const double y = (r + 0.5) / fr - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, sr - 1);
    const int y1 = std::min(y0 + 1, sr - 1);
    const double wy = std::clamp(y - y0, 0.0, 1.0);
    for (int c = 0; c < target_cols; ++c) {
      const double x = (c + 0.5) / fc - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, sc - 1);
      const int x1 = std::min(x0 + 1, sc - 1);
      const double wx = std::clamp(x - x0, 0.0, 1.0);
      out(r, c) = (1.0 - wy) * ((1.0 - wx) * src(y0, x0) + wx * src(y0, x1)) +
                  wy * ((1.0 - wx) * src(y1, x0) + wx * src(y1, x1));
    }
  }
  return out;
}

Array2d downsample_area(const Array2d& src, int factor) {
  if (factor < 1) fail("downsample_area: factor must be >= 1");
  if (src.rows() % factor != 0 || src.cols() % factor != 0)
    fail("downsample_area: dimensions must be divisible by the factor");
  const int tr = static_cast<int>(src.rows()) / factor;
  const int tc = static_cast<int>(src.cols()) / factor;
  Array2d out(tr, tc);
  const double norm = 1.0 / (static_cast<double>(factor) * factor);
  for (int r = 0; r < tr; ++r)
    for (int c = 0; c < tc; ++c)
      out(r, c) = src.block(r * factor, c * factor, factor, factor).sum() * norm;
  return out;
}

Array2d upsample_bilinear_adjoint(const Array2d& grad, int src_rows, int src_cols) {
  const int tr = static_cast<int>(grad.rows());
  const int tc = static_cast<int>(grad.cols());
  if (tr % src_rows != 0 || tc % src_cols != 0)
    fail("upsample_bilinear_adjoint: dimensions must be integer multiples of the source");
  const double fr = static_cast<double>(tr) / src_rows;
  const double fc = static_cast<double>(tc) / src_cols;
  Array2d out = Array2d::Zero(src_rows, src_cols);
  for (int r = 0; r < tr; ++r) {
    const double y = (r + 0.5) / fr - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, src_rows - 1);
    const int y1 = std::min(y0 + 1, src_rows - 1);
    const double wy = std::clamp(y - y0, 0.0, 1.0);
    for (int c = 0; c < tc; ++c) {
      const double x = (c + 0.5) / fc - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, src_cols - 1);
      const int x1 = std::min(x0 + 1, src_cols - 1);
      const double wx = std::clamp(x - x0, 0.0, 1.0);
      const double g = grad(r, c);
      out(y0, x0) += (1.0 - wy) * (1.0 - wx) * g;
      out(y0, x1) += (1.0 - wy) * wx * g;
      out(y1, x0) += wy * (1.0 - wx) * g;
      out(y1, x1) += wy * wx * g;
    }
  }
  return out;
}

ElevationMap upsample_elevation(const ElevationMap& map, const GridSpec& spec,
                                GridLevel target) {
  const int tr = spec.ny(target);
  const int tc = spec.nx(target);
  ElevationMap out;
  out.values = upsample_bilinear(map.values, tr, tc);
  out.valid = Mask2d::Constant(tr, tc, true);
  if (!map.valid.all()) {
    // A target cell is valid only if all source cells it interpolates are.
    Array2d validity = upsample_bilinear(
        map.valid.cast<double>().matrix().array(), tr, tc);
    out.valid = validity > 1.0 - 1e-12;
  }
  out.level = target;
  return out;
}

}  // namespace roadgs
