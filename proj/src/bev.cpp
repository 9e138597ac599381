#include "roadgs/bev.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace roadgs {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

/// Softmax over a row vector with max subtraction; saturation-safe for
/// logits at +-1000.
Eigen::ArrayXd stable_softmax(const Eigen::ArrayXd& logits) {
  const double peak = logits.maxCoeff();
  Eigen::ArrayXd w = (logits - peak).exp();
  return w / w.sum();
}
}  // namespace

Eigen::VectorXd anchor_heights(const GridSpec& spec) {
  return Eigen::VectorXd::LinSpaced(spec.nz_anchors, spec.h_min_m, spec.h_max_m);
}

Eigen::Matrix<double, Eigen::Dynamic, 3> build_anchor_voxels(const GridSpec& spec) {
  const auto centers = grid_centers(spec, GridLevel::geometry);
  const Eigen::VectorXd heights = anchor_heights(spec);
  Eigen::Matrix<double, Eigen::Dynamic, 3> points(
      static_cast<Eigen::Index>(centers.size()) * spec.nz_anchors, 3);
  Eigen::Index out = 0;
  for (const auto& c : centers)
    for (int z = 0; z < spec.nz_anchors; ++z, ++out)
      points.row(out) << c.x(), c.y(), heights[z];
  return points;
}

Eigen::MatrixXd sample_bilinear(const FeatureMap& fmap, const Eigen::ArrayXd& u,
                                const Eigen::ArrayXd& v,
                                const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
  if (fmap.channels() == 0 || fmap.height() <= 0 || fmap.width() <= 0)
    fail("sample_bilinear: empty feature map");
  if (u.size() != v.size() || u.size() != mask.size())
    fail("sample_bilinear: coordinate/mask length mismatch");
  const int h = fmap.height();
  const int w = fmap.width();
  const int channels = fmap.channels();

  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(u.size(), channels);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!mask[i]) continue;
    const double x = u[i];
    const double y = v[i];
    if (!std::isfinite(x) || !std::isfinite(y))
      fail("sample_bilinear: non-finite coordinate with mask set");
    const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, w - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wx = std::clamp(x - x0, 0.0, 1.0);
    const double wy = std::clamp(y - y0, 0.0, 1.0);
    for (int c = 0; c < channels; ++c) {
      const Array2d& plane = fmap.planes[c];
      features(i, c) = (1.0 - wy) * ((1.0 - wx) * plane(y0, x0) + wx * plane(y0, x1)) +
                       wy * ((1.0 - wx) * plane(y1, x0) + wx * plane(y1, x1));
    }
  }
  return features;
}

BevFeature fuse_height(const VoxelFeature& vox, const GridSpec& spec) {
  const std::int64_t cells = spec.cell_count(GridLevel::geometry);
  if (vox.logits.rows() != cells || vox.anchors() != spec.nz_anchors)
    fail("fuse_height: voxel logits shape does not match the grid spec");
  for (const auto& plane : vox.features)
    if (plane.rows() != cells || plane.cols() != spec.nz_anchors)
      fail("fuse_height: voxel feature shape does not match the grid spec");

  const int nx = spec.nx(GridLevel::geometry);
  const int ny = spec.ny(GridLevel::geometry);
  BevFeature bev;
  bev.level = GridLevel::geometry;
  bev.planes.assign(vox.features.size(), Array2d::Zero(ny, nx));
  for (std::int64_t g = 0; g < cells; ++g) {
    const Eigen::ArrayXd weights = stable_softmax(vox.logits.row(g).transpose());
    const int row = static_cast<int>(g / nx);
    const int col = static_cast<int>(g % nx);
    for (int c = 0; c < vox.channels(); ++c)
      bev.planes[c](row, col) =
          (vox.features[c].row(g).transpose() * weights).sum();
  }
  return bev;
}

Eigen::VectorXd bin_values(const GridSpec& spec) {
  return Eigen::VectorXd::LinSpaced(spec.nb_bins, spec.h_min_m / 2.0, spec.h_max_m / 2.0);
}

ElevationMap decode_offsets(const BevFeature& logits, const Eigen::VectorXd& bins) {
  if (logits.channels() != bins.size()) {
    std::ostringstream msg;
    msg << "decode_offsets: " << logits.channels() << " logit channels vs " << bins.size()
        << " bins";
    fail(msg.str());
  }
  const int ny = logits.rows();
  const int nx = logits.cols();
  ElevationMap out;
  out.level = GridLevel::geometry;
  out.values = Array2d::Zero(ny, nx);
  out.valid = Mask2d::Constant(ny, nx, true);
  Eigen::ArrayXd cell(bins.size());
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c) {
      for (Eigen::Index b = 0; b < bins.size(); ++b) cell[b] = logits.planes[b](r, c);
      out.values(r, c) = (stable_softmax(cell) * bins.array()).sum();
    }
  return out;
}

double scale_reference(double raw, const GridSpec& spec) {
  if (!std::isfinite(raw)) fail("scale_reference: non-finite input");
  const double lo = spec.h_min_m / 2.0;
  const double hi = spec.h_max_m / 2.0;
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  return mid + half * std::tanh(raw);
}

ComposedElevation compose_elevation(double reference, const ElevationMap& offsets,
                                    const GridSpec& spec) {
  if (offsets.level != GridLevel::geometry)
    fail("compose_elevation: offsets must be at geometry level");
  validate_elevation(offsets, spec);  // shape; offsets live within bin range
  ComposedElevation out;
  out.map = offsets;
  for (int r = 0; r < out.map.rows(); ++r)
    for (int c = 0; c < out.map.cols(); ++c) {
      const double h = reference + offsets.values(r, c);
      if (h >= spec.h_max_m || h <= spec.h_min_m) ++out.clamped;  // saturated
      out.map.values(r, c) = std::clamp(h, spec.h_min_m, spec.h_max_m);
    }
  return out;
}

GuidedQueryResult elevation_guided_query(const FeatureMap& fmap, const CameraModel& cam,
                                         const GridSpec& spec,
                                         const ElevationMap& elevation) {
  if (elevation.level != GridLevel::texture)
    fail("elevation_guided_query: elevation must be upsampled to texture level");
  validate_elevation(elevation, spec);

  const int nx = spec.nx(GridLevel::texture);
  const int ny = spec.ny(GridLevel::texture);
  const std::int64_t cells = spec.cell_count(GridLevel::texture);

  Eigen::Matrix<double, Eigen::Dynamic, 3> points(cells, 3);
  std::int64_t g = 0;
  for (int row = 0; row < ny; ++row)
    for (int col = 0; col < nx; ++col, ++g)
      points.row(g) << center_x(spec, GridLevel::texture, col),
          center_y(spec, GridLevel::texture, row), elevation.values(row, col);

  const ProjectedPoints proj = project_points(points, cam);
  const Eigen::MatrixXd features = sample_bilinear(fmap, proj.u, proj.v, proj.valid);

  GuidedQueryResult result;
  result.features.level = GridLevel::texture;
  result.features.planes.assign(fmap.channels(), Array2d::Zero(ny, nx));
  result.valid = Mask2d::Constant(ny, nx, false);
  g = 0;
  for (int row = 0; row < ny; ++row)
    for (int col = 0; col < nx; ++col, ++g) {
      result.valid(row, col) = proj.valid[g];
      for (int c = 0; c < fmap.channels(); ++c)
        result.features.planes[c](row, col) = features(g, c);
    }
  return result;
}

}  // namespace roadgs
