#pragma once

#include <Eigen/Core>
#include <vector>

#include "roadgs/camera.hpp"
#include "roadgs/grid.hpp"

namespace roadgs {

/// Dense C x H x W feature tensor in perspective view. Channel-major
/// storage: plane c is an H x W array.
struct FeatureMap {
  std::vector<Array2d> planes;

  FeatureMap() = default;
  FeatureMap(int channels, int height, int width)
      : planes(channels, Array2d::Zero(height, width)) {}

  int channels() const { return static_cast<int>(planes.size()); }
  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
};

/// 4D anchor-feature tensor C x (nx*ny) x nz plus the single-channel logits
/// used to weight anchors. Grid cells are row-major, anchors run from
/// h_min to h_max.
struct VoxelFeature {
  // features[c] is (nx*ny) x nz; logits is (nx*ny) x nz.
  std::vector<Array2d> features;
  Array2d logits;

  int channels() const { return static_cast<int>(features.size()); }
  std::int64_t cells() const { return logits.rows(); }
  int anchors() const { return static_cast<int>(logits.cols()); }
};

/// C x ny x nx BEV feature at a stated grid level (or bins x ny x nx for
/// elevation decoding).
struct BevFeature {
  std::vector<Array2d> planes;  // each ny x nx
  GridLevel level = GridLevel::geometry;

  int channels() const { return static_cast<int>(planes.size()); }
  int rows() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int cols() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
};

/// One world point per (geometry cell, anchor): grid center with z swept
/// uniformly over [h_min, h_max], both endpoints included. Row-major cells,
/// anchors innermost.
Eigen::Matrix<double, Eigen::Dynamic, 3> build_anchor_voxels(const GridSpec& spec);

/// Anchor heights shared by every cell.
Eigen::VectorXd anchor_heights(const GridSpec& spec);

/// Bilinear sample of fmap at pixel positions (u along columns, v along
/// rows). Corners outside the image clamp to the edge; points with
/// mask=false yield zero vectors. Returns one feature row per point.
Eigen::MatrixXd sample_bilinear(const FeatureMap& fmap, const Eigen::ArrayXd& u,
                                const Eigen::ArrayXd& v,
                                const Eigen::Array<bool, Eigen::Dynamic, 1>& mask);

/// Collapses the anchor dimension with softmax(logits) weights, yielding a
/// geometry-level BEV feature.
BevFeature fuse_height(const VoxelFeature& vox, const GridSpec& spec);

/// Offset-bin centers: nb_bins values spanning [h_min/2, h_max/2] inclusive.
Eigen::VectorXd bin_values(const GridSpec& spec);

/// Softmax-weighted sum of bin values per cell (classification-regression
/// decoding). logits must carry nb_bins channels at geometry level.
ElevationMap decode_offsets(const BevFeature& logits, const Eigen::VectorXd& bins);

/// Squashes a raw scalar into [h_min/2, h_max/2] with an affine tanh map;
/// reduces to (h_max/2)*tanh(raw) for symmetric bounds.
double scale_reference(double raw, const GridSpec& spec);

struct ComposedElevation {
  ElevationMap map;
  int clamped = 0;  // cells clipped to [h_min, h_max]
};

/// Final elevation = reference + offsets, clamped into bounds with a clamp
/// count for diagnostics.
ComposedElevation compose_elevation(double reference, const ElevationMap& offsets,
                                    const GridSpec& spec);

struct GuidedQueryResult {
  BevFeature features;  // texture level
  Mask2d valid;         // projection validity per cell
};

/// One projected sample per texture cell at its predicted elevation; invalid
/// projections yield zero features.
GuidedQueryResult elevation_guided_query(const FeatureMap& fmap, const CameraModel& cam,
                                         const GridSpec& spec,
                                         const ElevationMap& elevation);

}  // namespace roadgs
