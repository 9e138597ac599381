#pragma once

#include <string>
#include <vector>

#include "roadgs/grid.hpp"
#include "roadgs/image.hpp"
#include "roadgs/splat.hpp"

namespace roadgs {

/// Smooth-L1 elevation loss summed over grids valid in the ground truth.
/// beta is the quadratic/linear transition (meters); beta -> 0 recovers
/// plain L1.
double elevation_loss(const ElevationMap& pred, const ElevationMap& gt,
                      double beta = 0.01);

struct SsimResult {
  double mean = 0.0;
  Array2d map;   // per-pixel SSIM, channels averaged; 0 outside valid
  Mask2d valid;  // positions whose 11x11 window is fully usable
};

/// Standard SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, channel mean then pixel mean over windows fully inside the
/// image. Throws if either image is smaller than the window.
SsimResult ssim(const Image& a, const Image& b);

/// SSIM restricted to windows fully inside `coverage`.
SsimResult ssim_masked(const Image& a, const Image& b, const Mask2d& coverage);

/// d(mean SSIM)/d(a), masked the same way as ssim_masked.
Image ssim_backward(const Image& a, const Image& b, const Mask2d& coverage);

/// lambda * masked L1 + (1 - lambda) * (1 - masked SSIM), summed over frames.
/// Both terms are restricted to each render's coverage. Throws when every
/// frame has empty coverage.
double rgb_loss(const std::vector<RenderOutput>& rendered,
                const std::vector<Image>& actual, double lambda = 0.5);

struct RgbLossGrad {
  double loss = 0.0;
  std::vector<Image> d_rendered;  // adjoint per frame, zero outside coverage
};

RgbLossGrad rgb_loss_with_grad(const std::vector<RenderOutput>& rendered,
                               const std::vector<Image>& actual, double lambda = 0.5);

struct ElevationMetrics {
  double aae_m = 0.0;
  double rmse_m = 0.0;
  double pct_gt_5mm = 0.0;  // strict |e| > 5 mm, percent of valid grids
};

/// Errors over grids valid in both maps; throws when that set is empty.
ElevationMetrics elevation_metrics(const ElevationMap& pred, const ElevationMap& gt);

struct SegmentAae {
  std::vector<double> aae_m;      // near to far
  std::vector<bool> has_valid;    // false marks an empty segment
};

/// Valid grids split by longitudinal row into n contiguous segments (nearest
/// segments take the extra rows when the split is uneven).
SegmentAae segment_aae(const ElevationMap& pred, const ElevationMap& gt,
                       int n_segments = 15);

/// 10 log10(1 / MSE) over all pixels and channels; identical images report
/// the 100 dB cap.
double psnr(const Image& a, const Image& b);

inline constexpr double kPsnrCapDb = 100.0;

struct MetricReport {
  double aae_cm = 0.0;
  double rmse_cm = 0.0;
  double pct_gt_5mm = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  bool has_elevation = false;
  bool has_image = false;
  std::vector<double> segment_aae_cm;
  std::vector<bool> segment_has_valid;

  std::string to_text() const;
  std::string to_json() const;
};

}  // namespace roadgs
