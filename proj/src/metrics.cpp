#include "roadgs/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace roadgs {

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

const Eigen::Matrix<double, kWindow, 1>& gaussian_kernel() {
  static const Eigen::Matrix<double, kWindow, 1> kernel = [] {
    Eigen::Matrix<double, kWindow, 1> k;
    const double sigma = 1.5;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kHalf;
      k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    k /= k.sum();
    return k;
  }();
  return kernel;
}

/// Separable correlation with zero padding; exact wherever the window is
/// fully inside, which is the only place results are read.
Array2d filter_window(const Array2d& img) {
  const auto& k = gaussian_kernel();
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Array2d rows = Array2d::Zero(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      const int lo = std::max(0, c - kHalf);
      const int hi = std::min(w - 1, c + kHalf);
      for (int t = lo; t <= hi; ++t) acc += k[t - c + kHalf] * img(r, t);
      rows(r, c) = acc;
    }
  Array2d out = Array2d::Zero(h, w);
  for (int c = 0; c < w; ++c)
    for (int r = 0; r < h; ++r) {
      double acc = 0.0;
      const int lo = std::max(0, r - kHalf);
      const int hi = std::min(h - 1, r + kHalf);
      for (int t = lo; t <= hi; ++t) acc += k[t - r + kHalf] * rows(t, c);
      out(r, c) = acc;
    }
  return out;
}

/// Positions whose 11x11 window lies inside the image and, when a coverage
/// mask is given, inside the coverage.
Mask2d window_valid(int h, int w, const Mask2d* coverage) {
  Mask2d valid = Mask2d::Constant(h, w, false);
  for (int r = kHalf; r < h - kHalf; ++r)
    for (int c = kHalf; c < w - kHalf; ++c) {
      bool ok = true;
      if (coverage) {
        for (int dr = -kHalf; ok && dr <= kHalf; ++dr)
          for (int dc = -kHalf; dc <= kHalf; ++dc)
            if (!(*coverage)(r + dr, c + dc)) {
              ok = false;
              break;
            }
      }
      valid(r, c) = ok;
    }
  return valid;
}

struct ChannelMoments {
  Array2d mu_x, mu_y, s_xx, s_yy, s_xy;
};

ChannelMoments moments(const Array2d& x, const Array2d& y) {
  ChannelMoments m;
  m.mu_x = filter_window(x);
  m.mu_y = filter_window(y);
  m.s_xx = filter_window(x * x);
  m.s_yy = filter_window(y * y);
  m.s_xy = filter_window(x * y);
  return m;
}

SsimResult ssim_impl(const Image& a, const Image& b, const Mask2d* coverage) {
  if (!same_shape(a, b)) fail("ssim: image dimensions differ");
  const int h = a.height();
  const int w = a.width();
  if (h < kWindow || w < kWindow) fail("ssim: image smaller than the 11x11 window");

  SsimResult result;
  result.valid = window_valid(h, w, coverage);
  result.map = Array2d::Zero(h, w);
  const std::int64_t count = result.valid.count();
  if (count == 0) {
    result.mean = 0.0;
    return result;
  }

  for (int ch = 0; ch < 3; ++ch) {
    const ChannelMoments m = moments(a.ch[ch], b.ch[ch]);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (!result.valid(r, c)) continue;
        const double mx = m.mu_x(r, c);
        const double my = m.mu_y(r, c);
        const double vx = m.s_xx(r, c) - mx * mx;
        const double vy = m.s_yy(r, c) - my * my;
        const double cxy = m.s_xy(r, c) - mx * my;
        const double a1 = 2.0 * mx * my + kC1;
        const double a2 = 2.0 * cxy + kC2;
        const double b1 = mx * mx + my * my + kC1;
        const double b2 = vx + vy + kC2;
        result.map(r, c) += (a1 * a2) / (b1 * b2) / 3.0;
      }
  }
  result.mean = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (result.valid(r, c)) result.mean += result.map(r, c);
  result.mean /= static_cast<double>(count);
  return result;
}

}  // namespace

SsimResult ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

SsimResult ssim_masked(const Image& a, const Image& b, const Mask2d& coverage) {
  return ssim_impl(a, b, &coverage);
}

Image ssim_backward(const Image& a, const Image& b, const Mask2d& coverage) {
  if (!same_shape(a, b)) fail("ssim_backward: image dimensions differ");
  const int h = a.height();
  const int w = a.width();
  if (h < kWindow || w < kWindow) fail("ssim_backward: image smaller than the window");

  const Mask2d valid = window_valid(h, w, &coverage);
  const std::int64_t count = valid.count();
  Image grad(h, w);
  if (count == 0) return grad;
  const double norm = 1.0 / (3.0 * static_cast<double>(count));

  for (int ch = 0; ch < 3; ++ch) {
    const ChannelMoments m = moments(a.ch[ch], b.ch[ch]);
    Array2d g_mu = Array2d::Zero(h, w);
    Array2d g_sxx = Array2d::Zero(h, w);
    Array2d g_sxy = Array2d::Zero(h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (!valid(r, c)) continue;
        const double mx = m.mu_x(r, c);
        const double my = m.mu_y(r, c);
        const double vx = m.s_xx(r, c) - mx * mx;
        const double vy = m.s_yy(r, c) - my * my;
        const double cxy = m.s_xy(r, c) - mx * my;
        const double a1 = 2.0 * mx * my + kC1;
        const double a2 = 2.0 * cxy + kC2;
        const double b1 = mx * mx + my * my + kC1;
        const double b2 = vx + vy + kC2;

        const double d_sxx = -(a1 * a2) / (b1 * b2 * b2);            // dS/d(sigma_x^2)
        const double d_sxy = 2.0 * a1 / (b1 * b2);                   // dS/d(sigma_xy)
        const double d_mu_direct =
            (2.0 * my * b1 - 2.0 * mx * a1) * a2 / (b1 * b1 * b2);
        g_mu(r, c) = d_mu_direct + d_sxx * (-2.0 * mx) + d_sxy * (-my);
        g_sxx(r, c) = d_sxx;
        g_sxy(r, c) = d_sxy;
      }
    const Array2d conv_mu = filter_window(g_mu);
    const Array2d conv_sxx = filter_window(g_sxx);
    const Array2d conv_sxy = filter_window(g_sxy);
    grad.ch[ch] = norm * (conv_mu + 2.0 * a.ch[ch] * conv_sxx + b.ch[ch] * conv_sxy);
  }
  return grad;
}

double elevation_loss(const ElevationMap& pred, const ElevationMap& gt, double beta) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    fail("elevation_loss: resolution mismatch");
  double total = 0.0;
  for (int r = 0; r < gt.rows(); ++r)
    for (int c = 0; c < gt.cols(); ++c) {
      if (!gt.valid(r, c) || !pred.valid(r, c)) continue;
      const double e = std::abs(pred.values(r, c) - gt.values(r, c));
      if (beta > 0.0 && e < beta)
        total += 0.5 * e * e / beta;
      else
        total += e - 0.5 * beta;
    }
  return total;
}

namespace {

double masked_l1(const RenderOutput& rendered, const Image& actual,
                 std::int64_t* covered) {
  double acc = 0.0;
  std::int64_t n = 0;
  for (int r = 0; r < actual.height(); ++r)
    for (int c = 0; c < actual.width(); ++c) {
      if (!rendered.coverage(r, c)) continue;
      ++n;
      for (int ch = 0; ch < 3; ++ch)
        acc += std::abs(rendered.rgb.ch[ch](r, c) - actual.ch[ch](r, c));
    }
  *covered = n;
  return n > 0 ? acc / (3.0 * static_cast<double>(n)) : 0.0;
}

}  // namespace

double rgb_loss(const std::vector<RenderOutput>& rendered,
                const std::vector<Image>& actual, double lambda) {
  if (rendered.size() != actual.size()) fail("rgb_loss: frame count mismatch");
  if (rendered.empty()) fail("rgb_loss: no frames");
  double loss = 0.0;
  std::int64_t covered_total = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (!same_shape(rendered[i].rgb, actual[i])) fail("rgb_loss: image size mismatch");
    std::int64_t covered = 0;
    const double l1 = masked_l1(rendered[i], actual[i], &covered);
    covered_total += covered;
    if (covered == 0) continue;
    const SsimResult s = ssim_masked(rendered[i].rgb, actual[i], rendered[i].coverage);
    loss += lambda * l1 + (1.0 - lambda) * (1.0 - s.mean);
  }
  if (covered_total == 0)
    throw std::runtime_error("rgb_loss: empty coverage in every frame (degenerate scene)");
  return loss;
}

RgbLossGrad rgb_loss_with_grad(const std::vector<RenderOutput>& rendered,
                               const std::vector<Image>& actual, double lambda) {
  if (rendered.size() != actual.size()) fail("rgb_loss: frame count mismatch");
  if (rendered.empty()) fail("rgb_loss: no frames");
  RgbLossGrad out;
  std::int64_t covered_total = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (!same_shape(rendered[i].rgb, actual[i])) fail("rgb_loss: image size mismatch");
    const int h = actual[i].height();
    const int w = actual[i].width();
    Image grad(h, w);
    std::int64_t covered = 0;
    const double l1 = masked_l1(rendered[i], actual[i], &covered);
    covered_total += covered;
    if (covered == 0) {
      out.d_rendered.push_back(std::move(grad));
      continue;
    }
    const SsimResult s = ssim_masked(rendered[i].rgb, actual[i], rendered[i].coverage);
    out.loss += lambda * l1 + (1.0 - lambda) * (1.0 - s.mean);

    const double l1_w = lambda / (3.0 * static_cast<double>(covered));
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (!rendered[i].coverage(r, c)) continue;
        for (int ch = 0; ch < 3; ++ch) {
          const double d = rendered[i].rgb.ch[ch](r, c) - actual[i].ch[ch](r, c);
          grad.ch[ch](r, c) = d > 0.0 ? l1_w : (d < 0.0 ? -l1_w : 0.0);
        }
      }
    if (s.valid.count() > 0) {
      const Image ds =
          ssim_backward(rendered[i].rgb, actual[i], rendered[i].coverage);
      for (int ch = 0; ch < 3; ++ch)
        grad.ch[ch] += -(1.0 - lambda) * ds.ch[ch];
    }
    out.d_rendered.push_back(std::move(grad));
  }
  if (covered_total == 0)
    throw std::runtime_error("rgb_loss: empty coverage in every frame (degenerate scene)");
  return out;
}

ElevationMetrics elevation_metrics(const ElevationMap& pred, const ElevationMap& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    fail("elevation_metrics: resolution mismatch");
  double abs_sum = 0.0, sq_sum = 0.0;
  std::int64_t n = 0, exceed = 0;
  for (int r = 0; r < gt.rows(); ++r)
    for (int c = 0; c < gt.cols(); ++c) {
      if (!gt.valid(r, c) || !pred.valid(r, c)) continue;
      const double e = pred.values(r, c) - gt.values(r, c);
      abs_sum += std::abs(e);
      sq_sum += e * e;
      if (std::abs(e) > 0.005) ++exceed;  // strict: u(0) does not count
      ++n;
    }
  if (n == 0) fail("elevation_metrics: empty valid set");
  ElevationMetrics m;
  m.aae_m = abs_sum / static_cast<double>(n);
  m.rmse_m = std::sqrt(sq_sum / static_cast<double>(n));
  m.pct_gt_5mm = 100.0 * static_cast<double>(exceed) / static_cast<double>(n);
  return m;
}

SegmentAae segment_aae(const ElevationMap& pred, const ElevationMap& gt, int n_segments) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    fail("segment_aae: resolution mismatch");
  if (n_segments < 1) fail("segment_aae: n_segments must be >= 1");
  const int rows = gt.rows();
  SegmentAae out;
  out.aae_m.assign(static_cast<std::size_t>(n_segments), 0.0);
  out.has_valid.assign(static_cast<std::size_t>(n_segments), false);

  // Balanced split, near segments take the extra rows.
  const int base = rows / n_segments;
  const int extra = rows % n_segments;
  int row = 0;
  for (int s = 0; s < n_segments; ++s) {
    const int len = base + (s < extra ? 1 : 0);
    double abs_sum = 0.0;
    std::int64_t n = 0;
    for (int r = row; r < row + len && r < rows; ++r)
      for (int c = 0; c < gt.cols(); ++c) {
        if (!gt.valid(r, c) || !pred.valid(r, c)) continue;
        abs_sum += std::abs(pred.values(r, c) - gt.values(r, c));
        ++n;
      }
    if (n > 0) {
      out.aae_m[static_cast<std::size_t>(s)] = abs_sum / static_cast<double>(n);
      out.has_valid[static_cast<std::size_t>(s)] = true;
    }
    row += len;
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  if (!same_shape(a, b)) fail("psnr: image dimensions differ");
  double mse = 0.0;
  for (int ch = 0; ch < 3; ++ch) mse += (a.ch[ch] - b.ch[ch]).square().sum();
  mse /= 3.0 * a.height() * a.width();
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  if (has_elevation) {
    os << "aae_cm = " << aae_cm << "\n";
    os << "rmse_cm = " << rmse_cm << "\n";
    os << "pct_gt_5mm = " << pct_gt_5mm << "\n";
    for (std::size_t i = 0; i < segment_aae_cm.size(); ++i) {
      os << "segment_" << (i + 1) << "_aae_cm = ";
      if (segment_has_valid[i])
        os << segment_aae_cm[i];
      else
        os << "empty";
      os << "\n";
    }
  }
  if (has_image) {
    os << "psnr_db = " << psnr_db << "\n";
    os << "ssim = " << ssim << "\n";
  }
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json doc;
  if (has_elevation) {
    doc["aae_cm"] = aae_cm;
    doc["rmse_cm"] = rmse_cm;
    doc["pct_gt_5mm"] = pct_gt_5mm;
    auto segments = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < segment_aae_cm.size(); ++i) {
      nlohmann::ordered_json seg;
      seg["aae_cm"] = segment_has_valid[i] ? nlohmann::ordered_json(segment_aae_cm[i])
                                           : nlohmann::ordered_json(nullptr);
      segments.push_back(seg);
    }
    doc["segment_aae"] = segments;
  }
  if (has_image) {
    doc["psnr_db"] = psnr_db;
    doc["ssim"] = ssim;
  }
  return doc.dump(2) + "\n";
}

}  // namespace roadgs
