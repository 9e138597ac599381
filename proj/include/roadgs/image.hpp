#pragma once

#include <Eigen/Core>
#include <array>

#include "roadgs/grid.hpp"

namespace roadgs {

/// RGB image, one Eigen array per channel, rows = height, cols = width,
/// values nominally in [0, 1].
struct Image {
  std::array<Array2d, 3> ch;

  Image() = default;
  Image(int height, int width) {
    for (auto& c : ch) c = Array2d::Zero(height, width);
  }
  static Image constant(int height, int width, double r, double g, double b) {
    Image im(height, width);
    im.ch[0].setConstant(r);
    im.ch[1].setConstant(g);
    im.ch[2].setConstant(b);
    return im;
  }

  int height() const { return static_cast<int>(ch[0].rows()); }
  int width() const { return static_cast<int>(ch[0].cols()); }

  Image& operator+=(const Image& o) {
    for (int c = 0; c < 3; ++c) ch[c] += o.ch[c];
    return *this;
  }
};

inline bool same_shape(const Image& a, const Image& b) {
  return a.height() == b.height() && a.width() == b.width();
}

/// Clamp to [0,1] and quantize to 8-bit the way the PPM writer does.
Image quantize_8bit(const Image& im);

}  // namespace roadgs
