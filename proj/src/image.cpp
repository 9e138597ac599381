#include "roadgs/image.hpp"

#include <cmath>

namespace roadgs {

Image quantize_8bit(const Image& im) {
  Image out(im.height(), im.width());
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < im.height(); ++r)
      for (int c = 0; c < im.width(); ++c) {
        const double v = std::clamp(im.ch[ch](r, c), 0.0, 1.0);
        out.ch[ch](r, c) = std::round(v * 255.0) / 255.0;
      }
  return out;
}

}  // namespace roadgs
