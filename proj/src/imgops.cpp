#include "cyclonet/imgops.hpp"

#include <algorithm>
#include <cmath>

#include "cyclonet/errors.hpp"

namespace cyclonet {

Image bilinear_resize(const Image& image, int out_h, int out_w) {
  require_rank("bilinear_resize", image.shape(), 2);
  if (out_h <= 0 || out_w <= 0) throw ShapeError("bilinear_resize: output extents must be positive");
  const int h = image.dim(0), w = image.dim(1);
  if (h == out_h && w == out_w) return image;
  Image out({out_h, out_w});
  const float sy = static_cast<float>(h) / static_cast<float>(out_h);
  const float sx = static_cast<float>(w) / static_cast<float>(out_w);
  for (int r = 0; r < out_h; ++r) {
    const float fy = (static_cast<float>(r) + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
    for (int c = 0; c < out_w; ++c) {
      const float fx = (static_cast<float>(c) + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
      const float top = image.at(y0, x0) * (1.0f - wx) + image.at(y0, x1) * wx;
      const float bot = image.at(y1, x0) * (1.0f - wx) + image.at(y1, x1) * wx;
      out.at(r, c) = top * (1.0f - wy) + bot * wy;
    }
  }
  return out;
}

Image quarter_turn(const Image& image, int turns) {
  require_rank("quarter_turn", image.shape(), 2);
  const int n = image.dim(0);
  if (n != image.dim(1)) {
    throw ShapeError("quarter_turn: image must be square, got " + image.shape_str());
  }
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return image;
  Image out({n, n});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      switch (turns) {
        case 1: out.at(r, c) = image.at(n - 1 - c, r); break;
        case 2: out.at(r, c) = image.at(n - 1 - r, n - 1 - c); break;
        default: out.at(r, c) = image.at(c, n - 1 - r); break;
      }
    }
  }
  return out;
}

Image rotate_bilinear(const Image& image, double angle) {
  require_rank("rotate_bilinear", image.shape(), 2);
  const int n = image.dim(0);
  if (n != image.dim(1)) {
    throw ShapeError("rotate_bilinear: image must be square, got " + image.shape_str());
  }
  Image out({n, n});
  const double cx = (n - 1) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      // inverse-map the output pixel into the source
      const double dy = r - cx, dx = c - cx;
      const double sy = ca * dy - sa * dx + cx;
      const double sx = sa * dy + ca * dx + cx;
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double wy = sy - y0, wx = sx - x0;
      float acc = 0.0f;
      for (int oy = 0; oy <= 1; ++oy) {
        for (int ox = 0; ox <= 1; ++ox) {
          const int yy = y0 + oy, xx = x0 + ox;
          if (yy < 0 || yy >= n || xx < 0 || xx >= n) continue;
          const double wgt = (oy ? wy : 1.0 - wy) * (ox ? wx : 1.0 - wx);
          acc += static_cast<float>(wgt) * image.at(yy, xx);
        }
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

}  // namespace cyclonet
