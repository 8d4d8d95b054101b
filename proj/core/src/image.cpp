#include "brave/image.hpp"

#include <algorithm>
#include <cmath>

#include "brave/error.hpp"

namespace brave::img {

double sample_bilinear(std::span<const float> data, int64_t h, int64_t w, int64_t c, double y,
                       double x, int64_t channel) {
  const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int64_t y0 = static_cast<int64_t>(yc);
  const int64_t x0 = static_cast<int64_t>(xc);
  const int64_t y1 = std::min(y0 + 1, h - 1);
  const int64_t x1 = std::min(x0 + 1, w - 1);
  const double fy = yc - y0;
  const double fx = xc - x0;
  auto px = [&](int64_t yy, int64_t xx) {
    return static_cast<double>(data[(yy * w + xx) * c + channel]);
  };
  return px(y0, x0) * (1 - fy) * (1 - fx) + px(y0, x1) * (1 - fy) * fx +
         px(y1, x0) * fy * (1 - fx) + px(y1, x1) * fy * fx;
}

Tensor crop_resize(const Tensor& volume, double y0, double x0, double box_h, double box_w,
                   int out_h, int out_w) {
  if (volume.rank() != 4) throw NumericError("crop_resize expects [F,H,W,C]");
  const int64_t frames = volume.dim(0), h = volume.dim(1), w = volume.dim(2), ch = volume.dim(3);
  Tensor out({frames, out_h, out_w, ch}, Precision::f32);
  auto src = volume.data<float>();
  auto dst = out.data<float>();
  const double sy = box_h / out_h;
  const double sx = box_w / out_w;
  for (int64_t f = 0; f < frames; ++f) {
    auto frame = src.subspan(static_cast<size_t>(f * h * w * ch), static_cast<size_t>(h * w * ch));
    float* o = dst.data() + f * out_h * out_w * ch;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const double yy = y0 + (oy + 0.5) * sy - 0.5;
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const double xx = x0 + (ox + 0.5) * sx - 0.5;
        for (int64_t cc = 0; cc < ch; ++cc) {
          o[(oy * out_w + ox) * ch + cc] =
              static_cast<float>(sample_bilinear(frame, h, w, ch, yy, xx, cc));
        }
      }
    }
  }
  return out;
}

Tensor resize_bilinear(const Tensor& volume, int out_h, int out_w) {
  if (volume.rank() != 4) throw NumericError("resize_bilinear expects [F,H,W,C]");
  if (volume.dim(1) == out_h && volume.dim(2) == out_w) return volume;
  return crop_resize(volume, 0.0, 0.0, static_cast<double>(volume.dim(1)),
                     static_cast<double>(volume.dim(2)), out_h, out_w);
}

}  // namespace brave::img
