#include "brave/augment.hpp"

#include <algorithm>
#include <cmath>

#include "brave/error.hpp"
#include "brave/image.hpp"

namespace brave::augment {
namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

struct CropBox {
  double y0, x0, h, w;
};

// Inception-style area/aspect crop sampling with a centered fallback.
CropBox sample_crop(int64_t h, int64_t w, const AugmentConfig& c, Rng& rng) {
  const double full = static_cast<double>(h) * static_cast<double>(w);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = full * rng.uniform(c.crop_area_min, c.crop_area_max);
    const double aspect =
        std::exp(rng.uniform(std::log(c.crop_aspect_min), std::log(c.crop_aspect_max)));
    const double cw = std::sqrt(area * aspect);
    const double ch = std::sqrt(area / aspect);
    if (cw <= w + 1e-9 && ch <= h + 1e-9) {
      const double y0 = rng.uniform(0.0, h - ch);
      const double x0 = rng.uniform(0.0, w - cw);
      return {y0, x0, ch, cw};
    }
  }
  const double side = static_cast<double>(std::min(h, w));
  return {(h - side) / 2.0, (w - side) / 2.0, side, side};
}

void flip_horizontal(Tensor& clip) {
  const int64_t f = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  auto d = clip.data<float>();
  for (int64_t i = 0; i < f * h; ++i) {
    float* row = d.data() + i * w * c;
    for (int64_t x = 0; x < w / 2; ++x) {
      for (int64_t ch = 0; ch < c; ++ch) std::swap(row[x * c + ch], row[(w - 1 - x) * c + ch]);
    }
  }
}

// Separable Gaussian with reflect padding, kernel normalized to sum 1.
void gaussian_blur(Tensor& clip, double sigma, int ksize) {
  if (ksize < 3) return;
  const int r = ksize / 2;
  std::vector<double> k(static_cast<size_t>(ksize));
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<size_t>(i + r)];
  }
  for (double& v : k) v /= sum;

  const int64_t f = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  auto d = clip.data<float>();
  auto reflect = [](int64_t i, int64_t n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  std::vector<float> tmp(static_cast<size_t>(h * w * c));
  for (int64_t fr = 0; fr < f; ++fr) {
    float* img = d.data() + fr * h * w * c;
    // horizontal
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        for (int64_t ch = 0; ch < c; ++ch) {
          double acc = 0;
          for (int i = -r; i <= r; ++i) {
            acc += k[static_cast<size_t>(i + r)] * img[(y * w + reflect(x + i, w)) * c + ch];
          }
          tmp[static_cast<size_t>((y * w + x) * c + ch)] = static_cast<float>(acc);
        }
      }
    }
    // vertical
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        for (int64_t ch = 0; ch < c; ++ch) {
          double acc = 0;
          for (int i = -r; i <= r; ++i) {
            acc += k[static_cast<size_t>(i + r)] *
                   tmp[static_cast<size_t>((reflect(y + i, h) * w + x) * c + ch)];
          }
          img[(y * w + x) * c + ch] = static_cast<float>(acc);
        }
      }
    }
  }
}

}  // namespace

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.crop_area_min = c.crop_area_max = 1.0;
  c.crop_aspect_min = c.crop_aspect_max = 1.0;
  c.flip_prob = 0.0;
  c.color_jitter_prob = 0.0;
  c.grayscale_prob = 0.0;
  c.blur_sigma_min = c.blur_sigma_max = 0.0;
  c.blur_kernel_fraction = 0.0;
  return c;
}

void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  *v = mx;
  *s = mx > 0 ? d / mx : 0.0;
  if (d <= 0) {
    *h = 0.0;
    return;
  }
  double hh;
  if (mx == r) {
    hh = (g - b) / d;
    if (hh < 0) hh += 6.0;
  } else if (mx == g) {
    hh = (b - r) / d + 2.0;
  } else {
    hh = (r - g) / d + 4.0;
  }
  *h = hh / 6.0;
}

void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sextant = std::min(5, static_cast<int>(hh));
  const double f = hh - sextant;
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  switch (sextant) {
    case 0: *r = v; *g = t; *b = p; break;
    case 1: *r = q; *g = v; *b = p; break;
    case 2: *r = p; *g = v; *b = t; break;
    case 3: *r = p; *g = q; *b = v; break;
    case 4: *r = t; *g = p; *b = v; break;
    default: *r = v; *g = p; *b = q; break;
  }
}

Tensor augment_rgb(const Tensor& clip, int out_side, const AugmentConfig& config, Rng& rng) {
  if (clip.rank() != 4 || clip.dim(3) != 3) throw NumericError("augment_rgb expects [F,H,W,3]");
  const int64_t h = clip.dim(1), w = clip.dim(2);

  // All draws happen unconditionally and in a fixed order so a view's stream
  // consumption does not depend on which branches fire.
  const CropBox box = sample_crop(h, w, config, rng);
  const bool flip = rng.bernoulli(config.flip_prob);
  const bool jitter = rng.bernoulli(config.color_jitter_prob);
  const double brightness = rng.uniform(-config.brightness_offset, config.brightness_offset);
  const double saturation = rng.uniform(config.saturation_min, config.saturation_max);
  const double contrast = rng.uniform(config.contrast_min, config.contrast_max);
  const double hue = rng.uniform(-config.hue_offset, config.hue_offset);
  const bool grayscale = rng.bernoulli(config.grayscale_prob);
  const double sigma = rng.uniform(config.blur_sigma_min, config.blur_sigma_max);

  Tensor out = img::crop_resize(clip, box.y0, box.x0, box.h, box.w, out_side, out_side);
  if (flip) flip_horizontal(out);

  auto d = out.data<float>();
  if (jitter) {
    // Contrast pivots on the clip-wide luma mean so every frame shifts
    // consistently in time.
    double mean = 0;
    for (int64_t i = 0; i < out.size(); i += 3) {
      mean += kLumaR * d[i] + kLumaG * d[i + 1] + kLumaB * d[i + 2];
    }
    mean /= static_cast<double>(out.size() / 3);
    for (int64_t i = 0; i < out.size(); i += 3) {
      double r = d[i] + brightness;
      double g = d[i + 1] + brightness;
      double b = d[i + 2] + brightness;
      const double luma = kLumaR * r + kLumaG * g + kLumaB * b;
      r = luma + saturation * (r - luma);
      g = luma + saturation * (g - luma);
      b = luma + saturation * (b - luma);
      r = mean + contrast * (r - mean);
      g = mean + contrast * (g - mean);
      b = mean + contrast * (b - mean);
      double hh, ss, vv;
      rgb_to_hsv(std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0), std::clamp(b, 0.0, 1.0), &hh,
                 &ss, &vv);
      hsv_to_rgb(hh + hue, ss, vv, &r, &g, &b);
      d[i] = static_cast<float>(r);
      d[i + 1] = static_cast<float>(g);
      d[i + 2] = static_cast<float>(b);
    }
  }
  for (int64_t i = 0; i < out.size(); ++i) d[i] = std::clamp(d[i], 0.0f, 1.0f);

  if (grayscale) {
    for (int64_t i = 0; i < out.size(); i += 3) {
      const float y = static_cast<float>(kLumaR * d[i] + kLumaG * d[i + 1] + kLumaB * d[i + 2]);
      d[i] = d[i + 1] = d[i + 2] = y;
    }
  }

  if (config.blur_kernel_fraction > 0 && sigma > 0) {
    int ksize = static_cast<int>(std::lround(out_side * config.blur_kernel_fraction));
    if (ksize % 2 == 0) ++ksize;
    gaussian_blur(out, sigma, ksize);
  }
  return out;
}

RandomConvSample sample_random_conv(const RandomConvSpec& spec, Rng& rng) {
  if (spec.kernel_sizes.empty()) throw ConfigError("random conv needs at least one kernel size");
  RandomConvSample s;
  s.size = spec.kernel_sizes[static_cast<size_t>(rng.uniform_int(
      static_cast<int64_t>(spec.kernel_sizes.size())))];
  const int k = s.size;
  const double stddev = std::sqrt(2.0 / (k * k * 3));
  s.weights = Tensor({k, k, 3, 3}, Precision::f32);
  auto wv = s.weights.data<float>();
  for (auto& v : wv) v = static_cast<float>(rng.normal(0.0, stddev));
  return s;
}

Tensor apply_conv2d(const Tensor& clip, const Tensor& weights) {
  if (clip.rank() != 4 || clip.dim(3) != 3) throw NumericError("apply_conv2d expects [F,H,W,3]");
  const int64_t f = clip.dim(0), h = clip.dim(1), w = clip.dim(2);
  const int64_t k = weights.dim(0);
  const int64_t r = k / 2;
  Tensor out(clip.shape(), Precision::f32);
  auto src = clip.data<float>();
  auto wv = weights.data<float>();
  auto dst = out.data<float>();
  for (int64_t fr = 0; fr < f; ++fr) {
    const float* img = src.data() + fr * h * w * 3;
    float* o = dst.data() + fr * h * w * 3;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        double acc[3] = {0, 0, 0};
        for (int64_t ky = 0; ky < k; ++ky) {
          const int64_t yy = y + ky - r;
          if (yy < 0 || yy >= h) continue;  // zero padding
          for (int64_t kx = 0; kx < k; ++kx) {
            const int64_t xx = x + kx - r;
            if (xx < 0 || xx >= w) continue;
            const float* p = img + (yy * w + xx) * 3;
            const float* wp = wv.data() + (ky * k + kx) * 9;
            for (int ci = 0; ci < 3; ++ci) {
              for (int co = 0; co < 3; ++co) acc[co] += p[ci] * wp[ci * 3 + co];
            }
          }
        }
        for (int co = 0; co < 3; ++co) o[(y * w + x) * 3 + co] = static_cast<float>(acc[co]);
      }
    }
  }
  return out;
}

Tensor random_convolution(const Tensor& clip, const RandomConvSpec& spec, Rng& rng) {
  return apply_conv2d(clip, sample_random_conv(spec, rng).weights);
}

Tensor augment_flow(const Tensor& clip, const FlowAugmentConfig& config, Rng& rng) {
  if (clip.rank() != 4 || clip.dim(3) != 2) throw NumericError("augment_flow expects [F,H,W,2]");
  Tensor out = clip;
  if (config.resize_short > 0 && (clip.dim(1) != config.resize_short || clip.dim(2) != config.resize_short)) {
    const double sy = static_cast<double>(config.resize_short) / clip.dim(1);
    const double sx = static_cast<double>(config.resize_short) / clip.dim(2);
    out = img::resize_bilinear(clip, config.resize_short, config.resize_short);
    auto d = out.data<float>();
    // displacements live on the pixel grid, so rescale with it
    for (int64_t i = 0; i < out.size(); i += 2) {
      d[i] = static_cast<float>(d[i] * sx);
      d[i + 1] = static_cast<float>(d[i + 1] * sy);
    }
  }
  const int64_t h = out.dim(1), w = out.dim(2);
  const int64_t side = config.crop_side > 0 ? config.crop_side : std::min(h, w);
  if (side > std::min(h, w)) throw ConfigError("flow crop larger than frame");
  const int64_t y0 = rng.uniform_int(h - side + 1);
  const int64_t x0 = rng.uniform_int(w - side + 1);
  const bool flip = rng.bernoulli(config.flip_prob);

  Tensor cropped({out.dim(0), side, side, 2}, Precision::f32);
  auto src = out.data<float>();
  auto dst = cropped.data<float>();
  for (int64_t f = 0; f < out.dim(0); ++f) {
    for (int64_t y = 0; y < side; ++y) {
      const float* row = src.data() + ((f * h + y0 + y) * w + x0) * 2;
      float* orow = dst.data() + ((f * side + y) * side) * 2;
      std::copy_n(row, side * 2, orow);
    }
  }
  if (flip) {
    for (int64_t i = 0; i < cropped.dim(0) * side; ++i) {
      float* row = dst.data() + i * side * 2;
      for (int64_t x = 0; x < side / 2; ++x) {
        std::swap(row[x * 2], row[(side - 1 - x) * 2]);
        std::swap(row[x * 2 + 1], row[(side - 1 - x) * 2 + 1]);
      }
      // mirrored horizontal motion points the other way
      for (int64_t x = 0; x < side; ++x) row[x * 2] = -row[x * 2];
    }
  }
  return cropped;
}

}  // namespace brave::augment
