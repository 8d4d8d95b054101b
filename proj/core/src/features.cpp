#include "brave/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <vector>

#include "brave/error.hpp"
#include "brave/io.hpp"
#include "brave/threading.hpp"

namespace brave::features {

using std::numbers::pi;

// ---------------------------------------------------------------------------
// Spectrogram

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_filter_center(int i, int n_mels, double nyquist_hz) {
  const double span = hz_to_mel(nyquist_hz);
  return (i + 1) * span / (n_mels + 1);
}

namespace {

constexpr double kLogFloor = 1e-10;

struct MelBank {
  // weight of DFT bin b in mel filter m, stored dense [n_mels][bins]
  std::vector<double> w;
  int bins;
};

MelBank build_melbank(int n_mels, int window, double sample_rate) {
  const int bins = window / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double span = hz_to_mel(nyquist);
  MelBank bank{std::vector<double>(static_cast<size_t>(n_mels) * bins, 0.0), bins};
  for (int m = 0; m < n_mels; ++m) {
    const double lo = m * span / (n_mels + 1);
    const double mid = (m + 1) * span / (n_mels + 1);
    const double hi = (m + 2) * span / (n_mels + 1);
    for (int b = 0; b < bins; ++b) {
      const double mel = hz_to_mel(b * sample_rate / window);
      double weight = 0;
      if (mel > lo && mel < mid) weight = (mel - lo) / (mid - lo);
      else if (mel >= mid && mel < hi) weight = (hi - mel) / (hi - mid);
      bank.w[static_cast<size_t>(m) * bins + b] = weight;
    }
  }
  return bank;
}

// Spectrogram of an arbitrary double buffer; shared by the public entry and
// the cache's wrap-extended path.
Tensor spectrogram_of(const std::vector<double>& x, int sample_rate, int window, int stride,
                      int n_mels) {
  if (static_cast<int64_t>(x.size()) < window) {
    throw NumericError("waveform (" + std::to_string(x.size()) +
                       " samples) shorter than the analysis window (" + std::to_string(window) +
                       ")");
  }
  const int64_t frames = (static_cast<int64_t>(x.size()) - window) / stride + 1;
  const int bins = window / 2 + 1;
  const MelBank bank = build_melbank(n_mels, window, sample_rate);

  std::vector<double> hann(static_cast<size_t>(window));
  for (int i = 0; i < window; ++i) hann[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2 * pi * i / window);
  // DFT twiddle tables
  std::vector<double> cos_t(static_cast<size_t>(bins) * window);
  std::vector<double> sin_t(static_cast<size_t>(bins) * window);
  for (int k = 0; k < bins; ++k) {
    for (int i = 0; i < window; ++i) {
      const double ang = 2 * pi * k * i / window;
      cos_t[static_cast<size_t>(k) * window + i] = std::cos(ang);
      sin_t[static_cast<size_t>(k) * window + i] = std::sin(ang);
    }
  }

  Tensor out({frames, n_mels}, Precision::f32);
  auto dst = out.data<float>();
  parallel_for(frames, [&](int64_t lo, int64_t hi) {
    std::vector<double> windowed(static_cast<size_t>(window));
    std::vector<double> power(static_cast<size_t>(bins));
    for (int64_t f = lo; f < hi; ++f) {
      const double* src = x.data() + f * stride;
      for (int i = 0; i < window; ++i) windowed[static_cast<size_t>(i)] = src[i] * hann[static_cast<size_t>(i)];
      for (int k = 0; k < bins; ++k) {
        double re = 0, im = 0;
        const double* ct = cos_t.data() + static_cast<size_t>(k) * window;
        const double* st = sin_t.data() + static_cast<size_t>(k) * window;
        for (int i = 0; i < window; ++i) {
          re += windowed[static_cast<size_t>(i)] * ct[i];
          im -= windowed[static_cast<size_t>(i)] * st[i];
        }
        power[static_cast<size_t>(k)] = re * re + im * im;
      }
      for (int m = 0; m < n_mels; ++m) {
        double acc = 0;
        const double* w = bank.w.data() + static_cast<size_t>(m) * bins;
        for (int k = 0; k < bins; ++k) acc += w[k] * power[static_cast<size_t>(k)];
        dst[f * n_mels + m] = static_cast<float>(std::log(std::max(acc, kLogFloor)));
      }
    }
  });
  return out;
}

}  // namespace

Tensor log_mel_spectrogram(const Tensor& waveform, int sample_rate, int window, int stride,
                           int n_mels) {
  if (waveform.rank() != 1) throw NumericError("log_mel_spectrogram expects a rank-1 waveform");
  return spectrogram_of(waveform.to_vector(), sample_rate, window, stride, n_mels);
}

Tensor SpectrogramCache::window(const data::MultimodalSample& sample, int audio_rate,
                                const views::SpectrogramParams& params, double offset_seconds,
                                double extent_seconds) {
  const int64_t n = sample.audio.size();
  const int64_t win_samples = static_cast<int64_t>(std::llround(extent_seconds * audio_rate));
  const int64_t start = static_cast<int64_t>(std::llround(offset_seconds * audio_rate));

  const bool aligned = n % params.stride == 0 && start % params.stride == 0;
  if (!aligned) {
    std::vector<double> window_buf(static_cast<size_t>(win_samples));
    for (int64_t i = 0; i < win_samples; ++i) {
      window_buf[static_cast<size_t>(i)] = sample.audio.at((start + i) % n);
    }
    return spectrogram_of(window_buf, audio_rate, params.window, params.stride, params.n_mels);
  }

  std::ostringstream key;
  key << sample.sample_id << '|' << params.window << '|' << params.stride << '|' << params.n_mels
      << '|' << audio_rate;
  Tensor full;
  {
    std::lock_guard lk(mu_);
    auto it = full_.find(key.str());
    if (it != full_.end()) {
      full = it->second;
    }
  }
  if (full.size() == 0) {
    // Wrap-extend so every frame start in [0, n) has a complete window.
    std::vector<double> ext(static_cast<size_t>(n + params.window));
    for (int64_t i = 0; i < n + params.window; ++i) ext[static_cast<size_t>(i)] = sample.audio.at(i % n);
    // Drop the trailing frames that belong to wrapped starts >= n.
    Tensor rows = spectrogram_of(ext, audio_rate, params.window, params.stride, params.n_mels);
    const int64_t keep = n / params.stride;
    Tensor trimmed({keep, params.n_mels}, Precision::f32);
    std::copy_n(rows.data<float>().data(), keep * params.n_mels, trimmed.data<float>().data());
    full = std::move(trimmed);
    std::lock_guard lk(mu_);
    full_.emplace(key.str(), full);
  }

  const int64_t total_rows = full.dim(0);
  const int64_t view_rows = (win_samples - params.window) / params.stride + 1;
  const int64_t row0 = start / params.stride;
  Tensor out({view_rows, params.n_mels}, Precision::f32);
  auto src = full.data<float>();
  auto dst = out.data<float>();
  for (int64_t r = 0; r < view_rows; ++r) {
    const int64_t sr = (row0 + r) % total_rows;
    std::copy_n(src.data() + sr * params.n_mels, params.n_mels, dst.data() + r * params.n_mels);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TV-L1 optical flow

namespace {

struct Image {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

Image to_gray(const Tensor& frames, int64_t index) {
  const int64_t h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
  Image img{static_cast<int>(h), static_cast<int>(w),
            std::vector<double>(static_cast<size_t>(h * w))};
  auto d = frames.data<float>();
  const float* base = d.data() + index * h * w * c;
  // The solver works on a [0,255] intensity range; lambda/theta defaults are
  // calibrated for that scale and a [0,1] input would starve the data term.
  for (int64_t i = 0; i < h * w; ++i) {
    if (c >= 3) {
      img.v[static_cast<size_t>(i)] =
          255.0 * (0.299 * base[i * c] + 0.587 * base[i * c + 1] + 0.114 * base[i * c + 2]);
    } else {
      img.v[static_cast<size_t>(i)] = 255.0 * base[i * c];
    }
  }
  return img;
}

double sample_clamped(const Image& img, double y, double x) {
  const double yc = std::clamp(y, 0.0, static_cast<double>(img.h - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(img.w - 1));
  const int y0 = static_cast<int>(yc);
  const int x0 = static_cast<int>(xc);
  const int y1 = std::min(y0 + 1, img.h - 1);
  const int x1 = std::min(x0 + 1, img.w - 1);
  const double fy = yc - y0, fx = xc - x0;
  return img.at(y0, x0) * (1 - fy) * (1 - fx) + img.at(y0, x1) * (1 - fy) * fx +
         img.at(y1, x0) * fy * (1 - fx) + img.at(y1, x1) * fy * fx;
}

Image downsample_half(const Image& src) {
  Image out{(src.h + 1) / 2, (src.w + 1) / 2, {}};
  out.v.resize(static_cast<size_t>(out.h) * out.w);
  // light low-pass before decimation
  Image blur = src;
  for (int y = 0; y < src.h; ++y) {
    for (int x = 0; x < src.w; ++x) {
      double acc = 0, wsum = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, src.h - 1);
          const int xx = std::clamp(x + dx, 0, src.w - 1);
          const double wgt = (dy == 0 ? 2.0 : 1.0) * (dx == 0 ? 2.0 : 1.0);
          acc += wgt * src.at(yy, xx);
          wsum += wgt;
        }
      }
      blur.at(y, x) = acc / wsum;
    }
  }
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      out.at(y, x) = sample_clamped(blur, y * 2.0, x * 2.0);
    }
  }
  return out;
}

Image upsample_flow(const Image& src, int h, int w, double gain) {
  Image out{h, w, std::vector<double>(static_cast<size_t>(h) * w)};
  const double sy = static_cast<double>(src.h) / h;
  const double sx = static_cast<double>(src.w) / w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(y, x) = gain * sample_clamped(src, y * sy, x * sx);
    }
  }
  return out;
}

// One pyramid level of the primal-dual scheme.
void tvl1_level(const Image& i0, const Image& i1, Image& u, Image& v, const FlowParams& p) {
  const int h = i0.h, w = i0.w;
  const size_t n = static_cast<size_t>(h) * w;
  std::vector<double> p11(n, 0), p12(n, 0), p21(n, 0), p22(n, 0);
  std::vector<double> i1w(n), ix(n), iy(n), rho_c(n), grad2(n);
  const double lt = p.lambda * p.theta;
  const double taut = p.tau / p.theta;

  for (int warp = 0; warp < p.warps; ++warp) {
    // Warp the second image (and its gradients) by the current flow.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t i = static_cast<size_t>(y) * w + x;
        const double wx = x + u.at(y, x);
        const double wy = y + v.at(y, x);
        i1w[i] = sample_clamped(i1, wy, wx);
        ix[i] = 0.5 * (sample_clamped(i1, wy, wx + 1) - sample_clamped(i1, wy, wx - 1));
        iy[i] = 0.5 * (sample_clamped(i1, wy + 1, wx) - sample_clamped(i1, wy - 1, wx));
        grad2[i] = ix[i] * ix[i] + iy[i] * iy[i];
        // constant part of the linearized residual
        rho_c[i] = i1w[i] - ix[i] * u.at(y, x) - iy[i] * v.at(y, x) - i0.at(y, x);
      }
    }
    for (int it = 0; it < p.iterations; ++it) {
      // data-term thresholding -> auxiliary field (vx, vy)
      std::vector<double> ax(n), ay(n);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const size_t i = static_cast<size_t>(y) * w + x;
          const double rho = rho_c[i] + ix[i] * u.at(y, x) + iy[i] * v.at(y, x);
          double dx = 0, dy = 0;
          if (rho < -lt * grad2[i]) {
            dx = lt * ix[i];
            dy = lt * iy[i];
          } else if (rho > lt * grad2[i]) {
            dx = -lt * ix[i];
            dy = -lt * iy[i];
          } else if (grad2[i] > 1e-12) {
            dx = -rho * ix[i] / grad2[i];
            dy = -rho * iy[i] / grad2[i];
          }
          ax[i] = u.at(y, x) + dx;
          ay[i] = v.at(y, x) + dy;
        }
      }
      // primal update from the dual field, then dual ascent
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const size_t i = static_cast<size_t>(y) * w + x;
          const double div_u = (x > 0 ? p11[i] - p11[i - 1] : p11[i]) +
                               (y > 0 ? p12[i] - p12[i - static_cast<size_t>(w)] : p12[i]);
          const double div_v = (x > 0 ? p21[i] - p21[i - 1] : p21[i]) +
                               (y > 0 ? p22[i] - p22[i - static_cast<size_t>(w)] : p22[i]);
          u.at(y, x) = ax[i] + p.theta * div_u;
          v.at(y, x) = ay[i] + p.theta * div_v;
        }
      }
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const size_t i = static_cast<size_t>(y) * w + x;
          const double ux = x + 1 < w ? u.at(y, x + 1) - u.at(y, x) : 0.0;
          const double uy = y + 1 < h ? u.at(y + 1, x) - u.at(y, x) : 0.0;
          const double vx = x + 1 < w ? v.at(y, x + 1) - v.at(y, x) : 0.0;
          const double vy = y + 1 < h ? v.at(y + 1, x) - v.at(y, x) : 0.0;
          const double nu = 1.0 + taut * std::sqrt(ux * ux + uy * uy);
          const double nv = 1.0 + taut * std::sqrt(vx * vx + vy * vy);
          p11[i] = (p11[i] + taut * ux) / nu;
          p12[i] = (p12[i] + taut * uy) / nu;
          p21[i] = (p21[i] + taut * vx) / nv;
          p22[i] = (p22[i] + taut * vy) / nv;
        }
      }
    }
  }
}

void flow_pair(const Image& a, const Image& b, const FlowParams& p, float* out /* [h*w*2] */) {
  // Pyramid limited so the coarsest level stays at least 8 px.
  int levels = 1;
  int side = std::min(a.h, a.w);
  while (levels < p.pyramid_levels && side / 2 >= 8) {
    ++levels;
    side /= 2;
  }
  std::vector<Image> pa{a}, pb{b};
  for (int l = 1; l < levels; ++l) {
    pa.push_back(downsample_half(pa.back()));
    pb.push_back(downsample_half(pb.back()));
  }
  Image u{pa.back().h, pa.back().w,
          std::vector<double>(static_cast<size_t>(pa.back().h) * pa.back().w, 0.0)};
  Image v = u;
  for (int l = levels - 1; l >= 0; --l) {
    if (l != levels - 1) {
      u = upsample_flow(u, pa[static_cast<size_t>(l)].h, pa[static_cast<size_t>(l)].w, 2.0);
      v = upsample_flow(v, pa[static_cast<size_t>(l)].h, pa[static_cast<size_t>(l)].w, 2.0);
    }
    tvl1_level(pa[static_cast<size_t>(l)], pb[static_cast<size_t>(l)], u, v, p);
  }
  for (int y = 0; y < a.h; ++y) {
    for (int x = 0; x < a.w; ++x) {
      const double uu = std::clamp(u.at(y, x), -p.max_flow, p.max_flow);
      const double vv = std::clamp(v.at(y, x), -p.max_flow, p.max_flow);
      out[(static_cast<size_t>(y) * a.w + x) * 2] = static_cast<float>(uu);
      out[(static_cast<size_t>(y) * a.w + x) * 2 + 1] = static_cast<float>(vv);
    }
  }
}

}  // namespace

std::string FlowParams::cache_key() const {
  std::ostringstream os;
  os << pyramid_levels << '|' << warps << '|' << iterations << '|' << lambda << '|' << theta << '|'
     << tau << '|' << max_flow;
  return std::to_string(hash_str(0xf10e, os.str()));
}

Tensor estimate_flow(const Tensor& frames, const FlowParams& params) {
  if (frames.rank() != 4) throw NumericError("estimate_flow expects [T,H,W,C]");
  const int64_t t = frames.dim(0);
  if (t < 2) throw NumericError("estimate_flow needs at least 2 frames");
  const int64_t h = frames.dim(1), w = frames.dim(2);
  Tensor out({t - 1, h, w, 2}, Precision::f32);
  auto dst = out.data<float>();
  std::vector<Image> gray(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) gray[static_cast<size_t>(i)] = to_gray(frames, i);
  parallel_for(t - 1, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      flow_pair(gray[static_cast<size_t>(i)], gray[static_cast<size_t>(i + 1)], params,
                dst.data() + i * h * w * 2);
    }
  });
  return out;
}

Tensor dataset_flow(const data::Dataset& dataset, size_t index, const FlowParams& params,
                    const std::filesystem::path& cache_dir) {
  char name[48];
  std::snprintf(name, sizeof(name), "flow_%06zu.brv", index);
  const auto path = cache_dir / name;
  const std::string key = dataset.config.cache_key() + "-" + params.cache_key();
  if (std::filesystem::exists(path)) {
    io::Record rec = io::read_record(path);
    auto it = rec.tensors.find("flow");
    if (it != rec.tensors.end() && rec.ints.count("key") &&
        rec.ints.at("key") == static_cast<int64_t>(hash_str(0, key))) {
      return it->second;
    }
  }
  Tensor flow = estimate_flow(dataset.samples[index].rgb, params);
  std::filesystem::create_directories(cache_dir);
  io::Record rec;
  rec.tensors["flow"] = flow;
  rec.ints["key"] = static_cast<int64_t>(hash_str(0, key));
  io::write_record(path, rec);
  return flow;
}

void precompute_flow(const data::Dataset& dataset, const FlowParams& params,
                     const std::filesystem::path& cache_dir) {
  std::filesystem::create_directories(cache_dir);
  parallel_for(static_cast<int64_t>(dataset.samples.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) dataset_flow(dataset, static_cast<size_t>(i), params, cache_dir);
  });
}

}  // namespace brave::features
