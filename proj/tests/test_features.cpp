#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support/testing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "brave/error.hpp"
#include "brave/features.hpp"
#include "brave/rng.hpp"

using namespace brave;
using namespace brave::features;

namespace {

Tensor sine_wave(double freq, double seconds, int rate, double amp = 0.8) {
  const int64_t n = static_cast<int64_t>(std::llround(seconds * rate));
  Tensor t({n}, Precision::f32);
  auto d = t.data<float>();
  for (int64_t i = 0; i < n; ++i) {
    d[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * i / rate));
  }
  return t;
}

// Smooth random texture: bilinear upsample of a coarse random grid.
std::vector<double> smooth_texture(int side, uint64_t seed) {
  const int g = 9;
  Rng rng(seed);
  std::vector<double> grid((g + 1) * (g + 1));
  for (double& v : grid) v = rng.uniform(0.1, 0.9);
  std::vector<double> img(static_cast<size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    const double gy = static_cast<double>(y) / side * g;
    const int iy = static_cast<int>(gy);
    const double fy = gy - iy;
    for (int x = 0; x < side; ++x) {
      const double gx = static_cast<double>(x) / side * g;
      const int ix = static_cast<int>(gx);
      const double fx = gx - ix;
      img[static_cast<size_t>(y) * side + x] =
          grid[iy * (g + 1) + ix] * (1 - fy) * (1 - fx) + grid[iy * (g + 1) + ix + 1] * (1 - fy) * fx +
          grid[(iy + 1) * (g + 1) + ix] * fy * (1 - fx) + grid[(iy + 1) * (g + 1) + ix + 1] * fy * fx;
    }
  }
  return img;
}

Tensor frames_from(const std::vector<std::vector<double>>& imgs, int side) {
  Tensor t({static_cast<int64_t>(imgs.size()), side, side, 1}, Precision::f32);
  auto d = t.data<float>();
  for (size_t f = 0; f < imgs.size(); ++f) {
    for (int i = 0; i < side * side; ++i) {
      d[static_cast<int64_t>(f) * side * side + i] = static_cast<float>(imgs[f][static_cast<size_t>(i)]);
    }
  }
  return t;
}

}  // namespace

TEST_CASE("spectrogram frame count follows floor((N-window)/stride)+1") {
  Tensor wave = sine_wave(1000.0, 5.0, 48000);
  Tensor spec = log_mel_spectrogram(wave, 48000, 320, 160, 80);
  CHECK(spec.dim(0) == 1499);
  CHECK(spec.dim(1) == 80);
  CHECK(spec.all_finite());
}

TEST_CASE("spectrogram rejects waveforms shorter than the window") {
  Tensor tiny({100}, Precision::f32);
  CHECK_THROWS_AS(log_mel_spectrogram(tiny, 48000, 320, 160, 80), NumericError);
}

TEST_CASE("1 kHz tone lands in the analytically predicted mel bin") {
  const int rate = 48000;
  const int n_mels = 80;
  Tensor wave = sine_wave(1000.0, 1.0, rate);
  Tensor spec = log_mel_spectrogram(wave, rate, 320, 160, n_mels);
  // average over frames, then argmax over mel bins
  std::vector<double> profile(n_mels, 0.0);
  for (int64_t f = 0; f < spec.dim(0); ++f) {
    for (int m = 0; m < n_mels; ++m) profile[static_cast<size_t>(m)] += spec.at(f * n_mels + m);
  }
  int argmax = static_cast<int>(std::max_element(profile.begin(), profile.end()) - profile.begin());

  // analytic prediction: filter whose mel center is nearest mel(1000)
  const double target = hz_to_mel(1000.0);
  int predicted = 0;
  double best = 1e18;
  for (int m = 0; m < n_mels; ++m) {
    const double d = std::fabs(mel_filter_center(m, n_mels, rate / 2.0) - target);
    if (d < best) {
      best = d;
      predicted = m;
    }
  }
  // closed form round(n * mel(1000)/mel(nyquist)) lands within one bin too
  const int closed_form = static_cast<int>(std::lround(n_mels * target / hz_to_mel(rate / 2.0)));
  INFO("argmax ", argmax, " predicted ", predicted, " closed form ", closed_form);
  CHECK(std::abs(argmax - predicted) <= 1);
  CHECK(std::abs(argmax - closed_form) <= 1);
}

TEST_CASE("delaying the waveform by k strides shifts spectrogram rows by k") {
  Rng rng(5);
  const int rate = 8000;
  Tensor wave({8000}, Precision::f32);
  auto d = wave.data<float>();
  for (auto& v : d) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const int stride = 80, window = 160, mels = 40, k = 3;

  Tensor base = log_mel_spectrogram(wave, rate, window, stride, mels);
  Tensor delayed_wave({8000 + k * stride}, Precision::f32);
  auto dd = delayed_wave.data<float>();
  std::fill(dd.begin(), dd.begin() + k * stride, 0.0f);
  std::copy(d.begin(), d.end(), dd.begin() + k * stride);
  Tensor delayed = log_mel_spectrogram(delayed_wave, rate, window, stride, mels);

  for (int64_t r = 0; r < base.dim(0); ++r) {
    for (int m = 0; m < mels; ++m) {
      CHECK(delayed.at((r + k) * mels + m) == doctest::Approx(base.at(r * mels + m)).epsilon(1e-6));
    }
  }
}

TEST_CASE("scaling the waveform raises every log-power entry above the floor") {
  Tensor wave = sine_wave(440.0, 0.5, 8000, 0.4);
  Tensor lo = log_mel_spectrogram(wave, 8000, 160, 80, 40);
  auto d = wave.data<float>();
  for (auto& v : d) v *= 2.0f;
  Tensor hi = log_mel_spectrogram(wave, 8000, 160, 80, 40);
  const double floor_log = std::log(1e-10);
  for (int64_t i = 0; i < lo.size(); ++i) {
    if (lo.at(i) > floor_log + 1e-9) CHECK(hi.at(i) > lo.at(i));
  }
}

TEST_CASE("spectrogram cache slices equal direct window computation") {
  data::MultimodalSample sample;
  Rng rng(6);
  sample.sample_id = 99;
  sample.audio = Tensor({8000}, Precision::f32);  // 2s at 4 kHz
  auto d = sample.audio.data<float>();
  for (auto& v : d) v = static_cast<float>(rng.uniform(-0.9, 0.9));

  views::SpectrogramParams params{.window = 160, .stride = 80, .n_mels = 40};
  SpectrogramCache cache;
  for (double offset : {0.0, 0.52, 1.6}) {  // 1.6 + 1.0 wraps past the end
    Tensor cached = cache.window(sample, 4000, params, offset, 1.0);
    // direct: extract the wrapped window then run the front-end
    const int64_t start = static_cast<int64_t>(std::llround(offset * 4000));
    Tensor window({4000}, Precision::f32);
    for (int64_t i = 0; i < 4000; ++i) window.set(i, sample.audio.at((start + i) % 8000));
    Tensor direct = log_mel_spectrogram(window, 4000, params.window, params.stride, params.n_mels);
    REQUIRE(cached.shape() == direct.shape());
    CHECK(cached.bitwise_equal(direct));
  }
}

TEST_CASE("flow on a static scene is near zero") {
  auto tex = smooth_texture(32, 1);
  Tensor frames = frames_from({tex, tex, tex}, 32);
  Tensor flow = estimate_flow(frames, FlowParams{});
  CHECK(flow.shape() == Shape{2, 32, 32, 2});
  double peak = 0;
  for (int64_t i = 0; i < flow.size(); ++i) peak = std::max(peak, std::fabs(flow.at(i)));
  CHECK(peak < 0.05);
}

TEST_CASE("flow recovers a (2,-1) pixel translation within 0.25 px median") {
  const int side = 48, base_side = 64;
  for (uint64_t seed : {2ull, 3ull, 4ull}) {
    auto base = smooth_texture(base_side, seed);
    auto crop = [&](int oy, int ox) {
      std::vector<double> img(static_cast<size_t>(side) * side);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          img[static_cast<size_t>(y) * side + x] =
              base[static_cast<size_t>(y + oy) * base_side + (x + ox)];
        }
      }
      return img;
    };
    // second frame content moves by (dx,dy) = (2,-1)
    Tensor frames = frames_from({crop(8, 8), crop(9, 6)}, side);
    Tensor flow = estimate_flow(frames, FlowParams{});
    std::vector<double> us, vs;
    const int m = 8;  // interior margin
    for (int y = m; y < side - m; ++y) {
      for (int x = m; x < side - m; ++x) {
        us.push_back(flow.at(((0 * side + y) * side + x) * 2));
        vs.push_back(flow.at(((0 * side + y) * side + x) * 2 + 1));
      }
    }
    std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
    std::nth_element(vs.begin(), vs.begin() + vs.size() / 2, vs.end());
    const double mu = us[us.size() / 2];
    const double mv = vs[vs.size() / 2];
    INFO("seed ", seed, " median flow (", mu, ",", mv, ")");
    CHECK(std::fabs(mu - 2.0) < 0.25);
    CHECK(std::fabs(mv - (-1.0)) < 0.25);
  }
}

TEST_CASE("flow curl sign matches the rotation direction at probe points") {
  const int side = 48;
  auto base = smooth_texture(side, 7);
  const double alpha = 0.06;  // radians, counter-clockwise in image coords
  const double c = (side - 1) / 2.0;
  std::vector<double> rotated(static_cast<size_t>(side) * side);
  auto sample = [&](double y, double x) {
    const double yc = std::clamp(y, 0.0, side - 1.0);
    const double xc = std::clamp(x, 0.0, side - 1.0);
    const int y0 = static_cast<int>(yc), x0 = static_cast<int>(xc);
    const int y1 = std::min(y0 + 1, side - 1), x1 = std::min(x0 + 1, side - 1);
    const double fy = yc - y0, fx = xc - x0;
    return base[static_cast<size_t>(y0) * side + x0] * (1 - fy) * (1 - fx) +
           base[static_cast<size_t>(y0) * side + x1] * (1 - fy) * fx +
           base[static_cast<size_t>(y1) * side + x0] * fy * (1 - fx) +
           base[static_cast<size_t>(y1) * side + x1] * fy * fx;
  };
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      // inverse rotation: where did this pixel come from
      const double dx = x - c, dy = y - c;
      const double sx = c + std::cos(-alpha) * dx - std::sin(-alpha) * dy;
      const double sy = c + std::sin(-alpha) * dx + std::cos(-alpha) * dy;
      rotated[static_cast<size_t>(y) * side + x] = sample(sy, sx);
    }
  }
  Tensor frames = frames_from({base, rotated}, side);
  Tensor flow = estimate_flow(frames, FlowParams{});
  auto u_at = [&](int y, int x) { return flow.at(((0 * side + y) * side + x) * 2); };
  auto v_at = [&](int y, int x) { return flow.at(((0 * side + y) * side + x) * 2 + 1); };
  const int ic = side / 2, d = 10;
  // v = alpha*(x-c): positive right of center, negative left
  CHECK(v_at(ic, ic + d) > 0.05);
  CHECK(v_at(ic, ic - d) < -0.05);
  // u = -alpha*(y-c): positive above center, negative below
  CHECK(u_at(ic - d, ic) > 0.05);
  CHECK(u_at(ic + d, ic) < -0.05);
}

TEST_CASE("flow is a pure function of its inputs") {
  auto t0 = smooth_texture(32, 11);
  auto t1 = smooth_texture(32, 12);
  Tensor frames = frames_from({t0, t1}, 32);
  Tensor a = estimate_flow(frames, FlowParams{});
  Tensor b = estimate_flow(frames, FlowParams{});
  CHECK(a.bitwise_equal(b));
}

TEST_CASE("zero-input and translation oracles hold over random textures") {
  // property run over 20 textures: static scenes stay put and a +1 px
  // horizontal shift is recovered to within 0.3 px median
  const int side = 40, base_side = 56;
  for (uint64_t seed = 100; seed < 120; ++seed) {
    auto base = smooth_texture(base_side, seed);
    auto crop = [&](int oy, int ox) {
      std::vector<double> img(static_cast<size_t>(side) * side);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          img[static_cast<size_t>(y) * side + x] =
              base[static_cast<size_t>(y + oy) * base_side + (x + ox)];
        }
      }
      return img;
    };
    Tensor still = frames_from({crop(8, 8), crop(8, 8)}, side);
    Tensor flow0 = estimate_flow(still, FlowParams{});
    double peak = 0;
    for (int64_t i = 0; i < flow0.size(); ++i) peak = std::max(peak, std::fabs(flow0.at(i)));
    REQUIRE(peak < 0.05);

    Tensor shifted = frames_from({crop(8, 8), crop(8, 7)}, side);
    Tensor flow1 = estimate_flow(shifted, FlowParams{});
    std::vector<double> us;
    for (int y = 8; y < side - 8; ++y) {
      for (int x = 8; x < side - 8; ++x) us.push_back(flow1.at(((0 * side + y) * side + x) * 2));
    }
    std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
    REQUIRE(std::fabs(us[us.size() / 2] - 1.0) < 0.3);
  }
}
