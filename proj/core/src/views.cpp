#include "brave/views.hpp"

#include <algorithm>
#include <cmath>

#include "brave/error.hpp"
#include "brave/image.hpp"

namespace brave::views {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::kRgb: return "rgb";
    case Modality::kRgbRandConv: return "rgb_randconv";
    case Modality::kFlow: return "flow";
    case Modality::kAudio: return "audio";
  }
  return "?";
}

Modality modality_from_name(const std::string& name) {
  if (name == "rgb") return Modality::kRgb;
  if (name == "rgb_randconv") return Modality::kRgbRandConv;
  if (name == "flow") return Modality::kFlow;
  if (name == "audio") return Modality::kAudio;
  throw ConfigError("unknown modality '" + name + "'");
}

const char* sync_name(Sync s) {
  switch (s) {
    case Sync::kAsync: return "async";
    case Sync::kStart: return "start";
    case Sync::kCenter: return "center";
  }
  return "?";
}

Sync sync_from_name(const std::string& name) {
  if (name == "async") return Sync::kAsync;
  if (name == "start") return Sync::kStart;
  if (name == "center") return Sync::kCenter;
  throw ConfigError("unknown sync mode '" + name + "'");
}

int64_t ViewSpec::frame_count() const { return static_cast<int64_t>(std::llround(extent * fps)); }

Tensor extract_frames(const Tensor& volume, double src_fps, double clip_seconds, double offset,
                      double extent, double view_fps, int resolution) {
  const int64_t src_frames = volume.dim(0);
  const int64_t h = volume.dim(1), w = volume.dim(2), c = volume.dim(3);
  const int64_t count = static_cast<int64_t>(std::llround(extent * view_fps));
  if (count < 1) throw ConfigError("view extent too short: no frames");
  Tensor frames({count, h, w, c}, Precision::f32);
  auto src = volume.data<float>();
  auto dst = frames.data<float>();
  const int64_t frame_elems = h * w * c;
  for (int64_t i = 0; i < count; ++i) {
    double t = offset + static_cast<double>(i) / view_fps;
    // wrap past the end of the clip, continuing from time zero
    t = std::fmod(t, clip_seconds);
    if (t < 0) t += clip_seconds;
    int64_t idx = static_cast<int64_t>(std::llround(t * src_fps)) % src_frames;
    std::copy_n(src.data() + idx * frame_elems, frame_elems, dst.data() + i * frame_elems);
  }
  return img::resize_bilinear(frames, resolution, resolution);
}

namespace {

Tensor extract_waveform(const Tensor& audio, int audio_rate, double clip_seconds, double offset,
                        double extent) {
  const int64_t total = audio.size();
  const int64_t n = static_cast<int64_t>(std::llround(extent * audio_rate));
  Tensor window({n}, Precision::f32);
  auto src = audio.data<float>();
  auto dst = window.data<float>();
  int64_t start = static_cast<int64_t>(std::llround(offset * audio_rate));
  (void)clip_seconds;
  for (int64_t i = 0; i < n; ++i) dst[i] = src[(start + i) % total];
  return window;
}

// Audio offsets snap to the spectrogram stride grid so that a view's
// spectrogram equals a row range of the full-clip spectrogram.
double snap_to_stride(double offset, int audio_rate, int stride) {
  const double grid = static_cast<double>(stride) / audio_rate;
  return std::round(offset / grid) * grid;
}

SampledView make_view(const data::MultimodalSample& sample, const data::GeneratorConfig& meta,
                      const ViewSpec& spec, double offset, const Tensor* flow_volume) {
  SampledView view;
  view.spec = spec;
  view.source_id = sample.sample_id;
  switch (spec.modality) {
    case Modality::kRgb:
    case Modality::kRgbRandConv:
      view.offset = offset;
      view.tensor = extract_frames(sample.rgb, meta.fps, meta.clip_seconds, offset, spec.extent,
                                   spec.fps, spec.resolution);
      break;
    case Modality::kFlow: {
      if (flow_volume == nullptr) {
        throw ConfigError("flow view requested but no flow volume supplied");
      }
      view.offset = offset;
      // The flow volume has T-1 frames (one per consecutive pair) but shares
      // the source clip's time base.
      view.tensor = extract_frames(*flow_volume, meta.fps, meta.clip_seconds, offset, spec.extent,
                                   spec.fps, spec.resolution);
      break;
    }
    case Modality::kAudio: {
      const double snapped = snap_to_stride(offset, meta.audio_rate, spec.spectrogram.stride);
      view.offset = snapped;
      view.tensor =
          extract_waveform(sample.audio, meta.audio_rate, meta.clip_seconds, snapped, spec.extent);
      break;
    }
  }
  return view;
}

}  // namespace

SampledView sample_narrow(const data::MultimodalSample& sample, const data::GeneratorConfig& meta,
                          const ViewSpec& spec, Rng& rng) {
  if (spec.modality != Modality::kRgb) {
    throw ConfigError("narrow views must use the rgb modality");
  }
  const double T = meta.clip_seconds;
  if (spec.extent > T + 1e-12) {
    throw ConfigError("narrow extent " + std::to_string(spec.extent) + "s exceeds clip length " +
                      std::to_string(T) + "s");
  }
  const double offset = rng.uniform(0.0, T - spec.extent);
  return make_view(sample, meta, spec, offset, nullptr);
}

SampledView sample_broad(const data::MultimodalSample& sample, const data::GeneratorConfig& meta,
                         const ViewSpec& spec, double narrow_offset, double narrow_extent,
                         Rng& rng, const Tensor* flow_volume) {
  const double T = meta.clip_seconds;
  double offset = 0;
  switch (spec.sync) {
    case Sync::kAsync:
      offset = rng.uniform(0.0, T);
      break;
    case Sync::kStart:
      offset = narrow_offset;
      break;
    case Sync::kCenter:
      offset = std::clamp(narrow_offset + narrow_extent / 2 - spec.extent / 2, 0.0, T);
      break;
  }
  return make_view(sample, meta, spec, offset, flow_volume);
}

ViewSpec duration_resolution_tradeoff(const ViewSpec& base, double factor) {
  if (factor <= 0) throw ConfigError("trade-off factor must be positive");
  ViewSpec out = base;
  out.extent = base.extent * factor;
  const double side = base.resolution / std::sqrt(factor);
  const int even = static_cast<int>(std::llround(side / 2.0)) * 2;
  if (even < 8) {
    throw ConfigError("trade-off would shrink resolution to " + std::to_string(even) +
                      "px (minimum 8)");
  }
  out.resolution = even;
  return out;
}

}  // namespace brave::views
