#pragma once

#include <string>

#include "brave/rng.hpp"
#include "brave/synthdata.hpp"
#include "brave/tensor.hpp"

namespace brave::views {

enum class Modality { kRgb, kRgbRandConv, kFlow, kAudio };
enum class Sync { kAsync, kStart, kCenter };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);
const char* sync_name(Sync s);
Sync sync_from_name(const std::string& name);

struct SpectrogramParams {
  int window = 160;  // samples
  int stride = 80;
  int n_mels = 40;
};

struct ViewSpec {
  Modality modality = Modality::kRgb;
  double extent = 1.28;  // seconds
  double fps = 12.5;     // visual modalities
  int resolution = 32;   // square output side, visual modalities
  Sync sync = Sync::kAsync;
  SpectrogramParams spectrogram;  // audio modality

  int64_t frame_count() const;  // round(extent * fps)
};

struct SampledView {
  // rgb: [F,R,R,3]; flow: [F,R,R,2]; audio: waveform window [n]
  Tensor tensor;
  double offset = 0.0;  // seconds into the source clip
  ViewSpec spec;
  uint64_t source_id = 0;
};

// Uniform temporal offset in [0, T - extent]; frames at offset + i/fps with
// nearest-frame lookup, resized to spec.resolution.
SampledView sample_narrow(const data::MultimodalSample& sample, const data::GeneratorConfig& meta,
                          const ViewSpec& spec, Rng& rng);

// Broad offset per sync mode (async: U[0,T]; start: the narrow offset;
// center: narrow_offset + tau_n/2 - tau_b/2 clamped to [0,T]). Views that
// run past the end of the clip wrap around to its start. Flow views sample
// from a precomputed flow volume passed by the caller.
SampledView sample_broad(const data::MultimodalSample& sample, const data::GeneratorConfig& meta,
                         const ViewSpec& spec, double narrow_offset, double narrow_extent,
                         Rng& rng, const Tensor* flow_volume = nullptr);

// Longer extent at proportionally lower spatial resolution: extent scales by
// `factor`, side by 1/sqrt(factor) rounded to the nearest even integer, so
// frames x pixels stays approximately constant.
ViewSpec duration_resolution_tradeoff(const ViewSpec& base, double factor);

// Nearest-source-frame extraction with wrap-around, shared by visual view
// sampling; exposed for tests.
Tensor extract_frames(const Tensor& volume, double src_fps, double clip_seconds, double offset,
                      double extent, double view_fps, int resolution);

}  // namespace brave::views
