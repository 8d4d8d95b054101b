#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "brave/synthdata.hpp"
#include "brave/tensor.hpp"
#include "brave/views.hpp"

namespace brave::features {

// ---------------------------------------------------------------------------
// Log-mel spectrograms

// Frame count floor((n - window)/stride) + 1; per frame: periodic Hann
// window, magnitude-squared DFT, triangular mel filterbank spanning 0 to
// Nyquist, log with floor 1e-10. Output [T_s, n_mels] f32 (internal math is
// double, so equal windows produce bitwise-equal rows).
Tensor log_mel_spectrogram(const Tensor& waveform, int sample_rate, int window, int stride,
                           int n_mels);

double hz_to_mel(double hz);  // 2595 * log10(1 + f/700)

// Center frequency (mel) of triangular filter i of n over [0, nyquist].
double mel_filter_center(int i, int n_mels, double nyquist_hz);

// Memoizes the full-clip spectrogram (computed on the wrap-extended
// waveform) and serves stride-aligned windows as row ranges. Falls back to
// direct computation when the stride does not divide the clip length.
// Thread-safe: single writer per sample, many readers.
class SpectrogramCache {
 public:
  Tensor window(const data::MultimodalSample& sample, int audio_rate,
                const views::SpectrogramParams& params, double offset_seconds,
                double extent_seconds);

 private:
  std::mutex mu_;
  std::map<std::string, Tensor> full_;  // key: sample_id | params
};

// ---------------------------------------------------------------------------
// Optical flow (duality-based TV-L1, single reference frame, image pyramid)

struct FlowParams {
  int pyramid_levels = 3;
  int warps = 3;
  int iterations = 25;
  double lambda = 0.15;  // data-term weight
  double theta = 0.3;    // coupling between primal and auxiliary fields
  double tau = 0.25;     // dual step
  double max_flow = 16.0;  // displacement clamp, pixels

  std::string cache_key() const;
};

// Consecutive-pair flow for a frame volume [T,H,W,C] (C=3 converts to luma
// internally). Returns [T-1,H,W,2] displacement maps in pixels. Deterministic
// for fixed parameters.
Tensor estimate_flow(const Tensor& frames, const FlowParams& params);

// Flow for one dataset sample, backed by an on-disk cache keyed by the
// dataset and the flow parameters. Files use the shared binary record format.
Tensor dataset_flow(const data::Dataset& dataset, size_t index, const FlowParams& params,
                    const std::filesystem::path& cache_dir);

// Computes and persists flow for every sample (parallel across samples).
void precompute_flow(const data::Dataset& dataset, const FlowParams& params,
                     const std::filesystem::path& cache_dir);

}  // namespace brave::features
