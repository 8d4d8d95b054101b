#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "brave/tensor.hpp"

namespace brave::data {

// Synthetic labeled multimodal clips: moving shapes whose trajectory family
// is a deterministic function of the class, plus a class-pitched tone whose
// amplitude envelope pulses at the motion events of the primary shape.
struct GeneratorConfig {
  int num_classes = 10;
  double clip_seconds = 10.0;
  double fps = 12.5;
  int height = 32;
  int width = 32;
  int audio_rate = 8000;
  int samples_per_class = 100;
  uint64_t master_seed = 1;
  double base_freq = 220.0;  // class k sounds at base_freq * 2^(k/12)

  int64_t frame_count() const;
  int64_t audio_samples() const;
  void validate() const;  // fps*duration and rate*duration must be integral
  std::string cache_key() const;
};

struct MultimodalSample {
  Tensor rgb;    // [T,H,W,3] f32 in [0,1]
  Tensor audio;  // [rate*duration] f32 in [-1,1]
  int label = 0;
  uint64_t sample_id = 0;
};

struct Dataset {
  GeneratorConfig config;
  std::string split;
  std::vector<MultimodalSample> samples;  // class-major order, balanced
  // Two classes built to share identical per-frame marginal statistics and
  // differ only in trajectory (orbit direction); single-frame features
  // cannot separate them.
  std::pair<int, int> motion_only_pair{0, 0};
};

// Motion-event times (seconds) of the primary shape for a given sample; the
// audio envelope pulses are centered at exactly these times.
std::vector<double> motion_event_times(const GeneratorConfig& config, int cls,
                                       uint64_t instance_seed);

MultimodalSample render_sample(const GeneratorConfig& config, int cls, uint64_t instance_seed);

// Per-sample seeds derive from hash(master_seed, split, class, index), so any
// sample can be regenerated in isolation and in any order.
uint64_t sample_seed(const GeneratorConfig& config, const std::string& split, int cls, int index);

Dataset generate_dataset(const GeneratorConfig& config, const std::string& split = "train");

// Seeded permutation of [0, n) for shuffled iteration.
std::vector<size_t> shuffled_indices(size_t n, uint64_t seed);

// Directory of per-sample binary records plus a JSON manifest.
void export_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset import_dataset(const std::filesystem::path& dir);

}  // namespace brave::data
