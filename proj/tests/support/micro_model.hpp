#pragma once

#include <map>
#include <string>

#include "brave/loss.hpp"
#include "brave/model.hpp"
#include "brave/rng.hpp"

namespace brave::testing {

// A deliberately tiny bundle: two conv stages per backbone, 8-wide heads.
// Audio features come out 6-wide vs visual 8-wide, so the audio adapter is
// exercised by default.
inline model::ModelConfig micro_model_config() {
  model::ModelConfig cfg;
  cfg.visual_backbone.stages = {
      {4, {2, 3, 3}, {1, 2, 2}},
      {8, {2, 3, 3}, {2, 2, 2}},
  };
  cfg.audio_backbone.stages = {
      {4, {1, 3, 3}, {1, 2, 2}},
      {6, {1, 3, 3}, {1, 2, 2}},
  };
  cfg.head.hidden = 8;
  cfg.head.output = 8;
  cfg.init_seed = 5;
  return cfg;
}

inline Tensor random_input(Shape shape, uint64_t seed, Precision prec, double lo = 0.0,
                           double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape), prec);
  for (int64_t i = 0; i < t.size(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

// Inputs for a 2-group train graph: K=2 rgb views plus one audio view.
inline std::map<std::string, Tensor> micro_train_inputs(uint64_t seed, Precision prec,
                                                        int batch = 4) {
  return {
      {"x_n", random_input({batch, 4, 6, 6, 3}, seed, prec)},
      {"x_b0_v0", random_input({batch, 4, 4, 4, 3}, seed + 1, prec)},
      {"x_b0_v1", random_input({batch, 4, 4, 4, 3}, seed + 2, prec)},
      {"x_b1_v0", random_input({batch, 1, 8, 5, 1}, seed + 3, prec, -1.0, 1.0)},
  };
}

inline std::vector<loss::ViewGroup> micro_groups() {
  return {{views::Modality::kRgb, 2}, {views::Modality::kAudio, 1}};
}

}  // namespace brave::testing
