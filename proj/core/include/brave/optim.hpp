#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "brave/graph.hpp"
#include "brave/io.hpp"

namespace brave::optim {

struct OptimConfig {
  double base_lr = 1.0;
  int64_t warmup_steps = 100;
  int64_t total_steps = 2000;
  double weight_decay = 0.01;
  double trust_coefficient = 0.001;
  double momentum = 0.9;
  double predictor_lr_multiplier = 10.0;
  double lars_epsilon = 1e-9;
};

// Linear ramp 0 -> base_lr over warmup_steps, then cosine decay to zero at
// total_steps; steps beyond the end clamp to the final value.
double lr_at(int64_t step, const OptimConfig& config);

// Name-pattern parameter grouping. Biases and batch-norm parameters skip
// both the trust-ratio adaptation and weight decay; predictor parameters
// train at predictor_lr_multiplier times the base rate.
bool is_excluded_param(const std::string& name);     // *.bias, *.bn_scale, *.bn_offset
bool is_predictor_param(const std::string& name);    // predictor.*

// Startup validation: every trainable name must end in a recognized suffix
// so that a misnamed parameter cannot silently land in the wrong group.
void validate_param_names(const std::vector<std::string>& names);

// Trust ratio for an adapted parameter given ||w|| and ||g + wd*w||.
double lars_trust_ratio(double weight_norm, double adapted_grad_norm, const OptimConfig& config);

class LarsOptimizer {
 public:
  LarsOptimizer(OptimConfig config, std::shared_ptr<ad::ParamStore> store);

  // One update over all trainable parameters present in `grads`.
  // Throws NumericError naming the parameter on a non-finite gradient.
  void step(const std::map<std::string, Tensor>& grads);

  int64_t step_count() const { return step_; }
  double last_lr() const { return last_lr_; }
  const OptimConfig& config() const { return config_; }

  // Momentum buffers and the step counter, for checkpointing.
  io::Record state_record() const;
  void load_state(const io::Record& record);

 private:
  OptimConfig config_;
  std::shared_ptr<ad::ParamStore> store_;
  std::map<std::string, Tensor> momentum_;
  int64_t step_ = 0;
  double last_lr_ = 0.0;
};

}  // namespace brave::optim
