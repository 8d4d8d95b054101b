#include "brave/optim.hpp"

#include <cmath>
#include <numbers>

#include "brave/error.hpp"

namespace brave::optim {

double lr_at(int64_t step, const OptimConfig& config) {
  if (step < 0) throw ConfigError("negative step in lr_at");
  if (step > config.total_steps) step = config.total_steps;
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    return config.base_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  const int64_t span = config.total_steps - config.warmup_steps;
  if (span <= 0) return config.base_lr;
  const double progress = static_cast<double>(step - config.warmup_steps) / static_cast<double>(span);
  return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool is_excluded_param(const std::string& name) {
  return ends_with(name, ".bias") || ends_with(name, ".bn_scale") || ends_with(name, ".bn_offset");
}

bool is_predictor_param(const std::string& name) { return name.rfind("predictor", 0) == 0; }

void validate_param_names(const std::vector<std::string>& names) {
  for (const std::string& name : names) {
    if (!ends_with(name, ".weight") && !is_excluded_param(name)) {
      throw ConfigError("parameter '" + name +
                        "' does not match any optimizer group (expected *.weight, *.bias, "
                        "*.bn_scale or *.bn_offset)");
    }
  }
}

double lars_trust_ratio(double weight_norm, double adapted_grad_norm, const OptimConfig& config) {
  if (weight_norm > 0.0 && adapted_grad_norm > 0.0) {
    return config.trust_coefficient * weight_norm / (adapted_grad_norm + config.lars_epsilon);
  }
  return 1.0;
}

LarsOptimizer::LarsOptimizer(OptimConfig config, std::shared_ptr<ad::ParamStore> store)
    : config_(config), store_(std::move(store)) {
  validate_param_names(store_->trainable_names());
}

void LarsOptimizer::step(const std::map<std::string, Tensor>& grads) {
  const double global_lr = lr_at(step_, config_);
  last_lr_ = global_lr;
  for (const auto& [name, grad] : grads) {
    if (!store_->trainable(name)) {
      throw ConfigError("gradient supplied for non-trainable parameter '" + name + "'");
    }
    if (!grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
    Tensor& w = store_->mutable_value(name);
    if (w.shape() != grad.shape()) {
      throw NumericError("gradient shape " + shape_str(grad.shape()) + " mismatches parameter '" +
                         name + "' " + shape_str(w.shape()));
    }
    auto it = momentum_.find(name);
    if (it == momentum_.end()) it = momentum_.emplace(name, Tensor(w.shape(), w.precision())).first;
    Tensor& v = it->second;

    const double group_mult = is_predictor_param(name) ? config_.predictor_lr_multiplier : 1.0;
    const bool excluded = is_excluded_param(name);

    dispatch(w.precision(), [&](auto tag) {
      using T = decltype(tag);
      auto wv = w.data<T>();
      auto gv = grad.data<T>();
      auto mv = v.data<T>();
      if (excluded) {
        // plain momentum SGD: no weight decay, no trust-ratio adaptation
        const T lr = static_cast<T>(global_lr * group_mult);
        const T mom = static_cast<T>(config_.momentum);
        for (size_t i = 0; i < wv.size(); ++i) {
          mv[i] = mom * mv[i] + lr * gv[i];
          wv[i] -= mv[i];
        }
      } else {
        double wn2 = 0, gn2 = 0;
        for (size_t i = 0; i < wv.size(); ++i) {
          const double adj = static_cast<double>(gv[i]) + config_.weight_decay * static_cast<double>(wv[i]);
          wn2 += static_cast<double>(wv[i]) * static_cast<double>(wv[i]);
          gn2 += adj * adj;
        }
        const double local = lars_trust_ratio(std::sqrt(wn2), std::sqrt(gn2), config_);
        const T lr = static_cast<T>(global_lr * group_mult * local);
        const T mom = static_cast<T>(config_.momentum);
        const T wd = static_cast<T>(config_.weight_decay);
        for (size_t i = 0; i < wv.size(); ++i) {
          mv[i] = mom * mv[i] + lr * (gv[i] + wd * wv[i]);
          wv[i] -= mv[i];
        }
      }
    });
  }
  ++step_;
}

io::Record LarsOptimizer::state_record() const {
  io::Record rec;
  rec.ints["step"] = step_;
  for (const auto& [name, v] : momentum_) rec.tensors["momentum/" + name] = v;
  return rec;
}

void LarsOptimizer::load_state(const io::Record& record) {
  step_ = record.ints.at("step");
  momentum_.clear();
  const std::string prefix = "momentum/";
  for (const auto& [name, t] : record.tensors) {
    if (name.rfind(prefix, 0) == 0) momentum_[name.substr(prefix.size())] = t;
  }
}

}  // namespace brave::optim
