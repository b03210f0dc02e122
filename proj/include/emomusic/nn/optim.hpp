#pragma once

#include <vector>

#include "emomusic/nn/layers.hpp"

namespace emomusic::nn {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update; increments step_count and zeroes the grad.
void adam_step(Parameter& p, const AdamConfig& config);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {}
  void step();
  void zero_grad();
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
};

}  // namespace emomusic::nn
