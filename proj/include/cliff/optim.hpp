// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "cliff/tensor.hpp"

namespace cliff {

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// SGD or Adam over a fixed parameter list. A step only touches parameters
/// whose requires_grad flag is set at step time and that hold a gradient, so
/// frozen tensors stay bitwise unchanged.
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerConfig config);

  void step();
  void zero_grad();

  std::int64_t step_count() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(float lr) { config_.learning_rate = lr; }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::int64_t steps_ = 0;
};

}  // namespace cliff
