// SPDX-License-Identifier: Apache-2.0
#include "cliff/optim.hpp"

#include <cmath>

#include "cliff/errors.hpp"

namespace cliff {

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate >= 0.0f))
    throw ParameterError("optimizer learning rate must be >= 0");
  if (config_.kind == OptimizerKind::Adam) {
    m_.resize(params_.size());
    v_.resize(params_.size());
  }
}

void Optimizer::step() {
  ++steps_;
  const float lr = config_.learning_rate;
  const float bc1 = 1.0f - std::pow(config_.beta1, static_cast<float>(steps_));
  const float bc2 = 1.0f - std::pow(config_.beta2, static_cast<float>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    if (config_.kind == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      continue;
    }
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.empty()) {
      m.assign(w.size(), 0.0f);
      v.assign(w.size(), 0.0f);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0f - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0f - config_.beta2) * g[i] * g[i];
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace cliff
