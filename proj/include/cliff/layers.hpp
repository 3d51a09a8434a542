// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cliff/rng.hpp"
#include "cliff/tensor.hpp"

namespace cliff {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

struct ParamCount {
  std::size_t trainable = 0;  // scalar entries with requires_grad
  std::size_t frozen = 0;
  std::size_t total() const { return trainable + frozen; }
};

ParamCount count_params(const ParamList& params);
void set_trainable(const ParamList& params, bool trainable);
/// Appends `params` to `out` with `prefix` prepended to each name.
void append_prefixed(ParamList& out, const std::string& prefix, const ParamList& params);
std::vector<Tensor> tensors_of(const ParamList& params);
/// Bitwise snapshot of all values, for freeze checks.
std::vector<std::vector<float>> snapshot_values(const ParamList& params);
bool bitwise_equal(const ParamList& params, const std::vector<std::vector<float>>& snapshot);

/// y = x W^T + b with W stored [out, in].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng, float stddev = 0.02f);
  static Linear zeros(std::size_t in, std::size_t out);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  ParamList parameters(const std::string& prefix) const;
  Linear clone() const { return {weight.clone(), bias.clone()}; }
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  ParamList parameters(const std::string& prefix) const;
  LayerNormParams clone() const { return {gamma.clone(), beta.clone()}; }
};

}  // namespace cliff
