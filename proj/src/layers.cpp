// SPDX-License-Identifier: Apache-2.0
#include "cliff/layers.hpp"

#include <algorithm>
#include <cstring>

namespace cliff {

ParamCount count_params(const ParamList& params) {
  ParamCount c;
  for (const auto& p : params) (p.tensor.requires_grad() ? c.trainable : c.frozen) += p.tensor.numel();
  return c;
}

void set_trainable(const ParamList& params, bool trainable) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(trainable);
  }
}

void append_prefixed(ParamList& out, const std::string& prefix, const ParamList& params) {
  for (const auto& p : params) out.push_back({prefix + p.name, p.tensor});
}

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

std::vector<std::vector<float>> snapshot_values(const ParamList& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

bool bitwise_equal(const ParamList& params, const std::vector<std::vector<float>>& snapshot) {
  if (params.size() != snapshot.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto d = params[i].tensor.data();
    if (d.size() != snapshot[i].size()) return false;
    if (std::memcmp(d.data(), snapshot[i].data(), d.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, float stddev) {
  return {Tensor::randn({out, in}, rng, stddev, true), Tensor::zeros({out}, true)};
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return {Tensor::zeros({out, in}, true), Tensor::zeros({out}, true)};
}

ParamList Linear::parameters(const std::string& prefix) const {
  return {{prefix + "weight", weight}, {prefix + "bias", bias}};
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
  return {Tensor::full({dim}, 1.0f, true), Tensor::zeros({dim}, true)};
}

ParamList LayerNormParams::parameters(const std::string& prefix) const {
  return {{prefix + "gamma", gamma}, {prefix + "beta", beta}};
}

}  // namespace cliff
