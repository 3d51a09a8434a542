// SPDX-License-Identifier: Apache-2.0
#include "cliff/classifier.hpp"

#include "cliff/errors.hpp"

namespace cliff {

std::size_t argmax_lowest(std::span<const float> values) {
  if (values.empty()) throw DimensionError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Prediction decode_global(std::size_t global_index) {
  return {static_cast<Thickness>(global_index % kNumClasses), global_index / kNumClasses};
}

std::size_t encode_global(const Prediction& p) {
  return p.material * kNumClasses + static_cast<std::size_t>(p.thickness);
}

std::size_t Classifier::predict_global(const Tensor& image) const {
  NoGradGuard no_grad;
  return argmax_lowest(global_scores(image).data());
}

}  // namespace cliff
