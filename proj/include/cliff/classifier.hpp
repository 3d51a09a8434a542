// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

#include "cliff/synth.hpp"
#include "cliff/tensor.hpp"

namespace cliff {

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const float> values);

struct Prediction {
  Thickness thickness = Thickness::Mono;
  std::size_t material = 0;
};

/// Splits a global index k into (k mod C, k div C).
Prediction decode_global(std::size_t global_index);
std::size_t encode_global(const Prediction& p);

/// Any model that scores the concatenated class-by-material label space.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t num_materials() const = 0;
  /// Logits [1, 3 * num_materials()] for one image.
  virtual Tensor global_scores(const Tensor& image) const = 0;

  std::size_t predict_global(const Tensor& image) const;
  Prediction predict(const Tensor& image) const { return decode_global(predict_global(image)); }
};

}  // namespace cliff
