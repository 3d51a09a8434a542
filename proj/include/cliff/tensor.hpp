// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cliff/rng.hpp"

namespace cliff {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // null for leaves

  std::span<float> ensure_grad();
};

}  // namespace detail

/// Handle to a node of the autodiff graph. Copies share the node; use
/// `clone()` for a value copy. Leaves with `requires_grad` are parameters;
/// every op result that depends on one records how to push gradients back.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value);
  static Tensor randn(Shape shape, Rng& rng, float stddev, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const float> data() const { return node_->value; }
  /// Direct write access; meant for parameter initialization and optimizers.
  std::span<float> mutable_data() { return node_->value; }
  float item() const;
  float at(std::size_t i) const { return node_->value.at(i); }
  float at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  /// Reverse-mode pass from this scalar. Leaf gradients accumulate across
  /// calls until `zero_grad`.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep value copy as a fresh leaf with the same requires_grad flag.
  Tensor clone() const;

  bool is_same(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Differentiable ops. 2-D operands are [rows, cols] row-major.

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[m,in] * weight[out,in]^T + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
/// a[m,n] + row[n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor add_scalar(const Tensor& a, float s);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Concatenate along the last axis; leading dims must agree.
Tensor concat_last(std::span<const Tensor> parts);
/// Concatenate 2-D tensors along rows.
Tensor concat_rows(std::span<const Tensor> parts);
/// Columns [begin, end) of a 2-D tensor, or elements of a 1-D tensor.
Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Row-wise normalization over the last axis with affine gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
/// Row-wise softmax over the last axis.
Tensor softmax(const Tensor& x);
/// Rows of table[V,d] picked by index.
Tensor embedding(const Tensor& table, std::span<const std::size_t> indices);

/// Mean over the batch of -log softmax(logits)[target].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
inline constexpr float kCosineEps = 1e-8f;
/// a.b / (|a||b| + 1e-8) over all elements of two equal-size tensors.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// T^2 * mean over rows of KL(softmax(teacher/T) || softmax(student/T)).
/// The teacher is treated as a constant.
Tensor kl_divergence_with_temperature(const Tensor& student_logits, const Tensor& teacher_logits,
                                      float temperature);

struct GradCheckOptions {
  float step = 1e-2f;
  /// Entries sampled across all inputs; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 7;
  /// Denominator floor of the relative error.
  double floor = 1e-2;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares autodiff gradients of the scalar `fn()` against central finite
/// differences, perturbing the entries of `inputs` in place. The relative
/// error of one entry is |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(const std::function<Tensor()>& fn, std::span<Tensor> inputs,
                                const GradCheckOptions& options = {});

}  // namespace cliff
