// SPDX-License-Identifier: Apache-2.0
#include "cliff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "cliff/errors.hpp"
#include "cliff/kernels.hpp"

namespace cliff {

using kernels::GemmShape;
using kernels::Layout;
using detail::Node;

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::span<float> Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  return grad;
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> leaf(Shape shape, std::vector<float> value, bool requires_grad) {
  if (numel_of(shape) != value.size())
    throw DimensionError("tensor data length " + std::to_string(value.size()) +
                         " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

// Builds an op result. Parents and the backward closure are only kept when
// some input needs a gradient and recording is on.
Tensor make_op(Shape shape, std::vector<float> value, std::initializer_list<const Tensor*> inputs,
               std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const Tensor* t : inputs) n->parents.push_back(t->node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

Tensor make_op_list(Shape shape, std::vector<float> value, std::span<const Tensor> inputs,
                    std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const Tensor& t : inputs) n->parents.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// Gradient buffer of parent i, or an empty span when it takes no gradient.
std::span<float> pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return {};
  return p.ensure_grad();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined()) throw DimensionError(std::string(op) + ": undefined tensor");
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
}

// Treats 1-D as a single row.
std::pair<std::size_t, std::size_t> as_rows(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got shape " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel_of(shape);
  return Tensor(leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = numel_of(shape);
  return Tensor(leaf(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  return Tensor(leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value) { return Tensor(leaf({}, {value}, false)); }

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev, bool requires_grad) {
  std::vector<float> v(numel_of(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
  return Tensor(leaf(std::move(shape), std::move(v), requires_grad));
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

float Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= dim(0) || col >= dim(1))
    throw IndexError("at(" + std::to_string(row) + "," + std::to_string(col) + ") on shape " +
                     shape_str(shape()));
  return node_->value[row * dim(1) + col];
}

Tensor Tensor::detach() const { return Tensor(leaf(shape(), node_->value, false)); }

Tensor Tensor::clone() const { return Tensor(leaf(shape(), node_->value, node_->requires_grad)); }

void Tensor::backward() const {
  if (numel() != 1) throw DimensionError("backward() needs a scalar, got shape " + shape_str(shape()));
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // Interior gradients are per-pass; only leaves accumulate.
  for (Node* n : order)
    if (n->backward) n->grad.assign(n->value.size(), 0.0f);
  node_->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  const GemmShape s{a.dim(0), b.dim(1), a.dim(1)};
  std::vector<float> out(s.m * s.n);
  kernels::gemm(s, Layout::Normal, Layout::Normal, a.data(), b.data(), out, false);
  return make_op({s.m, s.n}, std::move(out), {&a, &b}, [s](Node& self) {
    const Node& an = *self.parents[0];
    const Node& bn = *self.parents[1];
    if (auto ga = pgrad(self, 0); !ga.empty())
      kernels::gemm({s.m, s.k, s.n}, Layout::Normal, Layout::Trans, self.grad, bn.value, ga, true);
    if (auto gb = pgrad(self, 1); !gb.empty())
      kernels::gemm({s.k, s.n, s.m}, Layout::Trans, Layout::Normal, an.value, self.grad, gb, true);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t m = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in)
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out))
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  std::vector<float> y(m * out);
  kernels::gemm({m, out, in}, Layout::Normal, Layout::Trans, x.data(), weight.data(), y, false);
  if (has_bias) {
    const auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < out; ++j) y[i * out + j] += bv[j];
  }
  auto backward = [m, in, out, has_bias](Node& self) {
    const Node& xn = *self.parents[0];
    const Node& wn = *self.parents[1];
    if (auto gx = pgrad(self, 0); !gx.empty())
      kernels::gemm({m, in, out}, Layout::Normal, Layout::Normal, self.grad, wn.value, gx, true);
    if (auto gw = pgrad(self, 1); !gw.empty())
      kernels::gemm({out, in, m}, Layout::Trans, Layout::Normal, self.grad, xn.value, gw, true);
    if (has_bias)
      if (auto gb = pgrad(self, 2); !gb.empty())
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < out; ++j) gb[j] += self.grad[i * out + j];
  };
  if (has_bias) return make_op({m, out}, std::move(y), {&x, &weight, &bias}, backward);
  return make_op({m, out}, std::move(y), {&x, &weight}, backward);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto g = pgrad(self, p); !g.empty())
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  auto [m, n] = as_rows(a, "add_row");
  if (row.numel() != n)
    throw DimensionError("add_row: row " + shape_str(row.shape()) + " does not match " +
                         shape_str(a.shape()));
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + row.data()[j];
  return make_op(a.shape(), std::move(out), {&a, &row}, [m, n](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    if (auto g = pgrad(self, 1); !g.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor add_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  return make_op(a.shape(), std::move(out), {&a}, [](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "multiply");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (auto g = pgrad(self, 1); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return make_op(a.shape(), std::move(out), {&a}, [s](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_op({n, m}, std::move(out), {&a}, [m, n](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  return make_op(std::move(shape), std::vector<float>(a.data().begin(), a.data().end()), {&a},
                 [](Node& self) {
                   if (auto g = pgrad(self, 0); !g.empty())
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                 });
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (p.rank() == 0 || pl != lead)
      throw DimensionError("concat_last: leading dims of " + shape_str(p.shape()) + " differ from " +
                           shape_str(parts[0].shape()));
    widths.push_back(p.shape().back());
    total += widths.back();
  }
  const std::size_t rows = numel_of(lead);
  std::vector<float> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto d = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.begin() + r * widths[k], widths[k], out.begin() + r * total + off);
    off += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_op_list(std::move(shape), std::move(out), parts, [rows, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto g = pgrad(self, k); !g.empty())
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += self.grad[r * total + off + j];
      off += widths[k];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].shape().back();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != cols)
      throw DimensionError("concat_rows: column count of " + shape_str(p.shape()) + " differs from " +
                           shape_str(parts[0].shape()));
    rows += p.dim(0);
  }
  std::vector<float> out;
  out.reserve(rows * cols);
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.numel());
  }
  return make_op_list({rows, cols}, std::move(out), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (auto g = pgrad(self, k); !g.empty())
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      off += sizes[k];
    }
  });
}

Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end) {
  auto [m, n] = as_rows(a, "slice_last");
  if (begin >= end || end > n)
    throw IndexError("slice_last: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(a.shape()));
  const std::size_t w = end - begin;
  std::vector<float> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.data().begin() + i * n + begin, w, out.begin() + i * w);
  Shape shape = a.rank() == 1 ? Shape{w} : Shape{m, w};
  return make_op(std::move(shape), std::move(out), {&a}, [m, n, w, begin](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_rows");
  if (begin >= end || end > a.dim(0))
    throw IndexError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(a.shape()));
  const std::size_t n = a.dim(1);
  std::vector<float> out(a.data().begin() + begin * n, a.data().begin() + end * n);
  return make_op({end - begin, n}, std::move(out), {&a}, [begin, n](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return make_op({}, {static_cast<float>(acc)}, {&a}, [](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  const float inv = 1.0f / static_cast<float>(a.numel());
  return make_op({}, {static_cast<float>(acc) * inv}, {&a}, [inv](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (auto& v : g) v += self.grad[0] * inv;
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  auto [m, n] = as_rows(x, "layer_norm");
  if (gamma.numel() != n || beta.numel() != n)
    throw DimensionError("layer_norm: affine params must have " + std::to_string(n) + " entries");
  std::vector<float> out(m * n), xhat(m * n), rstd(m);
  const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = xv.data() + i * n;
    double mu_acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu_acc += row[j];
    mu_acc /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu_acc) * (row[j] - mu_acc);
    var /= static_cast<double>(n);
    const auto mu = static_cast<float>(mu_acc);
    rstd[i] = static_cast<float>(1.0 / std::sqrt(var + eps));
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * rstd[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return make_op(x.shape(), std::move(out), {&x, &gamma, &beta},
                 [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                   const auto& gv = self.parents[1]->value;
                   auto gx = pgrad(self, 0);
                   auto gg = pgrad(self, 1);
                   auto gb = pgrad(self, 2);
                   std::vector<float> dxhat(n);
                   for (std::size_t i = 0; i < m; ++i) {
                     const float* g = self.grad.data() + i * n;
                     const float* xh = xhat.data() + i * n;
                     float s1 = 0.0f, s2 = 0.0f;
                     for (std::size_t j = 0; j < n; ++j) {
                       dxhat[j] = g[j] * gv[j];
                       s1 += dxhat[j];
                       s2 += dxhat[j] * xh[j];
                       if (!gg.empty()) gg[j] += g[j] * xh[j];
                       if (!gb.empty()) gb[j] += g[j];
                     }
                     if (!gx.empty()) {
                       const float inv_n = 1.0f / static_cast<float>(n);
                       for (std::size_t j = 0; j < n; ++j)
                         gx[i * n + j] += rstd[i] * (dxhat[j] - inv_n * s1 - xh[j] * inv_n * s2);
                     }
                   }
                 });
}

Tensor gelu(const Tensor& x) {
  std::vector<float> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5f * xv[i] * (1.0f + std::erf(xv[i] * std::numbers::sqrt2_v<float> * 0.5f));
  return make_op(x.shape(), std::move(out), {&x}, [](Node& self) {
    auto g = pgrad(self, 0);
    if (g.empty()) return;
    const auto& xv = self.parents[0]->value;
    const float inv_sqrt_2pi = 0.5f * std::numbers::inv_sqrtpi_v<float> * std::numbers::sqrt2_v<float>;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float v = xv[i];
      const float cdf = 0.5f * (1.0f + std::erf(v * std::numbers::sqrt2_v<float> * 0.5f));
      const float pdf = inv_sqrt_2pi * std::exp(-0.5f * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

namespace {

void softmax_rows(std::span<const float> in, std::span<float> out, std::size_t m, std::size_t n,
                  float inv_temperature = 1.0f) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* r = in.data() + i * n;
    float* o = out.data() + i * n;
    float mx = r[0] * inv_temperature;
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j] * inv_temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(r[j] * inv_temperature - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] = static_cast<float>(o[j] / z);
  }
}

// log-softmax of one row, written into `out`.
void log_softmax_row(const float* r, float* out, std::size_t n, float inv_temperature) {
  float mx = r[0] * inv_temperature;
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j] * inv_temperature);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += std::exp(r[j] * inv_temperature - mx);
  const auto lse = static_cast<float>(mx + std::log(z));
  for (std::size_t j = 0; j < n; ++j) out[j] = r[j] * inv_temperature - lse;
}

}  // namespace

Tensor softmax(const Tensor& x) {
  auto [m, n] = as_rows(x, "softmax");
  std::vector<float> out(m * n);
  softmax_rows(x.data(), out, m, n);
  return make_op(x.shape(), out, {&x}, [m, n, y = out](Node& self) {
    auto g = pgrad(self, 0);
    if (g.empty()) return;
    for (std::size_t i = 0; i < m; ++i) {
      const float* yr = y.data() + i * n;
      const float* gr = self.grad.data() + i * n;
      float dot = 0.0f;
      for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += yr[j] * (gr[j] - dot);
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<float> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= vocab)
      throw IndexError("embedding: index " + std::to_string(indices[r]) + " out of range for " +
                       std::to_string(vocab) + " rows");
    std::copy_n(table.data().begin() + indices[r] * d, d, out.begin() + r * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_op({idx.size(), d}, std::move(out), {&table}, [d, idx](Node& self) {
    if (auto g = pgrad(self, 0); !g.empty())
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
  });
}

// ---------------------------------------------------------------------------
// Losses

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  auto [b, k] = as_rows(logits, "softmax_cross_entropy");
  if (targets.size() != b)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for batch of " + std::to_string(b));
  std::vector<float> logp(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i] >= k)
      throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[i]) + " >= " +
                       std::to_string(k) + " classes");
    log_softmax_row(logits.data().data() + i * k, logp.data() + i * k, k, 1.0f);
    loss -= logp[i * k + targets[i]];
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return make_op({}, {static_cast<float>(loss / static_cast<double>(b))}, {&logits},
                 [b, k, tgt, logp = std::move(logp)](Node& self) {
                   auto g = pgrad(self, 0);
                   if (g.empty()) return;
                   const float s = self.grad[0] / static_cast<float>(b);
                   for (std::size_t i = 0; i < b; ++i)
                     for (std::size_t j = 0; j < k; ++j)
                       g[i * k + j] += s * (std::exp(logp[i * k + j]) - (j == tgt[i] ? 1.0f : 0.0f));
                 });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel() || a.numel() == 0)
    throw DimensionError("cosine_similarity: sizes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const auto av = a.data(), bv = b.data();
  float dot = 0.0f, na2 = 0.0f, nb2 = 0.0f;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  const float na = std::sqrt(na2), nb = std::sqrt(nb2);
  const float den = na * nb + kCosineEps;
  return make_op({}, {dot / den}, {&a, &b}, [dot, na, nb, den](Node& self) {
    const float g = self.grad[0];
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    // d/da = b/den - dot * nb * (a/na) / den^2
    if (auto ga = pgrad(self, 0); !ga.empty()) {
      const float c = na > 0.0f ? dot * nb / (na * den * den) : 0.0f;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (bv[i] / den - c * av[i]);
    }
    if (auto gb = pgrad(self, 1); !gb.empty()) {
      const float c = nb > 0.0f ? dot * na / (nb * den * den) : 0.0f;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * (av[i] / den - c * bv[i]);
    }
  });
}

Tensor kl_divergence_with_temperature(const Tensor& student_logits, const Tensor& teacher_logits,
                                      float temperature) {
  if (!(temperature > 0.0f))
    throw ParameterError("kl_divergence_with_temperature: temperature must be > 0, got " +
                         std::to_string(temperature));
  require_same_shape(student_logits, teacher_logits, "kl_divergence_with_temperature");
  auto [b, k] = as_rows(student_logits, "kl_divergence_with_temperature");
  const float inv_t = 1.0f / temperature;
  std::vector<float> log_q(b * k), log_p(b * k);
  double kl = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    log_softmax_row(student_logits.data().data() + i * k, log_q.data() + i * k, k, inv_t);
    log_softmax_row(teacher_logits.data().data() + i * k, log_p.data() + i * k, k, inv_t);
    for (std::size_t j = 0; j < k; ++j) {
      const float lp = log_p[i * k + j];
      kl += std::exp(lp) * (lp - log_q[i * k + j]);
    }
  }
  const float t2 = temperature * temperature;
  const float value = static_cast<float>(kl / static_cast<double>(b)) * t2;
  // Only the student participates in the graph.
  return make_op({}, {value}, {&student_logits},
                 [b, k, temperature, log_q = std::move(log_q), log_p = std::move(log_p)](Node& self) {
                   auto g = pgrad(self, 0);
                   if (g.empty()) return;
                   const float s = self.grad[0] * temperature / static_cast<float>(b);
                   for (std::size_t i = 0; i < b * k; ++i)
                     g[i] += s * (std::exp(log_q[i]) - std::exp(log_p[i]));
                 });
}

// ---------------------------------------------------------------------------

GradCheckResult check_gradients(const std::function<Tensor()>& fn, std::span<Tensor> inputs,
                                const GradCheckOptions& options) {
  for (auto& t : inputs) t.zero_grad();
  fn().backward();

  std::vector<std::pair<std::size_t, std::size_t>> entries;
  for (std::size_t t = 0; t < inputs.size(); ++t)
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) entries.emplace_back(t, i);
  if (options.max_entries > 0 && options.max_entries < entries.size()) {
    Rng rng(options.seed);
    rng.shuffle(std::span(entries));
    entries.resize(options.max_entries);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (auto [t, i] : entries) {
    Tensor& x = inputs[t];
    const double analytic = x.has_grad() ? x.grad()[i] : 0.0;
    const float original = x.data()[i];
    x.mutable_data()[i] = original + options.step;
    const double plus = fn().item();
    x.mutable_data()[i] = original - options.step;
    const double minus = fn().item();
    x.mutable_data()[i] = original;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double abs_err = std::abs(analytic - numeric);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
    result.max_relative_error = std::max(result.max_relative_error, abs_err / denom);
    ++result.entries_checked;
  }
  return result;
}

}  // namespace cliff
