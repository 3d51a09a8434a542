// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "cliff/errors.hpp"
#include "cliff/optim.hpp"
#include "cliff/tensor.hpp"
#include "doctest.h"

using namespace cliff;

namespace {

Tensor param(Shape shape, std::vector<float> v) { return Tensor::from_data(std::move(shape), std::move(v), true); }

Tensor random_param(Shape shape, std::uint64_t seed, float std = 1.0f) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng, std, true);
}

// Weighted sum with fixed random weights so every output element matters.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(multiply(y, Tensor::randn(y.shape(), rng, 1.0f)));
}

double grad_error(const std::function<Tensor()>& fn, std::vector<Tensor> inputs) {
  return check_gradients(fn, inputs).max_relative_error;
}

// Independent double-precision references.
double ref_logsumexp(const std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> ref_softmax(std::vector<double> x, double t) {
  for (auto& v : x) v /= t;
  const double lse = ref_logsumexp(x);
  for (auto& v : x) v = std::exp(v - lse);
  return x;
}

}  // namespace

TEST_CASE("matmul values") {
  const Tensor id = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const Tensor b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
  const Tensor c = matmul(id, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(std::vector<float>(c.data().begin(), c.data().end()) == std::vector<float>{3, 4, 5, 6});
  CHECK(matmul(Tensor::from_data({1, 2}, {1, 2}), Tensor::from_data({2, 1}, {3, 4})).item() == 11.0f);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum is ones times B transpose") {
  Tensor a = random_param({3, 3}, 1);
  Tensor b = random_param({3, 3}, 2);
  sum(matmul(a, b)).backward();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      float expect = 0.0f;
      for (std::size_t j = 0; j < 3; ++j) expect += b.at(k * 3 + j);
      CHECK(a.grad()[i * 3 + k] == doctest::Approx(expect).epsilon(1e-5));
    }
  a.zero_grad();
  GradCheckOptions opt;
  opt.step = 1e-3f;
  std::vector<Tensor> in{a, b};
  CHECK(check_gradients([&] { return sum(matmul(a, b)); }, in, opt).max_relative_error < 1e-3);
}

TEST_CASE("softmax cross entropy") {
  const std::size_t t0[] = {0};
  CHECK(softmax_cross_entropy(Tensor::from_data({1, 3}, {0, 0, 0}), t0).item() ==
        doctest::Approx(std::log(3.0)).epsilon(1e-6));
  const float saturated = softmax_cross_entropy(Tensor::from_data({1, 3}, {1000, 0, 0}), t0).item();
  CHECK(std::isfinite(saturated));
  CHECK(saturated == doctest::Approx(0.0).epsilon(1e-6));

  Rng rng(5);
  const Tensor logits = Tensor::randn({4, 5}, rng, 2.0f);
  const std::size_t targets[] = {0, 3, 4, 1};
  double expect = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    std::vector<double> row(5);
    for (std::size_t c = 0; c < 5; ++c) row[c] = logits.at(r, c);
    expect += ref_logsumexp(row) - row[targets[r]];
  }
  CHECK(softmax_cross_entropy(logits, targets).item() == doctest::Approx(expect / 4).epsilon(1e-5));

  const std::size_t bad[] = {5, 0, 0, 0};
  CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), IndexError);
}

TEST_CASE("cosine similarity") {
  auto cos = [](std::vector<float> a, std::vector<float> b) {
    const std::size_t n = a.size();
    return cosine_similarity(Tensor::from_data({n}, std::move(a)), Tensor::from_data({n}, std::move(b))).item();
  };
  CHECK(cos({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(cos({1, 0}, {0, 1}) == 0.0f);
  CHECK(cos({1, 1}, {-1, -1}) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(cos({0, 0}, {1, 2}) == 0.0f);
}

TEST_CASE("temperature KL divergence") {
  const Tensor a = Tensor::from_data({1, 2}, {0.3f, -1.0f});
  CHECK(kl_divergence_with_temperature(a, a, 2.0f).item() == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(kl_divergence_with_temperature(Tensor::from_data({1, 2}, {0, 10}), Tensor::from_data({1, 2}, {10, 0}), 1.0f)
            .item() > 1.0f);
  CHECK_THROWS_AS(kl_divergence_with_temperature(a, a, 0.0f), ParameterError);
  CHECK_THROWS_AS(kl_divergence_with_temperature(a, a, -1.0f), ParameterError);

  Rng rng(11);
  const Tensor s = Tensor::randn({2, 3}, rng, 1.5f);
  const Tensor t = Tensor::randn({2, 3}, rng, 1.5f);
  const double T = 2.0;
  double expect = 0.0;
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> sr(3), tr(3);
    for (std::size_t c = 0; c < 3; ++c) {
      sr[c] = s.at(r, c);
      tr[c] = t.at(r, c);
    }
    const auto p = ref_softmax(tr, T), q = ref_softmax(sr, T);
    for (std::size_t c = 0; c < 3; ++c) expect += p[c] * (std::log(p[c]) - std::log(q[c]));
  }
  expect = expect / 2 * T * T;
  CHECK(kl_divergence_with_temperature(s, t, 2.0f).item() == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("KL gradient reaches only the student") {
  Tensor s = random_param({2, 4}, 3);
  Tensor t = random_param({2, 4}, 4);
  kl_divergence_with_temperature(s, t, 2.0f).backward();
  CHECK(s.has_grad());
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("check_gradients on simple functions") {
  Tensor x = param({3}, {1, 2, 3});
  std::vector<Tensor> in{x};
  CHECK(grad_error([&] { return sum(multiply(x, x)); }, in) < 1e-4);
  x.zero_grad();
  sum(multiply(x, x)).backward();
  CHECK(x.grad()[0] == 2.0f);
  CHECK(x.grad()[1] == 4.0f);
  CHECK(x.grad()[2] == 6.0f);

  const auto r = check_gradients([&] { return Tensor::scalar(4.0f); }, in);
  CHECK(r.max_absolute_error < 1e-6);
}

// One property check per differentiable op at the tolerance the model relies on.
TEST_CASE("finite-difference agreement for every op") {
  const double tol = 5e-3;
  Tensor a = random_param({3, 4}, 21);
  Tensor b = random_param({3, 4}, 22);
  Tensor w = random_param({5, 4}, 23);
  Tensor bias = random_param({5}, 24);
  Tensor row = random_param({4}, 25);
  Tensor v = random_param({6}, 26);
  Tensor u = random_param({6}, 27);

  SUBCASE("linear") {
    CHECK(grad_error([&] { return probe(linear(a, w, bias)); }, {a, w, bias}) < tol);
  }
  SUBCASE("add / add_row / add_scalar") {
    CHECK(grad_error([&] { return probe(add(a, b)); }, {a, b}) < tol);
    CHECK(grad_error([&] { return probe(add_row(a, row)); }, {a, row}) < tol);
    CHECK(grad_error([&] { return probe(add_scalar(a, 0.7f)); }, {a}) < tol);
  }
  SUBCASE("multiply / scale") {
    CHECK(grad_error([&] { return probe(multiply(a, b)); }, {a, b}) < tol);
    CHECK(grad_error([&] { return probe(scale(a, -1.3f)); }, {a}) < tol);
  }
  SUBCASE("transpose / reshape") {
    CHECK(grad_error([&] { return probe(transpose(a)); }, {a}) < tol);
    CHECK(grad_error([&] { return probe(reshape(a, {2, 6})); }, {a}) < tol);
  }
  SUBCASE("concat / slice") {
    CHECK(grad_error([&] {
            const Tensor parts[] = {a, b};
            return probe(concat_last(parts));
          },
          {a, b}) < tol);
    CHECK(grad_error([&] {
            const Tensor parts[] = {a, b};
            return probe(concat_rows(parts));
          },
          {a, b}) < tol);
    CHECK(grad_error([&] { return probe(slice_last(a, 1, 3)); }, {a}) < tol);
    CHECK(grad_error([&] { return probe(slice_rows(a, 1, 3)); }, {a}) < tol);
  }
  SUBCASE("sum / mean") {
    CHECK(grad_error([&] { return sum(a); }, {a}) < tol);
    CHECK(grad_error([&] { return mean(multiply(a, a)); }, {a}) < tol);
  }
  SUBCASE("layer norm") {
    Tensor gamma = random_param({4}, 28);
    Tensor beta = random_param({4}, 29);
    CHECK(grad_error([&] { return probe(layer_norm(a, gamma, beta)); }, {a, gamma, beta}) < tol);
  }
  SUBCASE("gelu / softmax") {
    CHECK(grad_error([&] { return probe(gelu(a)); }, {a}) < tol);
    CHECK(grad_error([&] { return probe(softmax(a)); }, {a}) < tol);
  }
  SUBCASE("embedding") {
    Tensor table = random_param({5, 3}, 30);
    const std::size_t idx[] = {4, 0, 4};
    CHECK(grad_error([&] { return probe(embedding(table, idx)); }, {table}) < tol);
  }
  SUBCASE("losses") {
    const std::size_t targets[] = {0, 3, 1};
    CHECK(grad_error([&] { return softmax_cross_entropy(a, targets); }, {a}) < tol);
    CHECK(grad_error([&] { return cosine_similarity(v, u); }, {v, u}) < tol);
    Tensor teacher = Tensor::from_data(b.shape(), {b.data().begin(), b.data().end()});
    CHECK(grad_error([&] { return kl_divergence_with_temperature(a, teacher, 2.0f); }, {a}) < tol);
  }
}

TEST_CASE("detach stops gradient") {
  Tensor x = param({2}, {1.5f, -2.0f});
  const Tensor d = x.detach();
  CHECK(std::equal(d.data().begin(), d.data().end(), x.data().begin()));
  CHECK_FALSE(d.requires_grad());
  sum(multiply(d, d)).backward();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("leaf gradients accumulate until zeroed") {
  Tensor x = param({2}, {1, 2});
  sum(x).backward();
  sum(x).backward();
  CHECK(x.grad()[0] == 2.0f);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x = param({2}, {1, 2});
  Tensor y;
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    y = sum(multiply(x, x));
  }
  CHECK(grad_enabled());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("every reachable parameter gets a gradient with matching shape") {
  Tensor w = random_param({3, 4}, 40);
  Tensor bias = random_param({3}, 41);
  Tensor x = random_param({2, 4}, 42);
  probe(gelu(linear(x, w, bias))).backward();
  for (const Tensor* t : {&w, &bias, &x}) {
    REQUIRE(t->has_grad());
    CHECK(t->grad().size() == t->numel());
  }
}

TEST_CASE("optimizers") {
  SUBCASE("SGD step") {
    Tensor x = param({2}, {1, -1});
    Optimizer opt({x}, {OptimizerKind::SGD, 0.5f});
    sum(multiply(x, x)).backward();
    opt.step();
    CHECK(x.at(0) == 0.0f);
    CHECK(x.at(1) == 0.0f);
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("Adam first step moves by lr along the gradient sign") {
    Tensor x = param({2}, {1, -1});
    Optimizer opt({x}, {OptimizerKind::Adam, 0.1f});
    sum(multiply(x, x)).backward();
    opt.step();
    CHECK(x.at(0) == doctest::Approx(0.9).epsilon(1e-5));
    CHECK(x.at(1) == doctest::Approx(-0.9).epsilon(1e-5));
  }
  SUBCASE("Adam minimizes a quadratic") {
    Tensor x = param({3}, {3, -2, 1});
    Optimizer opt({x}, {OptimizerKind::Adam, 0.05f});
    for (int i = 0; i < 400; ++i) {
      opt.zero_grad();
      sum(multiply(x, x)).backward();
      opt.step();
    }
    for (float v : x.data()) CHECK(std::abs(v) < 0.05f);
  }
  SUBCASE("frozen tensors stay bitwise unchanged") {
    Tensor x = param({3}, {0.1f, 0.2f, 0.3f});
    Tensor frozen = param({3}, {0.4f, 0.5f, 0.6f});
    const std::vector<float> before(frozen.data().begin(), frozen.data().end());
    Optimizer opt({x, frozen}, {OptimizerKind::Adam, 0.1f});
    for (int i = 0; i < 10; ++i) {
      opt.zero_grad();
      frozen.set_requires_grad(i % 2 == 0);
      sum(multiply(add(x, frozen), add(x, frozen))).backward();
      frozen.set_requires_grad(false);
      frozen.zero_grad();
      opt.step();
    }
    CHECK(std::vector<float>(frozen.data().begin(), frozen.data().end()) == before);
  }
}

TEST_CASE("ops are deterministic") {
  Tensor a = random_param({4, 6}, 50);
  Tensor b = random_param({6, 5}, 51);
  const Tensor c1 = softmax(matmul(a, b)), c2 = softmax(matmul(a, b));
  CHECK(std::equal(c1.data().begin(), c1.data().end(), c2.data().begin()));
}
