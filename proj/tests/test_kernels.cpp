// SPDX-License-Identifier: Apache-2.0
#include <omp.h>

#include <vector>

#include "cliff/kernels.hpp"
#include "cliff/rng.hpp"
#include "doctest.h"

using namespace cliff;
using kernels::GemmShape;
using kernels::Layout;

namespace {

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed, bool sparse = false) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = sparse && rng.coin(0.3) ? 0.0f : static_cast<float>(rng.normal());
  return v;
}

// Naive triple loop in double on logical (untransposed) operands.
std::vector<double> reference(GemmShape s, Layout la, Layout lb, const std::vector<float>& a,
                              const std::vector<float>& b) {
  std::vector<double> c(s.m * s.n, 0.0);
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t p = 0; p < s.k; ++p) {
        const double av = la == Layout::Normal ? a[i * s.k + p] : a[p * s.m + i];
        const double bv = lb == Layout::Normal ? b[p * s.n + j] : b[j * s.k + p];
        c[i * s.n + j] += av * bv;
      }
  return c;
}

}  // namespace

TEST_CASE("serial gemm matches a double-precision reference in every layout") {
  const GemmShape s{7, 5, 9};
  const auto a = random_buffer(s.m * s.k, 1), b = random_buffer(s.k * s.n, 2);
  for (Layout la : {Layout::Normal, Layout::Trans})
    for (Layout lb : {Layout::Normal, Layout::Trans}) {
      std::vector<float> c(s.m * s.n, 0.0f);
      kernels::gemm_serial(s, la, lb, a, b, c, false);
      const auto ref = reference(s, la, lb, a, b);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
}

TEST_CASE("accumulate adds onto existing output") {
  const GemmShape s{2, 2, 2};
  const std::vector<float> a{1, 2, 3, 4}, b{1, 0, 0, 1};
  std::vector<float> c{10, 10, 10, 10};
  kernels::gemm_serial(s, Layout::Normal, Layout::Normal, a, b, c, true);
  CHECK(c == std::vector<float>{11, 12, 13, 14});
  kernels::gemm_serial(s, Layout::Normal, Layout::Normal, a, b, c, false);
  CHECK(c == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("parallel gemm is bitwise identical to serial for any thread count") {
  const GemmShape s{67, 33, 45};
  const auto a = random_buffer(s.m * s.k, 3, true), b = random_buffer(s.k * s.n, 4);
  const int original = omp_get_max_threads();
  for (Layout la : {Layout::Normal, Layout::Trans})
    for (Layout lb : {Layout::Normal, Layout::Trans}) {
      std::vector<float> serial(s.m * s.n, 0.5f);
      kernels::gemm_serial(s, la, lb, a, b, serial, true);
      for (int threads : {1, 2, 3, 4}) {
        omp_set_num_threads(threads);
        std::vector<float> par(s.m * s.n, 0.5f);
        kernels::gemm_parallel(s, la, lb, a, b, par, true);
        CHECK(par == serial);
      }
    }
  omp_set_num_threads(original);
}

TEST_CASE("dispatcher agrees with the serial kernel") {
  const GemmShape s{130, 130, 130};
  const auto a = random_buffer(s.m * s.k, 5), b = random_buffer(s.k * s.n, 6);
  std::vector<float> serial(s.m * s.n), any(s.m * s.n);
  kernels::gemm_serial(s, Layout::Normal, Layout::Trans, a, b, serial, false);
  kernels::gemm(s, Layout::Normal, Layout::Trans, a, b, any, false);
  CHECK(any == serial);
  CHECK(kernels::max_threads() >= 1);
}
