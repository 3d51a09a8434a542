// SPDX-License-Identifier: Apache-2.0
#include "cliff/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cliff::kernels {
namespace {

// One output row. All three layouts accumulate over the reduction index in
// ascending order, which is what keeps serial and parallel paths identical.
inline void gemm_row(std::size_t i, GemmShape s, Layout la, Layout lb, const float* a,
                     const float* b, float* c, bool accumulate) {
  // Partial sums are kept in double and rounded once per output element.
  thread_local std::vector<double> acc_row;
  float* crow = c + i * s.n;
  if (lb == Layout::Normal) {
    acc_row.assign(s.n, 0.0);
    for (std::size_t p = 0; p < s.k; ++p) {
      const double av = (la == Layout::Normal) ? a[i * s.k + p] : a[p * s.m + i];
      if (av == 0.0) continue;
      const float* brow = b + p * s.n;
      for (std::size_t j = 0; j < s.n; ++j) acc_row[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < s.n; ++j)
      crow[j] = static_cast<float>(accumulate ? crow[j] + acc_row[j] : acc_row[j]);
  } else {
    for (std::size_t j = 0; j < s.n; ++j) {
      const float* brow = b + j * s.k;
      double acc = 0.0;
      if (la == Layout::Normal) {
        const float* arow = a + i * s.k;
        for (std::size_t p = 0; p < s.k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
      } else {
        for (std::size_t p = 0; p < s.k; ++p) acc += static_cast<double>(a[p * s.m + i]) * brow[p];
      }
      crow[j] = static_cast<float>(accumulate ? crow[j] + acc : acc);
    }
  }
}

}  // namespace

void gemm_serial(GemmShape s, Layout la, Layout lb, std::span<const float> a,
                 std::span<const float> b, std::span<float> c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(i, s, la, lb, a.data(), b.data(), c.data(), accumulate);
}

void gemm_parallel(GemmShape s, Layout la, Layout lb, std::span<const float> a,
                   std::span<const float> b, std::span<float> c, bool accumulate) {
  const auto rows = static_cast<long long>(s.m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i)
    gemm_row(static_cast<std::size_t>(i), s, la, lb, a.data(), b.data(), c.data(), accumulate);
}

void gemm(GemmShape s, Layout la, Layout lb, std::span<const float> a, std::span<const float> b,
          std::span<float> c, bool accumulate) {
  if (s.m * s.n * s.k >= kParallelGemmThreshold && max_threads() > 1)
    gemm_parallel(s, la, lb, a, b, c, accumulate);
  else
    gemm_serial(s, la, lb, a, b, c, accumulate);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace cliff::kernels
