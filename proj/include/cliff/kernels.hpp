// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace cliff::kernels {

/// Operand layout for the GEMM kernels. `Trans` means the buffer holds the
/// transpose of the logical operand (row-major in both cases).
enum class Layout { Normal, Trans };

struct GemmShape {
  std::size_t m = 0;  // rows of C
  std::size_t n = 0;  // cols of C
  std::size_t k = 0;  // reduction length
};

/// C (+)= op(A) * op(B). Reference implementation, single thread.
void gemm_serial(GemmShape shape, Layout la, Layout lb, std::span<const float> a,
                 std::span<const float> b, std::span<float> c, bool accumulate);

/// Same contract, rows of C split across OpenMP threads. Each output element
/// is reduced in the same order as the serial kernel, so results are
/// bitwise identical regardless of thread count.
void gemm_parallel(GemmShape shape, Layout la, Layout lb, std::span<const float> a,
                   std::span<const float> b, std::span<float> c, bool accumulate);

/// Work (m*n*k) at or above which `gemm` dispatches to the parallel kernel.
inline constexpr std::size_t kParallelGemmThreshold = std::size_t{1} << 21;

/// Dispatching entry point used by the tensor ops.
void gemm(GemmShape shape, Layout la, Layout lb, std::span<const float> a,
          std::span<const float> b, std::span<float> c, bool accumulate);

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace cliff::kernels
