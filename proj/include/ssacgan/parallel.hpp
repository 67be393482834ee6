#pragma once

#include <cstddef>
#include <functional>

namespace ssacgan {

/// Kernel thread cap. Initialized from SSACGAN_THREADS (default 1, which
/// keeps every reduction in a fixed serial order).
int kernel_threads();
void set_kernel_threads(int threads);

/// Splits [0, count) into contiguous chunks and runs `body(begin, end)` on up
/// to kernel_threads() threads. Chunks never overlap.
void parallel_for(std::size_t count, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Row-major single-precision GEMM: C = op(A) * op(B) (+ C if accumulate).
/// op(A) is m x k, op(B) is k x n, C is m x n.
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate);

}  // namespace ssacgan
