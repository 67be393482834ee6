#include "ssacgan/parallel.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace ssacgan {

namespace {

int threads_from_env() {
  const char* value = std::getenv("SSACGAN_THREADS");
  if (value == nullptr || *value == '\0') return 1;
  try {
    return std::max(1, std::stoi(value));
  } catch (const std::exception&) {
    return 1;
  }
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{threads_from_env()};
  return cap;
}

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor, 0, Eigen::OuterStride<>>;
using View = Eigen::Map<RowMajor, 0, Eigen::OuterStride<>>;

}  // namespace

int kernel_threads() { return thread_cap().load(); }

void set_kernel_threads(int threads) { thread_cap().store(std::max(1, threads)); }

void parallel_for(std::size_t count, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (count == 0) return;
  const std::size_t max_workers = std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_chunk));
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(kernel_threads()), max_workers);
  if (workers <= 1) {
    body(0, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(count, chunk));
  for (auto& t : pool) t.join();
}

void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate) {
  const auto rows = static_cast<Eigen::Index>(m);
  const auto inner = static_cast<Eigen::Index>(k);
  // Stored extents of A and B before the optional transpose.
  const Eigen::Index a_rows = transpose_a ? inner : rows;
  const Eigen::Index a_cols = transpose_a ? rows : inner;
  const Eigen::Index b_cols_stored = transpose_b ? inner : static_cast<Eigen::Index>(n);

  ConstView a_view(a, a_rows, a_cols, Eigen::OuterStride<>(a_cols));

  // Column blocks of C are independent; each block keeps its own reduction
  // order over k, so the partition only affects Eigen's internal blocking.
  parallel_for(n, 256, [&](std::size_t begin, std::size_t end) {
    const auto cols = static_cast<Eigen::Index>(end - begin);
    View c_view(c + begin, rows, cols, Eigen::OuterStride<>(static_cast<Eigen::Index>(n)));
    if (!accumulate) c_view.setZero();
    if (transpose_b) {
      ConstView b_view(b + begin * k, cols, inner, Eigen::OuterStride<>(b_cols_stored));
      if (transpose_a) {
        c_view.noalias() += a_view.transpose() * b_view.transpose();
      } else {
        c_view.noalias() += a_view * b_view.transpose();
      }
    } else {
      ConstView b_view(b + begin, inner, cols, Eigen::OuterStride<>(b_cols_stored));
      if (transpose_a) {
        c_view.noalias() += a_view.transpose() * b_view;
      } else {
        c_view.noalias() += a_view * b_view;
      }
    }
  });
}

}  // namespace ssacgan
