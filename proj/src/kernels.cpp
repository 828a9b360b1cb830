#include "bicl/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

namespace bicl::kernels {
namespace {

// Below this many multiply-adds a product is not worth a parallel region.
constexpr std::int64_t kParallelWork = 1 << 16;

std::int64_t work(int m, int n, int k) {
  return static_cast<std::int64_t>(m) * n * k;
}

template <class T>
void zero_rows(MatrixRef<T> c) {
  for (int i = 0; i < c.rows; ++i) std::fill_n(c.row(i), c.cols, T(0));
}

// Register-blocked kernel for C(i, j) += sum_p a(i, p) * b(p, j) over rows
// [i0, i1). Tiles of kRows x 2 vectors are held in registers; every element
// is accumulated over p in increasing order, the same order as the plain
// loop, so tiling does not change the result.
template <class T>
using Vec __attribute__((vector_size(64))) = T;

constexpr int kRows = 4;

template <class T, int R, class LoadA>
inline void tile(LoadA a, ConstMatrixRef<T> b, const T* tail, MatrixRef<T> c, int i, int k) {
  constexpr int W = static_cast<int>(sizeof(Vec<T>) / sizeof(T));
  const int n = c.cols;
  int j = 0;
  for (; j + 2 * W <= n; j += 2 * W) {
    Vec<T> acc[R][2];
    for (int r = 0; r < R; ++r)
      for (int h = 0; h < 2; ++h) std::memcpy(&acc[r][h], c.row(i + r) + j + h * W, sizeof(Vec<T>));
    for (int p = 0; p < k; ++p) {
      Vec<T> b0, b1;
      std::memcpy(&b0, b.row(p) + j, sizeof b0);
      std::memcpy(&b1, b.row(p) + j + W, sizeof b1);
      for (int r = 0; r < R; ++r) {
        const T av = a(i + r, p);
        acc[r][0] += av * b0;
        acc[r][1] += av * b1;
      }
    }
    for (int r = 0; r < R; ++r)
      for (int h = 0; h < 2; ++h) std::memcpy(c.row(i + r) + j + h * W, &acc[r][h], sizeof(Vec<T>));
  }
  for (; j + W <= n; j += W) {
    Vec<T> acc[R];
    for (int r = 0; r < R; ++r) std::memcpy(&acc[r], c.row(i + r) + j, sizeof(Vec<T>));
    for (int p = 0; p < k; ++p) {
      Vec<T> b0;
      std::memcpy(&b0, b.row(p) + j, sizeof b0);
      for (int r = 0; r < R; ++r) acc[r] += a(i + r, p) * b0;
    }
    for (int r = 0; r < R; ++r) std::memcpy(c.row(i + r) + j, &acc[r], sizeof(Vec<T>));
  }
  if (j < n) {
    // Tail columns come from `tail`, a k x W zero-padded copy of b[:, j:n].
    const int rem = n - j;
    Vec<T> acc[R];
    for (int r = 0; r < R; ++r) {
      acc[r] = Vec<T>{};
      std::memcpy(&acc[r], c.row(i + r) + j, sizeof(T) * static_cast<std::size_t>(rem));
    }
    for (int p = 0; p < k; ++p) {
      Vec<T> b0;
      std::memcpy(&b0, tail + static_cast<std::size_t>(p) * W, sizeof b0);
      for (int r = 0; r < R; ++r) acc[r] += a(i + r, p) * b0;
    }
    for (int r = 0; r < R; ++r) std::memcpy(c.row(i + r) + j, &acc[r], sizeof(T) * static_cast<std::size_t>(rem));
  }
}

template <class T, class LoadA>
void blocked_product(LoadA a, int m, int k, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate) {
  if (!accumulate) zero_rows(c);
  constexpr int W = static_cast<int>(sizeof(Vec<T>) / sizeof(T));
  const int n = c.cols, rem = n % W;
  thread_local std::vector<T> tail_buf;
  const T* tail = nullptr;
  if (rem != 0) {
    tail_buf.assign(static_cast<std::size_t>(k) * W, T(0));
    for (int p = 0; p < k; ++p) std::copy_n(b.row(p) + (n - rem), rem, tail_buf.data() + static_cast<std::size_t>(p) * W);
    tail = tail_buf.data();
  }
  const int blocks = (m + kRows - 1) / kRows;
#pragma omp parallel for schedule(static) if (work(m, c.cols, k) > kParallelWork && !omp_in_parallel())
  for (int blk = 0; blk < blocks; ++blk) {
    const int i = blk * kRows;
    if (i + kRows <= m) {
      tile<T, kRows>(a, b, tail, c, i, k);
    } else {
      for (int r = i; r < m; ++r) tile<T, 1>(a, b, tail, c, r, k);
    }
  }
}

template <class T>
void transpose_into(ConstMatrixRef<T> src, std::vector<T>& dst) {
  dst.resize(static_cast<std::size_t>(src.rows) * static_cast<std::size_t>(src.cols));
  constexpr int kTile = 16;
  for (int r0 = 0; r0 < src.rows; r0 += kTile)
    for (int c0 = 0; c0 < src.cols; c0 += kTile) {
      const int r1 = std::min(r0 + kTile, src.rows), c1 = std::min(c0 + kTile, src.cols);
      for (int c = c0; c < c1; ++c)
        for (int r = r0; r < r1; ++r) dst[flat_index(c, r, src.rows)] = src(r, c);
    }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

template <class T>
void gemm(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate) {
  require_shape(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "gemm");
  blocked_product<T>([a](int i, int p) { return a.data[flat_index(i, p, a.ld)]; }, a.rows, a.cols, b, c,
                     accumulate);
}

template <class T>
void gemm_tn(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate) {
  require_shape(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "gemm_tn");
  blocked_product<T>([a](int i, int p) { return a.data[flat_index(p, i, a.ld)]; }, a.cols, a.rows, b, c,
                     accumulate);
}

template <class T>
void gemm_nt(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate) {
  require_shape(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "gemm_nt");
  thread_local std::vector<T> bt;
  transpose_into(b, bt);
  const ConstMatrixRef<T> b_t{bt.data(), b.cols, b.rows, b.rows};
  gemm<T>(a, b_t, c, accumulate);
}

namespace serial {

template <class T>
void gemm(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate) {
  require_shape(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "serial::gemm");
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      T acc = T(0);
      for (int p = 0; p < a.cols; ++p) acc += a(i, p) * b(p, j);
      c(i, j) = accumulate ? c(i, j) + acc : acc;
    }
}

template <class T>
void gemm_tn(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate) {
  require_shape(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "serial::gemm_tn");
  for (int i = 0; i < a.cols; ++i)
    for (int j = 0; j < b.cols; ++j) {
      T acc = T(0);
      for (int p = 0; p < a.rows; ++p) acc += a(p, i) * b(p, j);
      c(i, j) = accumulate ? c(i, j) + acc : acc;
    }
}

template <class T>
void gemm_nt(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate) {
  require_shape(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "serial::gemm_nt");
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      T acc = T(0);
      for (int p = 0; p < a.cols; ++p) acc += a(i, p) * b(j, p);
      c(i, j) = accumulate ? c(i, j) + acc : acc;
    }
}

}  // namespace serial

#define BICL_INSTANTIATE_KERNELS(T)                                                      \
  template void gemm<T>(ConstMatrixRef<T>, ConstMatrixRef<T>, MatrixRef<T>, bool);         \
  template void gemm_tn<T>(ConstMatrixRef<T>, ConstMatrixRef<T>, MatrixRef<T>, bool);      \
  template void gemm_nt<T>(ConstMatrixRef<T>, ConstMatrixRef<T>, MatrixRef<T>, bool);      \
  template void serial::gemm<T>(ConstMatrixRef<T>, ConstMatrixRef<T>, MatrixRef<T>, bool); \
  template void serial::gemm_tn<T>(ConstMatrixRef<T>, ConstMatrixRef<T>, MatrixRef<T>, bool); \
  template void serial::gemm_nt<T>(ConstMatrixRef<T>, ConstMatrixRef<T>, MatrixRef<T>, bool);

BICL_INSTANTIATE_KERNELS(float)
BICL_INSTANTIATE_KERNELS(double)

}  // namespace bicl::kernels
