#pragma once

#include "bicl/matrix.hpp"

namespace bicl::kernels {

// Dense products used by every forward and backward pass.
//
// The default versions split output rows across OpenMP threads. Each output
// element is reduced by one thread in a fixed order, so results are bitwise
// identical for any thread count. When called from inside a parallel region
// they run serially on the calling thread.
//
// `accumulate` adds into C instead of overwriting it.

/// C = A * B
template <class T>
void gemm(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate = false);

/// C = A^T * B
template <class T>
void gemm_tn(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate = false);

/// C = A * B^T
template <class T>
void gemm_nt(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate = false);

/// Threads available to the kernels (omp_get_max_threads).
int max_threads();
void set_threads(int n);

namespace serial {

// Straight triple loops kept as the reference the parallel kernels are tested
// against. Never used on a hot path.

template <class T>
void gemm(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate = false);
template <class T>
void gemm_tn(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate = false);
template <class T>
void gemm_nt(ConstMatrixRef<T> a, ConstMatrixRef<T> b, MatrixRef<T> c, bool accumulate = false);

}  // namespace serial

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c(a.rows(), b.cols());
  gemm<T>(a.ref(), b.ref(), c.ref());
  return c;
}

}  // namespace bicl::kernels
