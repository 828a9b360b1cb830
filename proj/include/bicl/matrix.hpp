#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bicl {

inline std::size_t flat_index(int r, int c, int ld) {
  return static_cast<std::size_t>(r) * static_cast<std::size_t>(ld) + static_cast<std::size_t>(c);
}

/// Non-owning read-only view of a row-major block with leading dimension `ld`.
template <class T>
struct ConstMatrixRef {
  const T* data = nullptr;
  int rows = 0;
  int cols = 0;
  int ld = 0;

  const T& operator()(int r, int c) const { return data[flat_index(r, c, ld)]; }
  const T* row(int r) const { return data + flat_index(r, 0, ld); }
  ConstMatrixRef col_range(int c0, int c1) const { return {data + c0, rows, c1 - c0, ld}; }
};

/// Non-owning mutable view.
template <class T>
struct MatrixRef {
  T* data = nullptr;
  int rows = 0;
  int cols = 0;
  int ld = 0;

  T& operator()(int r, int c) const { return data[flat_index(r, c, ld)]; }
  T* row(int r) const { return data + flat_index(r, 0, ld); }
  MatrixRef col_range(int c0, int c1) const { return {data + c0, rows, c1 - c0, ld}; }
  operator ConstMatrixRef<T>() const { return {data, rows, cols, ld}; }
};

/// Dense row-major matrix. Columns are tokens, rows are features, matching
/// the layout of the transformer input.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
  }

  static Matrix identity(int n, T diag = T(1)) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = diag;
    return m;
  }

  static Matrix from(ConstMatrixRef<T> src) {
    Matrix m(src.rows, src.cols);
    for (int r = 0; r < src.rows; ++r) std::copy_n(src.row(r), src.cols, m.row(r));
    return m;
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) { return data_[flat_index(r, c, cols_)]; }
  const T& operator()(int r, int c) const { return data_[flat_index(r, c, cols_)]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  T* row(int r) { return data_.data() + flat_index(r, 0, cols_); }
  const T* row(int r) const { return data_.data() + flat_index(r, 0, cols_); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  MatrixRef<T> ref() noexcept { return {data_.data(), rows_, cols_, cols_}; }
  ConstMatrixRef<T> ref() const noexcept { return {data_.data(), rows_, cols_, cols_}; }
  ConstMatrixRef<T> cref() const noexcept { return ref(); }
  operator ConstMatrixRef<T>() const noexcept { return ref(); }

  std::vector<T> column(int c) const {
    std::vector<T> out(static_cast<std::size_t>(rows_));
    for (int r = 0; r < rows_; ++r) out[static_cast<std::size_t>(r)] = (*this)(r, c);
    return out;
  }

  /// Reallocates only when the element count grows; contents are unspecified.
  void resize(int rows, int cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(static_cast<std::size_t>(rows) * cols);
  }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using MatrixD = Matrix<double>;

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("shape mismatch: " + what);
}

}  // namespace bicl
