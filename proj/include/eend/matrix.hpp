// Copyright (c) 2026 eend authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEND_MATRIX_HPP
#define EEND_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace eend {

/// Dense row-major matrix. Column t of a D x T matrix is the frame-t vector.
template <class T>
struct Matrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int64_t r, int64_t c, T fill = T(0)) : rows(r), cols(c), data(static_cast<size_t>(r * c), fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("matrix dims must be non-negative");
  }

  static Matrix zeros(int64_t r, int64_t c) { return Matrix(r, c, T(0)); }

  T& operator()(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
  const T& operator()(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }

  T* row_ptr(int64_t r) { return data.data() + r * cols; }
  const T* row_ptr(int64_t r) const { return data.data() + r * cols; }

  int64_t numel() const { return rows * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    for (int64_t i = 0; i < numel(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

namespace detail {
inline void shape_fail(const std::string& what, const std::string& a, const std::string& b) {
  throw std::invalid_argument("shape mismatch in " + what + ": " + a + " vs " + b);
}
}  // namespace detail

/// C = A * B for A (m x k), B (k x n).
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows) detail::shape_fail("matmul", a.shape_str(), b.shape_str());
  Matrix<T> c(a.rows, b.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    T* crow = c.row_ptr(i);
    const T* arow = a.row_ptr(i);
    for (int64_t p = 0; p < a.cols; ++p) {
      const T av = arow[p];
      const T* brow = b.row_ptr(p);
      for (int64_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

/// C = A * B^T for A (m x k), B (n x k).
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.cols) detail::shape_fail("matmul_nt", a.shape_str(), b.shape_str());
  Matrix<T> c(a.rows, b.rows);
  for (int64_t i = 0; i < a.rows; ++i) {
    const T* arow = a.row_ptr(i);
    T* crow = c.row_ptr(i);
    for (int64_t j = 0; j < b.rows; ++j) {
      const T* brow = b.row_ptr(j);
      T acc = T(0);
      for (int64_t p = 0; p < a.cols; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
  return c;
}

/// C = A^T * B for A (k x m), B (k x n).
template <class T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows != b.rows) detail::shape_fail("matmul_tn", a.shape_str(), b.shape_str());
  Matrix<T> c(a.cols, b.cols);
  for (int64_t p = 0; p < a.rows; ++p) {
    const T* arow = a.row_ptr(p);
    const T* brow = b.row_ptr(p);
    for (int64_t i = 0; i < a.cols; ++i) {
      const T av = arow[i];
      T* crow = c.row_ptr(i);
      for (int64_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols, a.rows);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

template <class T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src) {
  if (!dst.same_shape(src)) detail::shape_fail("add_inplace", dst.shape_str(), src.shape_str());
  for (int64_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
}

template <class T>
void axpy_inplace(Matrix<T>& dst, T alpha, const Matrix<T>& src) {
  if (!dst.same_shape(src)) detail::shape_fail("axpy_inplace", dst.shape_str(), src.shape_str());
  for (int64_t i = 0; i < dst.numel(); ++i) dst.data[i] += alpha * src.data[i];
}

/// Numerically stable logistic function clamped to the open unit interval so
/// saturated activations never round to exactly 0 or 1 at either precision.
template <class T>
T sigmoid_scalar(T x) {
  T y;
  if (x >= T(0)) {
    y = T(1) / (T(1) + std::exp(-x));
  } else {
    const T e = std::exp(x);
    y = e / (T(1) + e);
  }
  const T lo = std::numeric_limits<T>::min();
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::min(std::max(y, lo), hi);
}

}  // namespace eend

#endif  // EEND_MATRIX_HPP
