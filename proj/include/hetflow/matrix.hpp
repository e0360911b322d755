// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace hetflow {

/// Non-owning view of a dense row-major block.
template <typename T>
struct MatrixRef {
  const T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const T> row(std::size_t r) const { return {data + r * cols, cols}; }
  MatrixRef top(std::size_t n) const { return {data, std::min(n, rows), cols}; }
  MatrixRef slice(std::size_t begin, std::size_t end) const {
    return {data + begin * cols, end - begin, cols};
  }
};

/// Dense row-major matrix. Vectors are stored as 1 x n.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  MatrixRef<T> ref() const { return {data_.data(), rows_, cols_}; }
  operator MatrixRef<T>() const { return ref(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// c += a * b
template <typename T>
void gemm_acc(MatrixRef<T> a, MatrixRef<T> b, Matrix<T>& c) {
  assert(a.cols == b.rows && c.rows() == a.rows && c.cols() == b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* out = c.data() + i * c.cols();
    const T* ai = a.data + i * a.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = ai[k];
      if (aik == T{}) continue;
      const T* bk = b.data + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) out[j] += aik * bk[j];
    }
  }
}

/// c += a^T * b
template <typename T>
void gemm_tn_acc(MatrixRef<T> a, MatrixRef<T> b, Matrix<T>& c) {
  assert(a.rows == b.rows && c.rows() == a.cols && c.cols() == b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const T* ak = a.data + k * a.cols;
    const T* bk = b.data + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const T aki = ak[i];
      if (aki == T{}) continue;
      T* out = c.data() + i * c.cols();
      for (std::size_t j = 0; j < b.cols; ++j) out[j] += aki * bk[j];
    }
  }
}

/// c += a * b^T
template <typename T>
void gemm_nt_acc(MatrixRef<T> a, MatrixRef<T> b, Matrix<T>& c) {
  assert(a.cols == b.cols && c.rows() == a.rows && c.cols() == b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* ai = a.data + i * a.cols;
    T* out = c.data() + i * c.cols();
    for (std::size_t j = 0; j < b.rows; ++j) {
      const T* bj = b.data + j * b.cols;
      T acc{};
      for (std::size_t k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      out[j] += acc;
    }
  }
}

template <typename T>
Matrix<T> matmul(MatrixRef<T> a, MatrixRef<T> b) {
  Matrix<T> c(a.rows, b.cols);
  gemm_acc(a, b, c);
  return c;
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  assert(a.size() == b.size());
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace hetflow
