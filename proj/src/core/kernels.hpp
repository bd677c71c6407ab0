/*
 * Copyright (c) 2026, The gradnet authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace gradnet {

inline constexpr double kNormEps = 1e-12;

/// Row-major dense matrix. Storage is a flat vector of rows*cols entries.
template <class T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    expect(data_.size() == rows_ * cols_, ErrorKind::Shape,
           "matrix data length " + std::to_string(data_.size()) + " != " + std::to_string(rows_) +
               "x" + std::to_string(cols_));
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseMatrix = BasicMatrix<float>;

template <class U, class T>
BasicMatrix<U> matrix_cast(const BasicMatrix<T>& m) {
  std::vector<U> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = static_cast<U>(m.data()[i]);
  return BasicMatrix<U>(m.rows(), m.cols(), std::move(out));
}

struct Triplet {
  std::size_t row;
  std::size_t col;
  float value;
};

/// CSR sparse matrix with strictly increasing column indices per row.
class SparseMatrix {
 public:
  SparseMatrix() : row_ptr_(1, 0) {}
  SparseMatrix(std::size_t rows, std::size_t cols);
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
               std::vector<std::size_t> col_idx, std::vector<float> values);

  // Duplicate (row, col) entries are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  static SparseMatrix identity(std::size_t n);
  template <class T>
  static SparseMatrix from_dense(const BasicMatrix<T>& dense);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::size_t> col_idx() const { return col_idx_; }
  std::span<const float> values() const { return values_; }
  std::span<float> mutable_values() { return values_; }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const float> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  // Stored value at (r, c) or 0.
  float at(std::size_t r, std::size_t c) const;

  SparseMatrix transpose() const;
  bool is_symmetric(float tol = 0.0f) const;
  // Throws Validation on broken CSR invariants or non-finite values.
  void validate() const;

  template <class T>
  BasicMatrix<T> to_dense() const;

  bool operator==(const SparseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_idx_;
  std::vector<float> values_;
};

// Kernel thread count; 1 is the deterministic testing mode.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over contiguous chunks of [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

template <class T>
BasicMatrix<T> spmm(const SparseMatrix& s, const BasicMatrix<T>& h);
// S^T H without forming the transpose.
template <class T>
BasicMatrix<T> spmm_transposed(const SparseMatrix& s, const BasicMatrix<T>& h);

template <class T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <class T>
BasicMatrix<T> l2_normalize_rows(const BasicMatrix<T>& h, double eps = kNormEps);

template <class T>
double cosine_similarity(std::span<const T> a, std::span<const T> b, double eps = kNormEps);

template <class T>
double dot(std::span<const T> a, std::span<const T> b);

template <class T>
double squared_distance(std::span<const T> a, std::span<const T> b);

// Dense products (Eigen-backed).
template <class T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <class T>
BasicMatrix<T> matmul_at_b(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <class T>
BasicMatrix<T> matmul_a_bt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <class T>
void add_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <class T>
BasicMatrix<T> add(BasicMatrix<T> a, const BasicMatrix<T>& b) {
  add_inplace(a, b);
  return a;
}

// Columns [c0, c0 + width) of m.
template <class T>
BasicMatrix<T> slice_cols(const BasicMatrix<T>& m, std::size_t c0, std::size_t width);

// Row gather: out.row(i) = m.row(idx[i]).
template <class T>
BasicMatrix<T> gather_rows(const BasicMatrix<T>& m, std::span<const std::size_t> idx);

template <class T>
bool all_finite(const BasicMatrix<T>& m);

}  // namespace gradnet
