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

#include "kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace gradnet {

namespace {

std::atomic<int> g_threads{1};

template <class T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const RowMajor<T>> view(const BasicMatrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

template <class T>
Eigen::Map<RowMajor<T>> view(BasicMatrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

void check_same_shape(std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1, const char* op) {
  if (r0 != r1 || c0 != c1) {
    fail(ErrorKind::Shape, std::string(op) + ": shape mismatch " + std::to_string(r0) + "x" +
                               std::to_string(c0) + " vs " + std::to_string(r1) + "x" + std::to_string(c1));
  }
}

}  // namespace

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }
int num_threads() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(num_threads());
  if (threads <= 1 || n < 2 * threads) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::jthread> workers;
  for (std::size_t b = chunk; b < n; b += chunk) {
    workers.emplace_back([&fn, b, chunk, n] { fn(b, std::min(n, b + chunk)); });
  }
  fn(0, std::min(n, chunk));
}

// ---------------------------------------------------------------------------
// SparseMatrix

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                           std::vector<std::size_t> col_idx, std::vector<float> values)
    : rows_(rows),
      cols_(cols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  validate();
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    expect(t.row < rows && t.col < cols, ErrorKind::Shape, "triplet index out of range");
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m(rows, cols);
  const Triplet* prev = nullptr;
  for (const auto& t : entries) {
    if (prev != nullptr && prev->row == t.row && prev->col == t.col) {
      m.values_.back() += t.value;
    } else {
      m.col_idx_.push_back(t.col);
      m.values_.push_back(t.value);
      ++m.row_ptr_[t.row + 1];
    }
    prev = &t;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> ptr(n + 1), idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    ptr[i + 1] = i + 1;
    idx[i] = i;
  }
  return SparseMatrix(n, n, std::move(ptr), std::move(idx), std::vector<float>(n, 1.0f));
}

template <class T>
SparseMatrix SparseMatrix::from_dense(const BasicMatrix<T>& dense) {
  SparseMatrix m(dense.rows(), dense.cols());
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    for (std::size_t c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != T{0}) {
        m.col_idx_.push_back(c);
        m.values_.push_back(static_cast<float>(dense(r, c)));
      }
    }
    m.row_ptr_[r + 1] = m.col_idx_.size();
  }
  return m;
}

float SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0f;
  return values_[row_ptr_[r] + static_cast<std::size_t>(it - cols.begin())];
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<std::size_t> ptr(cols_ + 1, 0);
  for (auto c : col_idx_) ++ptr[c + 1];
  for (std::size_t c = 0; c < cols_; ++c) ptr[c + 1] += ptr[c];
  std::vector<std::size_t> idx(nnz());
  std::vector<float> val(nnz());
  std::vector<std::size_t> next(ptr.begin(), ptr.end() - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
      const auto dst = next[col_idx_[p]]++;
      idx[dst] = r;
      val[dst] = values_[p];
    }
  }
  return SparseMatrix(cols_, rows_, std::move(ptr), std::move(idx), std::move(val));
}

bool SparseMatrix::is_symmetric(float tol) const {
  if (rows_ != cols_) return false;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
      const auto c = col_idx_[p];
      const auto cols = row_cols(c);
      if (!std::binary_search(cols.begin(), cols.end(), r)) return false;
      if (std::fabs(at(c, r) - values_[p]) > tol) return false;
    }
  }
  return true;
}

void SparseMatrix::validate() const {
  expect(row_ptr_.size() == rows_ + 1, ErrorKind::Validation, "row pointer length != rows + 1");
  expect(row_ptr_.front() == 0 && row_ptr_.back() == col_idx_.size(), ErrorKind::Validation,
         "row pointer bounds inconsistent with nnz");
  expect(col_idx_.size() == values_.size(), ErrorKind::Validation, "column/value length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) {
    expect(row_ptr_[r] <= row_ptr_[r + 1], ErrorKind::Validation, "row pointers decreasing at row " + std::to_string(r));
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
      expect(col_idx_[p] < cols_, ErrorKind::Validation, "column index out of range in row " + std::to_string(r));
      expect(p == row_ptr_[r] || col_idx_[p - 1] < col_idx_[p], ErrorKind::Validation,
             "column indices not strictly increasing in row " + std::to_string(r));
      expect(std::isfinite(values_[p]), ErrorKind::Validation, "non-finite value in row " + std::to_string(r));
    }
  }
}

template <class T>
BasicMatrix<T> SparseMatrix::to_dense() const {
  BasicMatrix<T> d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) d(r, col_idx_[p]) = static_cast<T>(values_[p]);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Kernels

template <class T>
BasicMatrix<T> spmm(const SparseMatrix& s, const BasicMatrix<T>& h) {
  expect(s.cols() == h.rows(), ErrorKind::Shape,
         "spmm: S.cols " + std::to_string(s.cols()) + " != H.rows " + std::to_string(h.rows()));
  BasicMatrix<T> out(s.rows(), h.cols());
  const std::size_t width = h.cols();
  parallel_for(s.rows(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      T* dst = out.row(r).data();
      const auto cols = s.row_cols(r);
      const auto vals = s.row_values(r);
      for (std::size_t p = 0; p < cols.size(); ++p) {
        const T v = static_cast<T>(vals[p]);
        const T* src = h.row(cols[p]).data();
        for (std::size_t c = 0; c < width; ++c) dst[c] += v * src[c];
      }
    }
  });
  return out;
}

template <class T>
BasicMatrix<T> spmm_transposed(const SparseMatrix& s, const BasicMatrix<T>& h) {
  expect(s.rows() == h.rows(), ErrorKind::Shape, "spmm_transposed: S.rows != H.rows");
  BasicMatrix<T> out(s.cols(), h.cols());
  const std::size_t width = h.cols();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const T* src = h.row(r).data();
    const auto cols = s.row_cols(r);
    const auto vals = s.row_values(r);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const T v = static_cast<T>(vals[p]);
      T* dst = out.row(cols[p]).data();
      for (std::size_t c = 0; c < width; ++c) dst[c] += v * src[c];
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "hadamard");
  BasicMatrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

template <class T>
BasicMatrix<T> l2_normalize_rows(const BasicMatrix<T>& h, double eps) {
  BasicMatrix<T> out(h.rows(), h.cols());
  parallel_for(h.rows(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const auto src = h.row(r);
      const double norm = std::sqrt(dot<T>(src, src));
      const double scale = 1.0 / std::max(norm, eps);
      auto dst = out.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] = static_cast<T>(src[c] * scale);
    }
  });
  return out;
}

template <class T>
double dot(std::span<const T> a, std::span<const T> b) {
  expect(a.size() == b.size(), ErrorKind::Shape, "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <class T>
double squared_distance(std::span<const T> a, std::span<const T> b) {
  expect(a.size() == b.size(), ErrorKind::Shape, "squared_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

template <class T>
double cosine_similarity(std::span<const T> a, std::span<const T> b, double eps) {
  expect(a.size() == b.size(), ErrorKind::Shape,
         "cosine_similarity: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na < eps || nb < eps) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

template <class T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  expect(a.cols() == b.rows(), ErrorKind::Shape, "matmul: inner dimension mismatch");
  BasicMatrix<T> out(a.rows(), b.cols());
  if (out.empty() || a.cols() == 0) return out;
  const auto bv = view(b);
  parallel_for(a.rows(), [&](std::size_t r0, std::size_t r1) {
    const auto n = static_cast<Eigen::Index>(r1 - r0);
    Eigen::Map<const RowMajor<T>> ablk(a.row(r0).data(), n, static_cast<Eigen::Index>(a.cols()));
    Eigen::Map<RowMajor<T>> oblk(out.row(r0).data(), n, static_cast<Eigen::Index>(out.cols()));
    oblk.noalias() = ablk * bv;
  });
  return out;
}

template <class T>
BasicMatrix<T> matmul_at_b(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  expect(a.rows() == b.rows(), ErrorKind::Shape, "matmul_at_b: row mismatch");
  BasicMatrix<T> out(a.cols(), b.cols());
  if (out.empty() || a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

template <class T>
BasicMatrix<T> matmul_a_bt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  expect(a.cols() == b.cols(), ErrorKind::Shape, "matmul_a_bt: column mismatch");
  BasicMatrix<T> out(a.rows(), b.rows());
  if (out.empty() || a.cols() == 0) return out;
  const auto bv = view(b);
  parallel_for(a.rows(), [&](std::size_t r0, std::size_t r1) {
    const auto n = static_cast<Eigen::Index>(r1 - r0);
    Eigen::Map<const RowMajor<T>> ablk(a.row(r0).data(), n, static_cast<Eigen::Index>(a.cols()));
    Eigen::Map<RowMajor<T>> oblk(out.row(r0).data(), n, static_cast<Eigen::Index>(out.cols()));
    oblk.noalias() = ablk * bv.transpose();
  });
  return out;
}

template <class T>
void add_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  check_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "add");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

template <class T>
BasicMatrix<T> slice_cols(const BasicMatrix<T>& m, std::size_t c0, std::size_t width) {
  expect(c0 + width <= m.cols(), ErrorKind::Shape, "slice_cols: range out of bounds");
  BasicMatrix<T> out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy_n(m.row(r).data() + c0, width, out.row(r).data());
  }
  return out;
}

template <class T>
BasicMatrix<T> gather_rows(const BasicMatrix<T>& m, std::span<const std::size_t> idx) {
  BasicMatrix<T> out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    expect(idx[i] < m.rows(), ErrorKind::Shape, "gather_rows: index out of range");
    std::copy_n(m.row(idx[i]).data(), m.cols(), out.row(i).data());
  }
  return out;
}

template <class T>
bool all_finite(const BasicMatrix<T>& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](T v) { return std::isfinite(v); });
}

#define GRADNET_INSTANTIATE(T)                                                                        \
  template SparseMatrix SparseMatrix::from_dense<T>(const BasicMatrix<T>&);                          \
  template BasicMatrix<T> SparseMatrix::to_dense<T>() const;                                          \
  template BasicMatrix<T> spmm<T>(const SparseMatrix&, const BasicMatrix<T>&);                        \
  template BasicMatrix<T> spmm_transposed<T>(const SparseMatrix&, const BasicMatrix<T>&);             \
  template BasicMatrix<T> hadamard<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);                  \
  template BasicMatrix<T> l2_normalize_rows<T>(const BasicMatrix<T>&, double);                        \
  template double cosine_similarity<T>(std::span<const T>, std::span<const T>, double);               \
  template double dot<T>(std::span<const T>, std::span<const T>);                                     \
  template double squared_distance<T>(std::span<const T>, std::span<const T>);                        \
  template BasicMatrix<T> matmul<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);                    \
  template BasicMatrix<T> matmul_at_b<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);               \
  template BasicMatrix<T> matmul_a_bt<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);               \
  template void add_inplace<T>(BasicMatrix<T>&, const BasicMatrix<T>&);                               \
  template BasicMatrix<T> slice_cols<T>(const BasicMatrix<T>&, std::size_t, std::size_t);             \
  template BasicMatrix<T> gather_rows<T>(const BasicMatrix<T>&, std::span<const std::size_t>);        \
  template bool all_finite<T>(const BasicMatrix<T>&);

GRADNET_INSTANTIATE(float)
GRADNET_INSTANTIATE(double)

#undef GRADNET_INSTANTIATE

}  // namespace gradnet
