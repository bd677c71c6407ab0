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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_support.hpp"

using namespace gradnet;
using gradnet::test::dense_product;
using gradnet::test::max_abs_diff;
using gradnet::test::random_matrix;

namespace {

SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rng.uniform() < density) t.push_back({r, c, static_cast<float>(rng.uniform(-1.0, 1.0))});
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

}  // namespace

TEST_CASE("spmm: zero and identity") {
  Rng rng(1);
  const auto h = random_matrix(3, 2, rng);
  CHECK(spmm(SparseMatrix(3, 3), h) == DenseMatrix(3, 2));
  CHECK(spmm(SparseMatrix::identity(3), h) == h);
}

TEST_CASE("spmm matches a dense triple loop") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = random_sparse(5, 5, 0.4, rng);
    const auto h = random_matrix(5, 3, rng);
    CHECK(max_abs_diff(spmm(s, h), dense_product(s.to_dense<float>(), h)) <= 1e-6);
    CHECK(max_abs_diff(spmm_transposed(s, h), dense_product(s.transpose().to_dense<float>(), h)) <= 1e-6);
  }
}

TEST_CASE("spmm distributes over addition") {
  Rng rng(3);
  const auto s = random_sparse(20, 20, 0.3, rng);
  const auto a = random_matrix(20, 4, rng), b = random_matrix(20, 4, rng);
  CHECK(max_abs_diff(spmm(s, add(a, b)), add(spmm(s, a), spmm(s, b))) <= 1e-5);
}

TEST_CASE("spmm rejects mismatched shapes") {
  CHECK_THROWS_AS(spmm(SparseMatrix::identity(3), DenseMatrix(4, 2)), Error);
}

TEST_CASE("from_triplets sums duplicates and sorts columns") {
  const auto s = SparseMatrix::from_triplets(2, 3, {{1, 2, 1.f}, {0, 1, 2.f}, {1, 0, 3.f}, {0, 1, 0.5f}});
  CHECK(s.nnz() == 3);
  CHECK(s.at(0, 1) == 2.5f);
  CHECK(s.at(1, 0) == 3.f);
  CHECK(s.at(1, 2) == 1.f);
  CHECK(s.at(0, 0) == 0.f);
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("dense products match the naive oracle") {
  Rng rng(4);
  const auto a = random_matrix(7, 5, rng), b = random_matrix(5, 6, rng), c = random_matrix(7, 6, rng);
  CHECK(max_abs_diff(matmul(a, b), dense_product(a, b)) <= 1e-5);
  // A^T C and A B^T through explicit transposes.
  DenseMatrix at(5, 7), bt(6, 5);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 5; ++j) at(j, i) = a(i, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) bt(j, i) = b(i, j);
  CHECK(max_abs_diff(matmul_at_b(a, c), dense_product(at, c)) <= 1e-5);
  CHECK(max_abs_diff(matmul_a_bt(a, bt), dense_product(a, b)) <= 1e-5);
}

TEST_CASE("hadamard") {
  const DenseMatrix a(2, 2, {1, 2, 3, 4});
  CHECK(hadamard(a, DenseMatrix(2, 2, 1.f)) == a);
  CHECK(hadamard(a, DenseMatrix(2, 2)) == DenseMatrix(2, 2));
  CHECK(hadamard(a, DenseMatrix(2, 2, {2, 0, 1, 1})) == DenseMatrix(2, 2, {2, 0, 3, 4}));
  CHECK_THROWS_AS(hadamard(a, DenseMatrix(2, 3)), Error);
}

TEST_CASE("l2_normalize_rows") {
  const auto n = l2_normalize_rows(DenseMatrix(2, 2, {3, 4, 0, 0}));
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
  CHECK(n(1, 0) == 0.f);
  CHECK(n(1, 1) == 0.f);

  Rng rng(5);
  auto m = random_matrix(10, 5, rng);
  for (std::size_t c = 0; c < 5; ++c) m(3, c) = 0.f;
  const auto u = l2_normalize_rows(m);
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0.0;
    for (float v : u.row(r)) s += static_cast<double>(v) * v;
    const double norm = std::sqrt(s);
    CHECK((norm == 0.0 || std::abs(norm - 1.0) <= 1e-5));
  }
  CHECK(max_abs_diff(l2_normalize_rows(u), u) <= 1e-6);
}

TEST_CASE("cosine_similarity") {
  const std::vector<float> a{1, 0}, b{0, 1}, c{1, 1}, z{0, 0};
  CHECK(cosine_similarity<float>(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity<float>(a, b) == 0.0);
  CHECK(cosine_similarity<float>(a, c) == doctest::Approx(0.70710678).epsilon(1e-7));
  CHECK(cosine_similarity<float>(a, z) == 0.0);
  CHECK_THROWS_AS(cosine_similarity<float>(a, std::vector<float>{1, 2, 3}), Error);

  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const auto m = random_matrix(2, 8, rng);
    const double s1 = cosine_similarity<float>(m.row(0), m.row(1));
    const double s2 = cosine_similarity<float>(m.row(1), m.row(0));
    CHECK(s1 == s2);
    CHECK(std::abs(s1) <= 1.0);
  }
}

TEST_CASE("transpose and symmetry") {
  Rng rng(7);
  const auto s = random_sparse(6, 4, 0.5, rng);
  CHECK(s.transpose().transpose() == s);
  const auto sym = SparseMatrix::from_triplets(2, 2, {{0, 1, 2.f}, {1, 0, 2.f}});
  CHECK(sym.is_symmetric());
  CHECK_FALSE(SparseMatrix::from_triplets(2, 2, {{0, 1, 2.f}}).is_symmetric());
}

TEST_CASE("single thread and multi thread kernels agree bitwise") {
  Rng rng(8);
  const auto s = random_sparse(64, 64, 0.1, rng);
  const auto h = random_matrix(64, 16, rng);
  set_num_threads(1);
  const auto one = spmm(s, h);
  set_num_threads(3);
  const auto three = spmm(s, h);
  set_num_threads(1);
  CHECK(one == three);
}
