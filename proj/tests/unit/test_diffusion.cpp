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

#include "diffusion.hpp"
#include "graph.hpp"
#include "test_support.hpp"

using namespace gradnet;
using gradnet::test::random_matrix;

namespace {

// Random symmetric normalized transition on n nodes.
SparseMatrix random_transition(std::size_t n, Rng& rng, double density = 0.3) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < density) {
        const auto w = static_cast<float>(rng.uniform(0.1, 1.0));
        t.push_back({i, j, w});
        t.push_back({j, i, w});
      }
  return transition_matrix(SparseMatrix::from_triplets(n, n, std::move(t)));
}

BasicMatrix<double> dense(const SparseMatrix& s) {
  BasicMatrix<double> d(s.rows(), s.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const auto cols = s.row_cols(r);
    const auto vals = s.row_values(r);
    for (std::size_t p = 0; p < cols.size(); ++p) d(r, cols[p]) = vals[p];
  }
  return d;
}

// Gaussian elimination with partial pivoting.
std::vector<double> solve(BasicMatrix<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double m = a(r, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(r, j) -= m * a(c, j);
      b[r] -= m * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace

TEST_CASE("two node closed form") {
  const auto s = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0f}, {1, 0, 1.0f}});
  const std::vector<double> f0{1.0, 0.0};
  const auto f = random_walk_closed(s, f0, 0.5);
  CHECK(f[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
  CHECK(f[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  const auto it = random_walk_iterate(s, f0, 0.5, 1000, 1e-14);
  CHECK(it.f[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
  CHECK(it.f[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("empty graph keeps the restart term") {
  const SparseMatrix s(4, 4);
  const auto f0 = initial_state(4, std::vector<std::size_t>{2});
  const auto f = random_walk_closed(s, f0, 0.9);
  CHECK(f[2] == doctest::Approx(0.1));
  CHECK(f[0] == 0.0);
  CHECK(random_walk_iterate(s, f0, 0.9, 50, 1e-12).f == f);
}

TEST_CASE("closed form matches dense solve and iteration") {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 25;
    const auto s = random_transition(n, rng);
    std::vector<double> f0(n, 0.0);
    f0[rng.below(n)] = 1.0;
    f0[rng.below(n)] = 1.0;
    const double alpha = 0.9;
    auto m = dense(s);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) = (i == j ? 1.0 : 0.0) - alpha * m(i, j);
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = (1.0 - alpha) * f0[i];
    const auto want = solve(m, rhs);
    const auto cg = random_walk_closed(s, f0, alpha, 1e-13);
    const auto it = random_walk_iterate(s, f0, alpha, 100000, 1e-14);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(cg[i] - want[i]) <= 1e-9);
      CHECK(std::abs(it.f[i] - want[i]) <= 1e-9);
    }
  }
}

TEST_CASE("alpha out of range") {
  const SparseMatrix s(2, 2);
  const std::vector<double> f0{1.0, 0.0};
  CHECK_THROWS_AS(random_walk_closed(s, f0, 1.0), Error);
  CHECK_THROWS_AS(random_walk_iterate(s, f0, 0.0, 5, 1e-9), Error);
}

TEST_CASE("tensor product step matches Kronecker form") {
  Rng rng(11);
  const std::size_t n = 7;
  const auto s = random_transition(n, rng, 0.5);
  const auto a0 = random_matrix<double>(n, n, rng);
  const auto a1 = tpg_iterate(s, a0, 1);
  const auto sd = dense(s);
  // vec(S A S^T) = (S kron S) vec(A), row-major vec
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) v += sd(i, k) * sd(j, l) * a0(k, l);
      if (i == j) v += 1.0;
      CHECK(std::abs(a1(i, j) - v) <= 1e-12);
    }
  CHECK(tpg_iterate(s, a0, 0) == a0);
}

TEST_CASE("tensor product with empty graph is identity") {
  Rng rng(12);
  const auto a0 = random_matrix<double>(5, 5, rng);
  const auto a = tpg_iterate(SparseMatrix(5, 5), a0, 3);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(a(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("ranking order and ties") {
  const std::vector<double> f{0.5, 0.9, 0.5, 0.1, 0.9};
  const auto r = rank_from_state(f, std::vector<std::size_t>{3});
  REQUIRE(r.items.size() == 4);
  CHECK(r.items[0].index == 1);
  CHECK(r.items[1].index == 4);
  CHECK(r.items[2].index == 0);
  CHECK(r.items[3].index == 2);
}

TEST_CASE("ranking matches reference sort") {
  Rng rng(13);
  std::vector<double> f(60);
  for (auto& v : f) v = std::floor(rng.uniform() * 20.0);  // forces ties
  const std::vector<std::size_t> queries{3, 17};
  const auto r = rank_from_state(f, queries);
  std::vector<std::size_t> want;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (i != 3 && i != 17) want.push_back(i);
  // selection sort, first maximum wins
  for (std::size_t a = 0; a < want.size(); ++a) {
    std::size_t best = a;
    for (std::size_t b = a + 1; b < want.size(); ++b)
      if (f[want[b]] > f[want[best]] || (f[want[b]] == f[want[best]] && want[b] < want[best])) best = b;
    std::swap(want[a], want[best]);
  }
  REQUIRE(r.items.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(r.items[i].index == want[i]);
}
