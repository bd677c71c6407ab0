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

#include "diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gradnet {

namespace {

void check_alpha(double alpha) {
  expect(alpha > 0.0 && alpha < 1.0, ErrorKind::Parameter,
         "restart weight alpha must lie in (0, 1), got " + std::to_string(alpha));
}

void multiply(const SparseMatrix& s, std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double acc = 0.0;
    const auto cols = s.row_cols(r);
    const auto vals = s.row_values(r);
    for (std::size_t p = 0; p < cols.size(); ++p) acc += static_cast<double>(vals[p]) * v[cols[p]];
    out[r] = acc;
  }
}

BasicMatrix<double> transposed(const BasicMatrix<double>& m) {
  BasicMatrix<double> t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

}  // namespace

std::vector<double> initial_state(std::size_t n, std::span<const std::size_t> query_positions) {
  std::vector<double> f(n, 0.0);
  for (auto q : query_positions) {
    expect(q < n, ErrorKind::Parameter, "query position " + std::to_string(q) + " out of range");
    f[q] = 1.0;
  }
  return f;
}

WalkResult random_walk_iterate(const SparseMatrix& s, std::span<const double> f0, double alpha,
                               std::size_t max_iters, double tol) {
  check_alpha(alpha);
  expect(s.rows() == s.cols() && f0.size() == s.rows(), ErrorKind::Shape, "random_walk_iterate: shape mismatch");
  WalkResult res{std::vector<double>(f0.begin(), f0.end()), 0};
  std::vector<double> sf(f0.size());
  while (res.iterations < max_iters) {
    multiply(s, res.f, sf);
    double delta = 0.0;
    for (std::size_t i = 0; i < sf.size(); ++i) {
      const double next = alpha * sf[i] + (1.0 - alpha) * f0[i];
      delta = std::max(delta, std::fabs(next - res.f[i]));
      res.f[i] = next;
    }
    ++res.iterations;
    if (delta < tol) break;
  }
  return res;
}

std::vector<double> random_walk_closed(const SparseMatrix& s, std::span<const double> f0, double alpha,
                                       double residual_tol) {
  check_alpha(alpha);
  const std::size_t n = s.rows();
  expect(s.cols() == n && f0.size() == n, ErrorKind::Shape, "random_walk_closed: shape mismatch");
  std::vector<double> x(n, 0.0), r(n), p(n), ap(n), sp(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = (1.0 - alpha) * f0[i];
  p = r;
  double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
  const std::size_t limit = std::max<std::size_t>(10 * n, 1);
  for (std::size_t it = 0; std::sqrt(rr) >= residual_tol; ++it) {
    if (it >= limit) {
      fail(ErrorKind::Numerical, "conjugate gradient did not converge within " + std::to_string(limit) +
                                     " iterations (residual " + std::to_string(std::sqrt(rr)) + ")");
    }
    multiply(s, p, sp);
    for (std::size_t i = 0; i < n; ++i) ap[i] = p[i] - alpha * sp[i];
    const double pap = std::inner_product(p.begin(), p.end(), ap.begin(), 0.0);
    if (!(pap > 0.0)) fail(ErrorKind::Numerical, "conjugate gradient: system is not positive definite");
    const double step = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * p[i];
      r[i] -= step * ap[i];
    }
    const double rr_next = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  return x;
}

BasicMatrix<double> tpg_iterate(const SparseMatrix& s, const BasicMatrix<double>& a0, std::size_t iterations) {
  const std::size_t n = s.rows();
  expect(s.cols() == n && a0.rows() == n && a0.cols() == n, ErrorKind::Shape,
         "tpg_iterate: S and A0 must be square of equal size");
  BasicMatrix<double> a = a0;
  for (std::size_t t = 0; t < iterations; ++t) {
    // S A S^T = S (S A^T)^T
    a = spmm(s, transposed(spmm(s, transposed(a))));
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 1.0;
  }
  return a;
}

Ranking rank_from_state(std::span<const double> f, std::span<const std::size_t> query_positions) {
  std::vector<char> is_query(f.size(), 0);
  for (auto q : query_positions) {
    if (q < f.size()) is_query[q] = 1;
  }
  Ranking r;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!is_query[i]) r.items.push_back({i, std::to_string(i), f[i]});
  }
  std::stable_sort(r.items.begin(), r.items.end(),
                   [](const RankedItem& a, const RankedItem& b) { return a.score > b.score; });
  return r;
}

}  // namespace gradnet
