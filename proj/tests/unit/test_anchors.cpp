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
#include <numeric>

#include "anchors.hpp"
#include "graph.hpp"
#include "test_support.hpp"

using namespace gradnet;
using gradnet::test::random_matrix;
using gradnet::test::TempDir;

namespace {

double residual(std::span<const float> x, const DenseMatrix& u, const SparseCode& z) {
  double r = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    double rec = 0.0;
    for (std::size_t p = 0; p < z.indices.size(); ++p) rec += z.weights[p] * u(z.indices[p], c);
    r += (x[c] - rec) * (x[c] - rec);
  }
  return r;
}

}  // namespace

TEST_CASE("kmeans saturation and determinism") {
  Rng rng(1);
  const auto x = random_matrix(12, 3, rng);
  const auto u = kmeans(x, 12, 4);
  // every data point is an anchor
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto nn = nearest_rows(u, x.row(r), 1, {});
    CHECK(squared_distance<float>(u.row(nn[0]), x.row(r)) == 0.0);
  }
  CHECK(kmeans(x, 5, 9) == kmeans(x, 5, 9));
  CHECK_THROWS_AS(kmeans(x, 13, 0), Error);
}

TEST_CASE("kmeans recovers two separated blobs") {
  Rng rng(2);
  DenseMatrix x(200, 2);
  double mean[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t r = 0; r < 200; ++r) {
    const double cx = r < 100 ? -5.0 : 5.0;
    x(r, 0) = static_cast<float>(cx + 0.1 * rng.normal());
    x(r, 1) = static_cast<float>(0.1 * rng.normal());
    mean[r < 100 ? 0 : 1][0] += x(r, 0) / 100.0;
    mean[r < 100 ? 0 : 1][1] += x(r, 1) / 100.0;
  }
  auto u = kmeans(x, 2, 3);
  if (u(0, 0) > u(1, 0)) std::swap(u(0, 0), u(1, 0)), std::swap(u(0, 1), u(1, 1));
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 2; ++c) CHECK(std::abs(u(b, c) - mean[b][c]) <= 1e-3);
}

TEST_CASE("simplex projection") {
  const auto p = project_simplex({0.2, 0.2, 0.2});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0));
  const auto q = project_simplex({5.0, 0.0});
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(0.0));
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    const auto w = project_simplex(v);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0));
    for (double x : w) CHECK(x >= 0.0);
  }
}

TEST_CASE("sparse code examples") {
  const DenseMatrix u(3, 2, {0, 0, 1, 0, 0, 1});
  const std::vector<float> on_anchor{1, 0};
  const auto z = sparse_code(on_anchor, u, 1);
  REQUIRE(z.indices.size() == 1);
  CHECK(z.indices[0] == 1);
  CHECK(z.weights[0] == 1.0);
  CHECK(residual(on_anchor, u, z) == 0.0);

  const DenseMatrix line(2, 1, {0, 1});
  const std::vector<float> x{0.25f};
  const auto z2 = sparse_code(x, line, 2);
  REQUIRE(z2.indices.size() == 2);
  CHECK(z2.weights[0] == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(z2.weights[1] == doctest::Approx(0.25).epsilon(1e-9));

  Rng rng(4);
  const auto anchors = random_matrix(10, 3, rng);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_matrix(1, 3, rng);
    const auto one = sparse_code(p.row(0), anchors, 1);
    REQUIRE(one.indices.size() == 1);
    CHECK(one.indices[0] == nearest_rows(anchors, p.row(0), 1, {})[0]);
  }
  CHECK_THROWS_AS(sparse_code(x, line, 3), Error);
}

TEST_CASE("sparse code objective is non-increasing") {
  Rng rng(5);
  const auto anchors = random_matrix(20, 4, rng);
  const auto p = random_matrix(1, 4, rng);
  std::vector<double> trace;
  sparse_code(p.row(0), anchors, 5, &trace);
  REQUIRE(trace.size() == kSimplexIterations + 1);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

TEST_CASE("augment features") {
  Rng rng(6);
  const auto f = FeatureMatrix::from_matrix(random_matrix(30, 2, rng));
  const auto model = fit_anchors(f, 10, 3, 1);
  const auto aug = augment_features(f, model.codes);
  CHECK(aug.d() == 12);
  CHECK(slice_cols(aug.data, 0, 2) == f.data);
  const auto zero = augment_features(f, SparseMatrix(30, 5));
  CHECK(slice_cols(zero.data, 2, 5) == DenseMatrix(30, 5));
  CHECK_THROWS_AS(augment_features(f, SparseMatrix(29, 5)), Error);
}

TEST_CASE("anchors save/load round trip") {
  Rng rng(7);
  TempDir dir("anchors");
  const auto f = FeatureMatrix::from_matrix(random_matrix(40, 3, rng));
  const auto model = fit_anchors(f, 8, 4, 2);
  save_anchors(model, dir / "a.anchors.fmat", dir / "a.codes.csrg");
  const auto back = load_anchors(dir / "a.anchors.fmat", dir / "a.codes.csrg");
  CHECK(back.anchors == model.anchors);
  CHECK(back.codes == model.codes);
  CHECK(back.support == 4);
}
