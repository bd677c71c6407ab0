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

#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "config.hpp"

namespace gradnet {

SimilarityMetric SimilarityMetric::parse(const std::string& tag, double sigma) {
  SimilarityMetric m;
  m.sigma = sigma;
  if (tag == "inv_euclidean") {
    m.kind = MetricKind::InvEuclidean;
  } else if (tag == "cosine") {
    m.kind = MetricKind::Cosine;
  } else if (tag == "gaussian_euclidean" || tag == "gaussian") {
    m.kind = MetricKind::GaussianEuclidean;
  } else {
    fail(ErrorKind::Parameter, "unknown similarity metric '" + tag + "'");
  }
  m.validate();
  return m;
}

std::string SimilarityMetric::tag() const {
  switch (kind) {
    case MetricKind::InvEuclidean:
      return "inv_euclidean";
    case MetricKind::Cosine:
      return "cosine";
    case MetricKind::GaussianEuclidean:
      return "gaussian_euclidean";
  }
  return "?";
}

void SimilarityMetric::validate() const {
  if (kind == MetricKind::GaussianEuclidean) {
    expect(sigma > 0.0 && std::isfinite(sigma), ErrorKind::Parameter, "gaussian sigma must be > 0");
  }
}

double SimilarityMetric::similarity(std::span<const float> a, std::span<const float> b) const {
  switch (kind) {
    case MetricKind::InvEuclidean:
      return 1.0 / (1.0 + std::sqrt(squared_distance(a, b)));
    case MetricKind::Cosine:
      return cosine_similarity(a, b);
    case MetricKind::GaussianEuclidean:
      return std::exp(-squared_distance(a, b) / (2.0 * sigma * sigma));
  }
  return 0.0;
}

double SimilarityMetric::rank_key(std::span<const float> a, std::span<const float> b) const {
  if (kind == MetricKind::Cosine) return -cosine_similarity(a, b);
  return squared_distance(a, b);
}

AffinityGraph AffinityGraph::from_affinity(SparseMatrix affinity, std::size_t k, SimilarityMetric metric) {
  AffinityGraph g;
  g.transition = transition_matrix(affinity);
  g.degree.resize(affinity.rows());
  for (std::size_t i = 0; i < affinity.rows(); ++i) {
    double d = 0.0;
    for (auto v : affinity.row_values(i)) d += v;
    g.degree[i] = static_cast<float>(d);
  }
  g.affinity = std::move(affinity);
  g.k = k;
  g.metric = metric;
  return g;
}

std::vector<std::size_t> nearest_rows(const DenseMatrix& x, std::span<const float> q, std::size_t t,
                                      const SimilarityMetric& metric, std::size_t exclude) {
  expect(q.size() == x.cols(), ErrorKind::Shape, "nearest_rows: query dimension mismatch");
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(x.rows());
  for (std::size_t j = 0; j < x.rows(); ++j) {
    if (j != exclude) keyed.emplace_back(metric.rank_key(q, x.row(j)), j);
  }
  t = std::min(t, keyed.size());
  // pair ordering gives (key, index) lexicographic: ties resolve to the lower index
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(t), keyed.end());
  std::vector<std::size_t> out(t);
  for (std::size_t i = 0; i < t; ++i) out[i] = keyed[i].second;
  return out;
}

std::vector<std::vector<std::size_t>> knn_lists(const DenseMatrix& x, std::size_t k, const SimilarityMetric& metric) {
  std::vector<std::vector<std::size_t>> lists(x.rows());
  parallel_for(x.rows(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) lists[i] = nearest_rows(x, x.row(i), k, metric, i);
  });
  return lists;
}

AffinityGraph build_mutual_knn(const FeatureMatrix& x, std::size_t k, const SimilarityMetric& metric) {
  metric.validate();
  expect(k >= 1, ErrorKind::Parameter, "k must be >= 1");
  expect(all_finite(x.data), ErrorKind::Data, "features contain non-finite values");
  const std::size_t n = x.n();
  if (n <= 1) return AffinityGraph::from_affinity(SparseMatrix(n, n), k, metric);
  expect(k < n, ErrorKind::Parameter, "k (" + std::to_string(k) + ") must be < n (" + std::to_string(n) + ")");

  auto lists = knn_lists(x.data, k, metric);
  for (auto& l : lists) std::sort(l.begin(), l.end());
  std::vector<Triplet> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : lists[i]) {
      if (j <= i) continue;
      if (!std::binary_search(lists[j].begin(), lists[j].end(), i)) continue;
      const auto s = static_cast<float>(metric.similarity(x.data.row(i), x.data.row(j)));
      edges.push_back({i, j, s});
      edges.push_back({j, i, s});
    }
  }
  return AffinityGraph::from_affinity(SparseMatrix::from_triplets(n, n, std::move(edges)), k, metric);
}

SparseMatrix transition_matrix(const SparseMatrix& a) {
  expect(a.rows() == a.cols(), ErrorKind::Validation, "transition_matrix: affinity must be square");
  expect(a.is_symmetric(), ErrorKind::Validation, "transition_matrix: affinity must be symmetric");
  std::vector<double> inv_sqrt(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double d = 0.0;
    for (auto v : a.row_values(i)) {
      expect(v >= 0.0f, ErrorKind::Validation, "transition_matrix: affinity must be nonnegative");
      d += v;
    }
    inv_sqrt[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  std::vector<std::size_t> ptr(a.row_ptr().begin(), a.row_ptr().end());
  std::vector<std::size_t> idx(a.col_idx().begin(), a.col_idx().end());
  std::vector<float> val(a.nnz());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = ptr[i]; p < ptr[i + 1]; ++p) {
      val[p] = static_cast<float>(inv_sqrt[i] * a.values()[p] * inv_sqrt[idx[p]]);
    }
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(ptr), std::move(idx), std::move(val));
}

TruncatedGraph truncate_union(const FeatureMatrix& x, const QuerySet& queries, std::size_t t, std::size_t k,
                              const SimilarityMetric& metric) {
  expect(!queries.indices.empty(), ErrorKind::Parameter, "truncate_union: empty query set");
  expect(t <= x.n(), ErrorKind::Parameter, "truncate_union: t must be <= n");
  std::vector<std::size_t> nodes;
  for (auto q : queries.indices) {
    expect(q < x.n(), ErrorKind::Parameter, "truncate_union: query index out of range");
    nodes.push_back(q);
    for (auto j : nearest_rows(x.data, x.data.row(q), t, metric, q)) nodes.push_back(j);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  TruncatedGraph out;
  out.graph = build_mutual_knn(x.subset(nodes), k, metric);
  out.index_map = std::move(nodes);
  return out;
}

void save_graph(const AffinityGraph& g, const std::filesystem::path& path, const std::string& config_echo) {
  Config meta;
  meta.set("kind", "mutual_knn_affinity");
  meta.set("k", std::to_string(g.k));
  meta.set("metric", g.metric.tag());
  meta.set("sigma", format_double(g.metric.sigma));
  std::string text = meta.serialize();
  if (!config_echo.empty()) text += "[config]\n" + config_echo;
  write_csrg(g.affinity, path, text);
}

AffinityGraph load_graph(const std::filesystem::path& path) {
  auto file = read_csrg(path);
  const auto meta = Config::parse(file.meta.substr(0, file.meta.find("[config]")));
  expect(file.matrix.rows() == file.matrix.cols(), ErrorKind::Data, path.string() + ": graph is not square");
  expect(file.matrix.is_symmetric(), ErrorKind::Data, path.string() + ": graph affinity is not symmetric");
  const auto metric = SimilarityMetric::parse(meta.get_or("metric", "inv_euclidean"), meta.get_double_or("sigma", 1.0));
  return AffinityGraph::from_affinity(std::move(file.matrix), meta.get_size_or("k", 0), metric);
}

}  // namespace gradnet
