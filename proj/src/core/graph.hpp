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

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "dataio.hpp"

namespace gradnet {

enum class MetricKind { InvEuclidean, Cosine, GaussianEuclidean };

/// Pairwise similarity used for edge weights and neighbor ranking.
struct SimilarityMetric {
  MetricKind kind = MetricKind::InvEuclidean;
  double sigma = 1.0;  // GaussianEuclidean only

  static SimilarityMetric parse(const std::string& tag, double sigma = 1.0);
  std::string tag() const;
  void validate() const;

  double similarity(std::span<const float> a, std::span<const float> b) const;
  // Smaller is nearer; consistent with similarity() ordering.
  double rank_key(std::span<const float> a, std::span<const float> b) const;
};

/// Symmetric mutual k-NN affinity A (zero diagonal) with its normalized
/// transition S = D^-1/2 A D^-1/2 and degrees.
struct AffinityGraph {
  SparseMatrix affinity;
  SparseMatrix transition;
  std::vector<float> degree;
  std::size_t k = 0;
  SimilarityMetric metric;

  std::size_t nodes() const noexcept { return affinity.rows(); }
  std::span<const std::size_t> neighbors(std::size_t i) const { return affinity.row_cols(i); }

  // Rebuilds transition and degree from affinity.
  static AffinityGraph from_affinity(SparseMatrix affinity, std::size_t k = 0, SimilarityMetric metric = {});
};

inline constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

// The t rows nearest to q (self row `exclude` skipped), ascending rank key,
// ties broken by lower row index.
std::vector<std::size_t> nearest_rows(const DenseMatrix& x, std::span<const float> q, std::size_t t,
                                      const SimilarityMetric& metric, std::size_t exclude = kNoRow);

// Exact directed k-NN lists, self excluded.
std::vector<std::vector<std::size_t>> knn_lists(const DenseMatrix& x, std::size_t k, const SimilarityMetric& metric);

AffinityGraph build_mutual_knn(const FeatureMatrix& x, std::size_t k, const SimilarityMetric& metric);

// S = D^-1/2 A D^-1/2 with zero rows/columns at zero degree.
SparseMatrix transition_matrix(const SparseMatrix& a);

struct TruncatedGraph {
  AffinityGraph graph;
  std::vector<std::size_t> index_map;  // subgraph row -> original row
};

TruncatedGraph truncate_union(const FeatureMatrix& x, const QuerySet& queries, std::size_t t, std::size_t k,
                              const SimilarityMetric& metric);

// .csrg holds A; S and degrees are rebuilt on load. k and metric travel in the meta block.
void save_graph(const AffinityGraph& g, const std::filesystem::path& path, const std::string& config_echo = {});
AffinityGraph load_graph(const std::filesystem::path& path);

}  // namespace gradnet
