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
#include <vector>

#include "dataio.hpp"

namespace gradnet {

inline constexpr std::size_t kDefaultAnchors = 100;
inline constexpr std::size_t kDefaultSupport = 5;
inline constexpr std::size_t kSimplexIterations = 200;

/// B anchors plus an N x B code matrix whose rows lie on the probability
/// simplex with at most `support` nonzeros.
struct AnchorModel {
  DenseMatrix anchors;
  SparseMatrix codes;
  std::size_t support = kDefaultSupport;

  std::size_t count() const noexcept { return anchors.rows(); }
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded to
// the point farthest from its assigned center.
DenseMatrix kmeans(const DenseMatrix& x, std::size_t clusters, std::uint64_t seed, std::size_t max_iters = 100);

// Euclidean projection onto {z >= 0, sum z = 1}.
std::vector<double> project_simplex(std::vector<double> v);

struct SparseCode {
  std::vector<std::size_t> indices;  // ascending anchor indices with weight > 0
  std::vector<double> weights;
};

// min ||x - U^T z||^2 over the simplex, support fixed to the `support` nearest
// anchors. Projected gradient from the one-hot nearest-anchor point, step 1/L
// with L a Gershgorin bound on the support Gram matrix. When `objective_trace`
// is given it receives ||x - U^T z||^2 before the first and after every step.
SparseCode sparse_code(std::span<const float> x, const DenseMatrix& anchors, std::size_t support,
                       std::vector<double>* objective_trace = nullptr);

SparseMatrix encode_rows(const DenseMatrix& x, const DenseMatrix& anchors, std::size_t support);

AnchorModel fit_anchors(const FeatureMatrix& x, std::size_t count, std::size_t support, std::uint64_t seed,
                        std::size_t max_iters = 100);

// [X | densified Z] per row.
FeatureMatrix augment_features(const FeatureMatrix& x, const SparseMatrix& codes);

void save_anchors(const AnchorModel& m, const std::filesystem::path& anchors_path,
                  const std::filesystem::path& codes_path, const std::string& config_echo = {});
AnchorModel load_anchors(const std::filesystem::path& anchors_path, const std::filesystem::path& codes_path);

}  // namespace gradnet
