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

#include <string>
#include <vector>

#include "kernels.hpp"

namespace gradnet {

/// One ranked item. `index` is a row position in whatever matrix produced it.
struct RankedItem {
  std::size_t index = 0;
  std::string id;
  double score = 0.0;
  bool operator==(const RankedItem&) const = default;
};

/// Ranking for one query, scores non-increasing.
struct Ranking {
  std::string query_id;
  std::vector<RankedItem> items;
  bool operator==(const Ranking&) const = default;
};

inline constexpr double kDefaultRestart = 0.9;
inline constexpr std::size_t kDefaultTpgIterations = 30;

struct WalkResult {
  std::vector<double> f;
  std::size_t iterations = 0;
};

// Binary state with ones at the query positions.
std::vector<double> initial_state(std::size_t n, std::span<const std::size_t> query_positions);

// f <- alpha S f + (1 - alpha) f0 until ||f_new - f||_inf < tol or max_iters.
WalkResult random_walk_iterate(const SparseMatrix& s, std::span<const double> f0, double alpha,
                               std::size_t max_iters, double tol);

// Solves (I - alpha S) f = (1 - alpha) f0 by conjugate gradient (residual < 1e-10).
std::vector<double> random_walk_closed(const SparseMatrix& s, std::span<const double> f0, double alpha,
                                       double residual_tol = 1e-10);

// A <- S A S^T + I applied `iterations` times.
BasicMatrix<double> tpg_iterate(const SparseMatrix& s, const BasicMatrix<double>& a0, std::size_t iterations);

// Non-query positions by descending f, ties by ascending index.
Ranking rank_from_state(std::span<const double> f, std::span<const std::size_t> query_positions);

}  // namespace gradnet
