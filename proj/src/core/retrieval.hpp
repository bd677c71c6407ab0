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
#include <vector>

#include "dataio.hpp"
#include "diffusion.hpp"
#include "graph.hpp"

namespace gradnet {

// Top-k rows of H by cosine similarity to h_q, ties by ascending index.
// `exclude` (a row index) is skipped; topk is clamped to the row count.
Ranking retrieve(std::span<const float> h_q, const DenseMatrix& h, std::size_t topk,
                 std::span<const std::string> ids = {}, std::string query_id = {}, std::size_t exclude = kNoRow);

// h_q = sum_i s_qi h_i over the k nearest rows of X (original descriptors) to q.
std::vector<float> qfe(std::span<const float> q, const DenseMatrix& x, const DenseMatrix& h, std::size_t k,
                       const SimilarityMetric& metric);

// qfe, then `rounds - 1` re-expansions over the learned-space top-k with
// cosine weights.
std::vector<float> qfe_iterate(std::span<const float> q, const DenseMatrix& x, const DenseMatrix& h,
                               std::size_t k, const SimilarityMetric& metric, std::size_t rounds);

// CSV "query_id,rank,instance_id,score" with a header row; rank is 1-based.
std::string rankings_to_csv(const std::vector<Ranking>& rankings);
std::vector<Ranking> rankings_from_csv(const std::string& text);
// One JSON object per line: {"query_id":..,"items":[{"id":..,"score":..},..]}.
std::string rankings_to_jsonl(const std::vector<Ranking>& rankings);
std::vector<Ranking> rankings_from_jsonl(const std::string& text);

// Format chosen by extension (.csv, otherwise JSON lines).
void write_rankings(const std::vector<Ranking>& rankings, const std::filesystem::path& path);
std::vector<Ranking> read_rankings(const std::filesystem::path& path);

}  // namespace gradnet
