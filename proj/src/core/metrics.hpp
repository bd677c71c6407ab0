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
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dataio.hpp"
#include "diffusion.hpp"

namespace gradnet {

struct QueryTruth {
  std::set<std::string> positives;
  std::set<std::string> junk;  // removed from the ranking before scoring
};

/// Per-query relevance lists and/or per-instance class labels. When a query
/// has no explicit entry its positives are the other instances sharing its label.
struct GroundTruth {
  std::map<std::string, QueryTruth> queries;
  std::map<std::string, std::int32_t> labels;

  QueryTruth truth_for(const std::string& query_id) const;

  static GroundTruth from_labels(const FeatureMatrix& f);
  // {"queries": {"q": {"positives": [..], "junk": [..]}}, "labels": {"id": 3}}
  static GroundTruth from_json(const std::string& text);
  static GroundTruth load(const std::filesystem::path& path);  // .json or labelled .fmat
};

// In [0, 1].
double average_precision(const Ranking& ranking, const QueryTruth& truth);

struct MetricResult {
  double aggregate = 0.0;          // x100
  std::vector<double> per_query;   // x100, ranking order
};

MetricResult mean_average_precision(const std::vector<Ranking>& rankings, const GroundTruth& truth);

// Per query: same-class hits in a window of K that contains the query itself
// (the query occupies one slot when the ranking omits it) over class size.
MetricResult bullseye(const std::vector<Ranking>& rankings, const std::map<std::string, std::int32_t>& labels,
                      std::size_t window);

std::string metric_report_json(const std::string& metric, const std::vector<Ranking>& rankings,
                               const MetricResult& result, const std::string& config_echo);

}  // namespace gradnet
