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

#include "metrics.hpp"

#include <json.hpp>

#include "config.hpp"

namespace gradnet {

QueryTruth GroundTruth::truth_for(const std::string& query_id) const {
  if (auto it = queries.find(query_id); it != queries.end()) return it->second;
  const auto lab = labels.find(query_id);
  if (lab == labels.end()) fail(ErrorKind::Metric, "no ground truth for query '" + query_id + "'");
  QueryTruth t;
  for (const auto& [id, label] : labels) {
    if (label == lab->second && id != query_id) t.positives.insert(id);
  }
  return t;
}

GroundTruth GroundTruth::from_labels(const FeatureMatrix& f) {
  expect(f.labels.has_value(), ErrorKind::Data, "ground truth: feature file carries no labels");
  GroundTruth g;
  for (std::size_t i = 0; i < f.n(); ++i) g.labels[f.ids[i]] = (*f.labels)[i];
  return g;
}

GroundTruth GroundTruth::from_json(const std::string& text) {
  GroundTruth g;
  try {
    const auto j = nlohmann::json::parse(text);
    expect(j.is_object(), ErrorKind::Format, "ground truth json: top level must be an object");
    if (j.contains("queries")) {
      for (const auto& [q, entry] : j.at("queries").items()) {
        QueryTruth t;
        for (const auto& p : entry.at("positives")) t.positives.insert(p.get<std::string>());
        if (entry.contains("junk")) {
          for (const auto& p : entry.at("junk")) t.junk.insert(p.get<std::string>());
        }
        g.queries[q] = std::move(t);
      }
    }
    if (j.contains("labels")) {
      for (const auto& [id, label] : j.at("labels").items()) g.labels[id] = label.get<std::int32_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("ground truth json: ") + e.what());
  }
  return g;
}

GroundTruth GroundTruth::load(const std::filesystem::path& path) {
  if (path.extension() == ".fmat") return from_labels(read_fmat(path));
  const auto bytes = read_file_bytes(path);
  return from_json(std::string(bytes.begin(), bytes.end()));
}

double average_precision(const Ranking& ranking, const QueryTruth& truth) {
  expect(!truth.positives.empty(), ErrorKind::Metric,
         "average precision: query '" + ranking.query_id + "' has no positives");
  std::size_t position = 0, hits = 0;
  double sum = 0.0;
  for (const auto& item : ranking.items) {
    if (truth.junk.count(item.id)) continue;
    ++position;
    if (truth.positives.count(item.id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(position);
    }
  }
  return sum / static_cast<double>(truth.positives.size());
}

MetricResult mean_average_precision(const std::vector<Ranking>& rankings, const GroundTruth& truth) {
  expect(!rankings.empty(), ErrorKind::Metric, "mAP: no rankings");
  MetricResult r;
  for (const auto& rk : rankings) r.per_query.push_back(100.0 * average_precision(rk, truth.truth_for(rk.query_id)));
  double s = 0.0;
  for (double v : r.per_query) s += v;
  r.aggregate = s / static_cast<double>(r.per_query.size());
  return r;
}

MetricResult bullseye(const std::vector<Ranking>& rankings, const std::map<std::string, std::int32_t>& labels,
                      std::size_t window) {
  expect(window >= 1, ErrorKind::Metric, "bullseye: K must be >= 1");
  expect(!rankings.empty(), ErrorKind::Metric, "bullseye: no rankings");
  std::map<std::int32_t, std::size_t> class_size;
  for (const auto& [id, label] : labels) ++class_size[label];
  auto label_of = [&](const std::string& id) {
    const auto it = labels.find(id);
    if (it == labels.end()) fail(ErrorKind::Metric, "bullseye: no label for instance '" + id + "'");
    return it->second;
  };
  MetricResult r;
  for (const auto& rk : rankings) {
    const auto ql = label_of(rk.query_id);
    bool contains_query = false;
    for (const auto& item : rk.items) contains_query = contains_query || item.id == rk.query_id;
    std::size_t hits = contains_query ? 0 : 1;
    const std::size_t slots = contains_query ? window : window - 1;
    for (std::size_t i = 0; i < std::min(slots, rk.items.size()); ++i) hits += label_of(rk.items[i].id) == ql ? 1 : 0;
    r.per_query.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(class_size[ql]));
  }
  double s = 0.0;
  for (double v : r.per_query) s += v;
  r.aggregate = s / static_cast<double>(r.per_query.size());
  return r;
}

std::string metric_report_json(const std::string& metric, const std::vector<Ranking>& rankings,
                               const MetricResult& result, const std::string& config_echo) {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["aggregate"] = result.aggregate;
  expect(result.per_query.size() == rankings.size(), ErrorKind::Shape, "metric report: per-query count mismatch");
  auto per_query = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    nlohmann::ordered_json row;
    row["query_id"] = rankings[i].query_id;
    row["value"] = result.per_query[i];
    per_query.push_back(std::move(row));
  }
  j["per_query"] = std::move(per_query);
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  const auto echo = Config::parse(config_echo);
  for (const auto& [k, v] : echo.entries()) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

}  // namespace gradnet
