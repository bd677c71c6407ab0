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

#include "retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "config.hpp"

namespace gradnet {

Ranking retrieve(std::span<const float> h_q, const DenseMatrix& h, std::size_t topk,
                 std::span<const std::string> ids, std::string query_id, std::size_t exclude) {
  expect(h_q.size() == h.cols(), ErrorKind::Shape,
         "retrieve: query width " + std::to_string(h_q.size()) + " != feature width " + std::to_string(h.cols()));
  expect(ids.empty() || ids.size() == h.rows(), ErrorKind::Shape, "retrieve: id count != row count");
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(h.rows());
  for (std::size_t r = 0; r < h.rows(); ++r) {
    if (r == exclude) continue;
    scored.emplace_back(cosine_similarity<float>(h_q, h.row(r)), r);
  }
  const std::size_t k = std::min(topk, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  Ranking out;
  out.query_id = std::move(query_id);
  for (std::size_t i = 0; i < k; ++i) {
    const auto r = scored[i].second;
    out.items.push_back({r, ids.empty() ? std::to_string(r) : ids[r], scored[i].first});
  }
  return out;
}

std::vector<float> qfe(std::span<const float> q, const DenseMatrix& x, const DenseMatrix& h, std::size_t k,
                       const SimilarityMetric& metric) {
  expect(x.rows() > 0, ErrorKind::Parameter, "qfe: empty database");
  expect(k >= 1, ErrorKind::Parameter, "qfe: k must be >= 1");
  expect(q.size() == x.cols(), ErrorKind::Shape,
         "qfe: query has " + std::to_string(q.size()) + " dims, database has " + std::to_string(x.cols()));
  expect(x.rows() == h.rows(), ErrorKind::Shape, "qfe: descriptor and learned row counts differ");
  const auto nn = nearest_rows(x, q, std::min(k, x.rows()), metric, kNoRow);
  std::vector<double> acc(h.cols(), 0.0);
  for (auto r : nn) {
    const double s = metric.similarity(q, x.row(r));
    const auto hr = h.row(r);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += s * hr[c];
  }
  return {acc.begin(), acc.end()};
}

std::vector<float> qfe_iterate(std::span<const float> q, const DenseMatrix& x, const DenseMatrix& h,
                               std::size_t k, const SimilarityMetric& metric, std::size_t rounds) {
  expect(rounds >= 1, ErrorKind::Parameter, "qfe_iterate: rounds must be >= 1");
  auto hq = qfe(q, x, h, k, metric);
  for (std::size_t round = 1; round < rounds; ++round) {
    const auto top = retrieve(hq, h, k);
    std::vector<double> acc(h.cols(), 0.0);
    for (const auto& item : top.items) {
      const auto hr = h.row(item.index);
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += item.score * hr[c];
    }
    hq.assign(acc.begin(), acc.end());
  }
  return hq;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else if (ch != '\r') {
      fields.back() += ch;
    }
  }
  expect(!quoted, ErrorKind::Format, "rankings csv line " + std::to_string(lineno) + ": unterminated quote");
  return fields;
}

template <class N>
N parse_number(const std::string& s, std::size_t lineno) {
  N v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  expect(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::Format,
         "rankings csv line " + std::to_string(lineno) + ": bad number '" + s + "'");
  return v;
}

constexpr std::size_t kUnknownIndex = std::numeric_limits<std::size_t>::max();

}  // namespace

std::string rankings_to_csv(const std::vector<Ranking>& rankings) {
  std::string out = "query_id,rank,instance_id,score\n";
  for (const auto& r : rankings) {
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      out += csv_field(r.query_id) + "," + std::to_string(i + 1) + "," + csv_field(r.items[i].id) + "," +
             format_double(r.items[i].score) + "\n";
    }
  }
  return out;
}

std::vector<Ranking> rankings_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Ranking> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (lineno == 1 && line.rfind("query_id", 0) == 0) continue;
    const auto f = split_csv_line(line, lineno);
    expect(f.size() == 4, ErrorKind::Format, "rankings csv line " + std::to_string(lineno) + ": expected 4 fields");
    const auto rank = parse_number<std::size_t>(f[1], lineno);
    if (out.empty() || out.back().query_id != f[0]) out.push_back({f[0], {}});
    expect(rank == out.back().items.size() + 1, ErrorKind::Format,
           "rankings csv line " + std::to_string(lineno) + ": ranks must be consecutive from 1");
    out.back().items.push_back({kUnknownIndex, f[2], parse_number<double>(f[3], lineno)});
  }
  return out;
}

std::string rankings_to_jsonl(const std::vector<Ranking>& rankings) {
  std::string out;
  for (const auto& r : rankings) {
    nlohmann::ordered_json j;
    j["query_id"] = r.query_id;
    j["items"] = nlohmann::ordered_json::array();
    for (const auto& item : r.items) j["items"].push_back({{"id", item.id}, {"score", item.score}});
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<Ranking> rankings_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Ranking> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Ranking r;
      r.query_id = j.at("query_id").get<std::string>();
      for (const auto& item : j.at("items")) {
        r.items.push_back({kUnknownIndex, item.at("id").get<std::string>(), item.at("score").get<double>()});
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, "rankings jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_rankings(const std::vector<Ranking>& rankings, const std::filesystem::path& path) {
  const auto text = path.extension() == ".csv" ? rankings_to_csv(rankings) : rankings_to_jsonl(rankings);
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<Ranking> read_rankings(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string text(bytes.begin(), bytes.end());
  return path.extension() == ".csv" ? rankings_from_csv(text) : rankings_from_jsonl(text);
}

}  // namespace gradnet
