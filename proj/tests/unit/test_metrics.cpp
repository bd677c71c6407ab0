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

#include <algorithm>

#include "metrics.hpp"
#include "test_support.hpp"

using namespace gradnet;

namespace {

Ranking make(const std::string& q, std::initializer_list<std::string> ids) {
  Ranking r;
  r.query_id = q;
  std::size_t i = 0;
  for (const auto& id : ids) r.items.push_back({i++, id, 1.0 / static_cast<double>(i)});
  return r;
}

QueryTruth truth(std::set<std::string> pos, std::set<std::string> junk = {}) { return {std::move(pos), std::move(junk)}; }

}  // namespace

TEST_CASE("average precision examples") {
  // hits at 1 and 3: (1/1 + 2/3) / 2
  CHECK(average_precision(make("q", {"a", "x", "b"}), truth({"a", "b"})) == doctest::Approx(5.0 / 6.0));
  CHECK(average_precision(make("q", {"a", "b"}), truth({"a", "b"})) == doctest::Approx(1.0));
  CHECK(average_precision(make("q", {"x", "y"}), truth({"a"})) == 0.0);
  // unretrieved positives count in the denominator
  CHECK(average_precision(make("q", {"a"}), truth({"a", "b"})) == doctest::Approx(0.5));
  // junk is dropped before scoring
  CHECK(average_precision(make("q", {"j", "a"}), truth({"a"}, {"j"})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(average_precision(make("q", {"a"}), truth({})), Error);
}

namespace {

// Mean over positives of precision at each positive's rank; unretrieved positives score 0.
double ap_oracle(const std::vector<std::string>& ranked, const std::set<std::string>& pos) {
  double total = 0.0;
  for (const auto& p : pos) {
    const auto it = std::find(ranked.begin(), ranked.end(), p);
    if (it == ranked.end()) continue;
    const auto rank = static_cast<std::size_t>(it - ranked.begin()) + 1;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < rank; ++r) hits += pos.count(ranked[r]);
    total += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return total / static_cast<double>(pos.size());
}

struct RandomCase {
  Ranking ranking;
  std::vector<std::string> ids;
  std::set<std::string> pos;
};

RandomCase random_case(Rng& rng, const std::string& q) {
  RandomCase c;
  c.ranking.query_id = q;
  for (std::size_t i = 0; i < 40; ++i) {
    const std::string id = "i" + std::to_string(i);
    if (rng.uniform() < 0.3) c.pos.insert(id);
    if (rng.uniform() < 0.8) c.ids.push_back(id);
  }
  if (c.pos.empty()) c.pos.insert("i0");
  for (std::size_t i = c.ids.size(); i > 1; --i) std::swap(c.ids[i - 1], c.ids[rng.below(i)]);
  for (std::size_t i = 0; i < c.ids.size(); ++i) c.ranking.items.push_back({i, c.ids[i], 0.0});
  return c;
}

}  // namespace

TEST_CASE("average precision matches definition oracle") {
  Rng rng(40);
  for (int t = 0; t < 200; ++t) {
    const auto c = random_case(rng, "q");
    CHECK(std::abs(average_precision(c.ranking, {c.pos, {}}) - ap_oracle(c.ids, c.pos)) <= 1e-9);
  }
}

TEST_CASE("map over 55 random queries") {
  Rng rng(41);
  GroundTruth gt;
  std::vector<Ranking> rs;
  double sum = 0.0;
  for (int q = 0; q < 55; ++q) {
    const std::string id = "q" + std::to_string(q);
    const auto c = random_case(rng, id);
    gt.queries[id] = {c.pos, {}};
    rs.push_back(c.ranking);
    sum += ap_oracle(c.ids, c.pos);
  }
  CHECK(mean_average_precision(rs, gt).aggregate == doctest::Approx(100.0 * sum / 55.0).epsilon(1e-12));
}

TEST_CASE("mean average precision aggregate") {
  GroundTruth gt;
  gt.queries["q1"] = truth({"a"});
  gt.queries["q2"] = truth({"b"});
  const std::vector<Ranking> rs{make("q1", {"a", "b"}), make("q2", {"a", "b"})};
  const auto m = mean_average_precision(rs, gt);
  CHECK(m.aggregate == doctest::Approx(75.0));
  REQUIRE(m.per_query.size() == 2);
  CHECK(m.per_query[0] == doctest::Approx(100.0));
  CHECK(m.per_query[1] == doctest::Approx(50.0));
}

TEST_CASE("label-derived positives exclude the query") {
  GroundTruth gt;
  gt.labels = {{"a", 0}, {"b", 0}, {"c", 1}};
  const auto t = gt.truth_for("a");
  CHECK(t.positives == std::set<std::string>{"b"});
  const auto j = GroundTruth::from_json(R"({"queries":{"a":{"positives":["c"],"junk":["b"]}},"labels":{"a":0,"b":0,"c":1}})");
  CHECK(j.truth_for("a").positives == std::set<std::string>{"c"});
  CHECK(j.truth_for("a").junk == std::set<std::string>{"b"});
  CHECK(j.truth_for("b").positives == std::set<std::string>{"a"});
  CHECK_THROWS_AS(GroundTruth::from_json("[1,2]"), Error);
}

TEST_CASE("bullseye conventions") {
  // two classes of three
  const std::map<std::string, std::int32_t> labels{{"a", 0}, {"b", 0}, {"c", 0}, {"x", 1}, {"y", 1}, {"z", 1}};
  const std::vector<Ranking> perfect{make("a", {"b", "c", "x", "y", "z"})};
  CHECK(bullseye(perfect, labels, 3).aggregate == doctest::Approx(100.0));
  CHECK(bullseye(perfect, labels, 2).aggregate == doctest::Approx(200.0 / 3.0));
  // query present in its own ranking takes its slot there
  const std::vector<Ranking> with_self{make("a", {"a", "x", "b", "c"})};
  CHECK(bullseye(with_self, labels, 3).aggregate == doctest::Approx(200.0 / 3.0));
  // window covering the whole database always saturates
  const std::vector<Ranking> worst{make("a", {"x", "y", "z", "b", "c"})};
  CHECK(bullseye(worst, labels, 6).aggregate == doctest::Approx(100.0));
  double prev = -1.0;
  for (std::size_t k = 1; k <= 6; ++k) {
    const double v = bullseye(worst, labels, k).aggregate;
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(bullseye(perfect, labels, 0), Error);
}

TEST_CASE("report json carries per-query values") {
  const std::vector<Ranking> rs{make("q1", {"a"})};
  MetricResult m{50.0, {50.0}};
  const auto text = metric_report_json("map", rs, m, "k=1\n");
  CHECK(text.find("\"q1\"") != std::string::npos);
  CHECK(text.find("map") != std::string::npos);
}
