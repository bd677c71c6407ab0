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
#include <set>

#include "dataio.hpp"
#include "graph.hpp"
#include "training.hpp"
#include "test_support.hpp"

using namespace gradnet;
using gradnet::test::random_matrix;

namespace {

// Ring where node i links to i +- 1 .. i +- reach.
AffinityGraph ring_graph(std::size_t n, std::size_t reach) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 1; d <= reach; ++d) {
      const float w = 1.0f / static_cast<float>(1 + d);
      t.push_back({i, (i + d) % n, w});
      t.push_back({(i + d) % n, i, w});
    }
  return AffinityGraph::from_affinity(SparseMatrix::from_triplets(n, n, std::move(t)));
}

AffinityGraph path_graph(std::size_t n) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    t.push_back({i, i + 1, 1.0f});
    t.push_back({i + 1, i, 1.0f});
  }
  return AffinityGraph::from_affinity(SparseMatrix::from_triplets(n, n, std::move(t)));
}

AffinityGraph complete_graph(std::size_t n) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) t.push_back({i, j, 1.0f});
  return AffinityGraph::from_affinity(SparseMatrix::from_triplets(n, n, std::move(t)));
}

bool adjacent(const AffinityGraph& g, std::size_t a, std::size_t b) {
  const auto nb = g.neighbors(a);
  return std::find(nb.begin(), nb.end(), b) != nb.end();
}

}  // namespace

TEST_CASE("local loss values and slopes") {
  CHECK(local_loss(0.9, 0.4) == doctest::Approx(-std::log(0.5)));
  CHECK(local_loss(0.1, 0.4) == doctest::Approx(-std::log(1e-8)));
  CHECK(local_loss_slope(0.1, 0.4) == 0.0);
  CHECK(local_loss(0.3, 0.3, LocalLossKind::Bpr) == doctest::Approx(std::log(2.0)));
  for (auto kind : {LocalLossKind::Clamp, LocalLossKind::Bpr}) {
    for (double gap : {0.05, 0.3, 0.9}) {
      const double h = 1e-6;
      const double fd = (local_loss(gap + h, 0.0, kind) - local_loss(gap - h, 0.0, kind)) / (2 * h);
      CHECK(local_loss_slope(gap, 0.0, kind) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("global loss worked example and derivatives") {
  // inner = 1 * 1 * 1 * 1 * (1 - (-0.2))^2 = 1.44
  CHECK(global_loss(1.0, 1.0, 1.0, 1.0, -0.2, 1.0) == doctest::Approx(std::log(2.44)));
  CHECK(global_loss(1.0, 1.0, 0.8, 0.5, 0.2, 10.0) == doctest::Approx(std::log(2.44)));
  CHECK(global_loss(1.0, 1.0, 0.8, 0.5, 0.2, 10.0) == doctest::Approx(0.8920).epsilon(1e-4));
  const double a = 0.7, b = 0.4, ski = 0.6, sli = 0.3, slj = 0.1, beta = 5.0;
  const auto g = global_loss_terms(a, b, ski, sli, slj, beta);
  const double h = 1e-6;
  CHECK(g.d_ki == doctest::Approx((global_loss(a, b, ski + h, sli, slj, beta) -
                                   global_loss(a, b, ski - h, sli, slj, beta)) / (2 * h)).epsilon(1e-6));
  CHECK(g.d_li == doctest::Approx((global_loss(a, b, ski, sli + h, slj, beta) -
                                   global_loss(a, b, ski, sli - h, slj, beta)) / (2 * h)).epsilon(1e-6));
  CHECK(g.d_lj == doctest::Approx((global_loss(a, b, ski, sli, slj + h, beta) -
                                   global_loss(a, b, ski, sli, slj - h, beta)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("global loss clamps negative products") {
  const auto g = global_loss_terms(1.0, 1.0, 0.5, -0.5, 0.0, 1e5);
  CHECK(g.clamped);
  CHECK(g.value >= 0.0);
  CHECK(g.value < 1e-7);
  CHECK(g.d_ki == 0.0);
  CHECK(g.d_li == 0.0);
  CHECK(g.d_lj == 0.0);
  // zero product is clamped but not flagged
  CHECK_FALSE(global_loss_terms(1.0, 1.0, 0.5, 0.5, 0.5, 1.0).clamped);
  Rng rng(9);
  for (int t = 0; t < 1000; ++t) {
    const double v = global_loss(rng.uniform(), rng.uniform(), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                 rng.uniform(-1.0, 1.0), 1e5);
    CHECK(v >= 0.0);
  }
}

TEST_CASE("complete graph has no valid sextet") {
  const auto g = complete_graph(6);
  Rng rng(1);
  CHECK_THROWS_AS(sample_sextet(g, rng), Error);
  try {
    sample_sextet(g, rng);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Sampling);
  }
  CHECK_THROWS_AS(sample_batch(g, rng, 4), Error);
}

TEST_CASE("sampled sextets are valid and anchors are uniform") {
  const std::size_t n = 40;
  const auto g = ring_graph(n, 2);
  Rng rng(2);
  std::vector<double> counts(n, 0.0);
  const std::size_t draws = 8000;
  for (std::size_t t = 0; t < draws; ++t) {
    const auto s = sample_sextet(g, rng);
    counts[s.i] += 1.0;
    CHECK(adjacent(g, s.i, s.j));
    CHECK(adjacent(g, s.k, s.l));
    const std::set<std::size_t> distinct{s.i, s.j, s.k, s.l, s.u, s.v};
    CHECK(distinct.size() == 6);
    for (auto c : {s.i, s.j, s.k, s.l}) {
      CHECK_FALSE(adjacent(g, c, s.u));
      CHECK_FALSE(adjacent(g, c, s.v));
    }
  }
  const double expected = static_cast<double>(draws) / n;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 39 degrees of freedom, p = 0.001
  CHECK(chi2 < 72.05);
}

TEST_CASE("anchor node marginal on the toy graph") {
  const auto toy = generate_toy(375, 0.001, 1);
  const auto g = build_mutual_knn(toy, 15, SimilarityMetric{});
  std::vector<std::size_t> connected;
  for (std::size_t i = 0; i < g.nodes(); ++i)
    if (!g.neighbors(i).empty()) connected.push_back(i);
  REQUIRE(connected.size() > 1000);
  std::vector<double> counts(g.nodes(), 0.0);
  Rng rng(8);
  const std::size_t draws = 10000;
  for (std::size_t t = 0; t < draws; ++t) counts[sample_sextet(g, rng).i] += 1.0;
  const double m = static_cast<double>(connected.size());
  const double expected = draws / m;
  double chi2 = 0.0;
  for (auto i : connected) chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  const double dof = m - 1.0;
  CHECK(chi2 < dof + 3.0 * std::sqrt(2.0 * dof));
  CHECK(chi2 > dof - 3.0 * std::sqrt(2.0 * dof));
}

TEST_CASE("batch loss gradient matches central differences") {
  const auto g = ring_graph(30, 2);
  Rng rng(3);
  const auto sextets = sample_batch(g, rng, 8);
  const auto params = params_cast<double>(init_params({4, 3}, 1));
  const LossWeights w{0.7, 50.0, 0.0};
  for (auto kind : {LocalLossKind::Clamp, LocalLossKind::Bpr}) {
    auto h = random_matrix<double>(30, 5, rng, 0.1, 1.0);
    const auto base = batch_loss<double>(sextets, h, g, w, params, {}, kind);
    const double step = 1e-6;
    for (std::size_t e = 0; e < h.size(); ++e) {
      const double keep = h.data()[e];
      h.data()[e] = keep + step;
      const double up = batch_loss<double>(sextets, h, g, w, params, {}, kind, false).value;
      h.data()[e] = keep - step;
      const double down = batch_loss<double>(sextets, h, g, w, params, {}, kind, false).value;
      h.data()[e] = keep;
      const double fd = (up - down) / (2 * step);
      CHECK(std::abs(fd - base.grad_features.data()[e]) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("weight penalty is added once") {
  const auto g = ring_graph(30, 2);
  Rng rng(4);
  const auto sextets = sample_batch(g, rng, 4);
  const auto params = params_cast<double>(init_params({4, 3}, 1));
  const auto h = random_matrix<double>(30, 5, rng, 0.1, 1.0);
  const double off = batch_loss<double>(sextets, h, g, {1.0, 1.0, 0.0}, params).value;
  const double on = batch_loss<double>(sextets, h, g, {1.0, 1.0, 0.01}, params).value;
  CHECK(on - off == doctest::Approx(0.01 * params.squared_norm()));
}

TEST_CASE("bfs on a path graph") {
  const auto g = path_graph(10);
  Rng rng(5);
  const std::vector<std::size_t> seed{4};
  const auto sub = bfs_subgraph(g, seed, 2, 0, rng);
  CHECK(sub.nodes == std::vector<std::size_t>{2, 3, 4, 5, 6});
  CHECK(sub.row_of[2] == 0);
  CHECK(sub.row_of[6] == 4);
  CHECK(sub.row_of[7] == kNoRow);
  // restricted transition equals the global entries
  for (std::size_t a = 0; a < sub.nodes.size(); ++a)
    for (std::size_t b = 0; b < sub.nodes.size(); ++b) {
      const auto cols = g.transition.row_cols(sub.nodes[a]);
      const auto vals = g.transition.row_values(sub.nodes[a]);
      float want = 0.0f;
      for (std::size_t p = 0; p < cols.size(); ++p)
        if (cols[p] == sub.nodes[b]) want = vals[p];
      float got = 0.0f;
      const auto sc = sub.transition.row_cols(a);
      const auto sv = sub.transition.row_values(a);
      for (std::size_t p = 0; p < sc.size(); ++p)
        if (sc[p] == b) got = sv[p];
      CHECK(got == want);
    }
  const auto capped = bfs_subgraph(g, seed, 5, 3, rng);
  CHECK(capped.nodes.size() == 3);
  CHECK(std::find(capped.nodes.begin(), capped.nodes.end(), 4) != capped.nodes.end());
  CHECK(bfs_subgraph(g, seed, 0, 0, rng).nodes == seed);
}

TEST_CASE("adam first and second step") {
  std::vector<float> w{1.0f, -2.0f}, m(2, 0.0f), v(2, 0.0f);
  const std::vector<float> g1{0.5f, -4.0f}, g2{-1.0f, 2.0f};
  adam_update(w, g1, m, v, 1, 0.1);
  // bias-corrected first step moves by lr * sign(g)
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-1.9).epsilon(1e-6));
  adam_update(w, g2, m, v, 2, 0.1);
  for (int c = 0; c < 2; ++c) {
    const double m2 = 0.9 * (0.1 * g1[c]) + 0.1 * g2[c];
    const double v2 = 0.999 * (0.001 * g1[c] * g1[c]) + 0.001 * g2[c] * g2[c];
    const double mhat = m2 / (1 - 0.81), vhat = v2 / (1 - 0.999 * 0.999);
    const double start = c == 0 ? 0.9 : -1.9;
    CHECK(w[c] == doctest::Approx(start - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-6));
    CHECK(m[c] == doctest::Approx(m2).epsilon(1e-6));
    CHECK(v[c] == doctest::Approx(v2).epsilon(1e-6));
  }
}

TEST_CASE("learning rate schedule") {
  CHECK(lr_schedule(0, 1.0) == 1.0);
  CHECK(lr_schedule(29, 1.0) == 1.0);
  CHECK(lr_schedule(30, 1.0) == 0.5);
  CHECK(lr_schedule(99, 1.0) == 0.5);
  CHECK(lr_schedule(100, 1.0) == 0.25);
  CHECK(lr_schedule(299, 1.0) == 0.25);
  CHECK(lr_schedule(0, TrainConfig{}.lr) == doctest::Approx(3e-4));
}

TEST_CASE("steps per epoch") {
  CHECK(steps_per_epoch(1500, 64) == 4);
  CHECK(steps_per_epoch(384, 64) == 1);
  CHECK(steps_per_epoch(385, 64) == 2);
  CHECK(steps_per_epoch(1, 64) == 1);
}

TEST_CASE("config notation and round trip") {
  auto cfg = TrainConfig::from_config(Config::parse("dims=8,4\nepochs=3\nseed=9\n"));
  CHECK(cfg.hidden_dims == std::vector<std::size_t>{8, 4});
  CHECK(cfg.weights.beta == doctest::Approx(1e5));
  CHECK(cfg.weights.lambda == doctest::Approx(1e-5));
  CHECK(cfg.effective_hops() == 4);
  const auto back = TrainConfig::from_config(cfg.to_config());
  CHECK(back.to_config().serialize() == cfg.to_config().serialize());
  const auto e = TrainConfig::from_config(Config::parse("notation=exp\n"));
  CHECK(e.weights.beta == doctest::Approx(std::exp(5.0)));
  CHECK(e.weights.lambda == doctest::Approx(std::exp(-5.0)));
  CHECK(e.lr == doctest::Approx(3.0 * std::exp(-4.0)));
  CHECK_THROWS_AS(TrainConfig::from_config(Config::parse("local_loss=hinge\n")), Error);
}

TEST_CASE("training loop: zero epochs, determinism, resume") {
  const auto g = ring_graph(60, 2);
  Rng rng(6);
  const auto x = random_matrix(60, 5, rng);
  TrainConfig cfg;
  cfg.hidden_dims = {6, 4};
  cfg.batch = 4;
  cfg.epochs = 0;
  cfg.seed = 11;
  auto s0 = initial_train_state(5, cfg);
  CHECK(train(x, g, cfg, s0).empty());
  CHECK(s0.params == init_params({5, 6, 4}, 11, cfg.leaky_slope, cfg.dropout));

  cfg.epochs = 4;
  auto a = initial_train_state(5, cfg);
  auto b = initial_train_state(5, cfg);
  const auto la = train(x, g, cfg, a);
  const auto lb = train(x, g, cfg, b);
  CHECK(la.size() == 4);
  CHECK(la == lb);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == s0.params);

  // two epochs, checkpoint, two more == four straight
  cfg.epochs = 2;
  auto c = initial_train_state(5, cfg);
  train(x, g, cfg, c);
  auto ck = to_checkpoint(c.params, cfg.to_config().serialize(), 0);
  ck.state = snapshot(c);
  auto resumed = restore(decode_ckpt(encode_ckpt(ck)));
  cfg.epochs = 4;
  train(x, g, cfg, resumed);
  CHECK(resumed.epoch == 4);
  CHECK(resumed.params == a.params);
}

TEST_CASE("non-finite loss aborts with the offending state") {
  const auto g = ring_graph(60, 2);
  DenseMatrix x(60, 5);
  for (auto& v : x.values()) v = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.hidden_dims = {4};
  cfg.epochs = 2;
  cfg.batch = 4;
  auto s = initial_train_state(5, cfg);
  bool aborted = false;
  TrainHooks hooks;
  hooks.on_abort = [&](const TrainState&) { aborted = true; };
  try {
    train(x, g, cfg, s, hooks);
    FAIL("expected abort");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numerical);
  }
  CHECK(aborted);
}
