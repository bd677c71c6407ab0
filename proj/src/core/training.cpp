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

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gradnet {

// ---------------------------------------------------------------------------
// losses

double local_loss(double s_ij, double s_iu, LocalLossKind kind) {
  const double gap = s_ij - s_iu;
  if (kind == LocalLossKind::Bpr) {
    // -ln(sigmoid(gap)) = softplus(-gap)
    return gap > 0.0 ? std::log1p(std::exp(-gap)) : -gap + std::log1p(std::exp(gap));
  }
  return -std::log(std::max(gap, kGapEps));
}

double local_loss_slope(double s_ij, double s_iu, LocalLossKind kind) {
  const double gap = s_ij - s_iu;
  if (kind == LocalLossKind::Bpr) return -1.0 / (1.0 + std::exp(gap));
  return gap > kGapEps ? -1.0 / gap : 0.0;
}

GlobalLoss global_loss_terms(double a_ij, double a_kl, double s_ki, double s_li, double s_lj, double beta) {
  const double delta = s_ki - s_lj;
  const double scale = beta * a_ij * a_kl;
  const double inner = scale * s_ki * s_li * delta * delta;
  GlobalLoss out;
  if (inner < kGapEps) {
    // Opposite-sign similarities would make the product negative.
    out.value = std::log1p(kGapEps);
    out.clamped = inner < 0.0;
    return out;
  }
  out.value = std::log1p(inner);
  const double c = scale / (1.0 + inner);
  out.d_ki = c * (s_li * delta * delta + 2.0 * s_ki * s_li * delta);
  out.d_li = c * s_ki * delta * delta;
  out.d_lj = -2.0 * c * s_ki * s_li * delta;
  return out;
}

double global_loss(double a_ij, double a_kl, double s_ki, double s_li, double s_lj, double beta) {
  return global_loss_terms(a_ij, a_kl, s_ki, s_li, s_lj, beta).value;
}

namespace {

// Adds coef * d cos(h_a, h_b) / d h_a (and / d h_b) into grad.
template <class T>
void add_cosine_grad(const BasicMatrix<T>& h, std::size_t a, std::size_t b, double coef, BasicMatrix<T>& grad) {
  if (coef == 0.0) return;
  const auto ha = h.row(a), hb = h.row(b);
  const double na = std::sqrt(dot<T>(ha, ha)), nb = std::sqrt(dot<T>(hb, hb));
  if (na < kNormEps || nb < kNormEps) return;
  const double s = dot<T>(ha, hb) / (na * nb);
  const double inv = 1.0 / (na * nb);
  auto ga = grad.row(a);
  auto gb = grad.row(b);
  for (std::size_t c = 0; c < ha.size(); ++c) {
    const double da = hb[c] * inv - s * ha[c] / (na * na);
    const double db = ha[c] * inv - s * hb[c] / (nb * nb);
    ga[c] += static_cast<T>(coef * da);
    gb[c] += static_cast<T>(coef * db);
  }
}

}  // namespace

template <class T>
BatchLoss<T> batch_loss(std::span<const Sextet> sextets, const BasicMatrix<T>& h, const AffinityGraph& graph,
                        const LossWeights& weights, const BasicModelParams<T>& params,
                        std::span<const std::size_t> row_of, LocalLossKind kind, bool with_grad) {
  BatchLoss<T> out;
  if (with_grad) out.grad_features = BasicMatrix<T>(h.rows(), h.cols());
  auto row = [&](std::size_t node) {
    const std::size_t r = row_of.empty() ? node : row_of[node];
    expect(r < h.rows(), ErrorKind::State, "batch_loss: node " + std::to_string(node) + " has no feature row");
    return r;
  };
  const double inv_batch = sextets.empty() ? 0.0 : 1.0 / static_cast<double>(sextets.size());
  double total = 0.0;
  for (const auto& sx : sextets) {
    const auto ri = row(sx.i), rj = row(sx.j), rk = row(sx.k), rl = row(sx.l), ru = row(sx.u), rv = row(sx.v);
    const double s_ij = pairwise_similarity(h, ri, rj), s_iu = pairwise_similarity(h, ri, ru);
    const double s_kl = pairwise_similarity(h, rk, rl), s_kv = pairwise_similarity(h, rk, rv);
    const double s_ki = pairwise_similarity(h, rk, ri), s_li = pairwise_similarity(h, rl, ri);
    const double s_lj = pairwise_similarity(h, rl, rj);
    const double a_ij = graph.affinity.at(sx.i, sx.j), a_kl = graph.affinity.at(sx.k, sx.l);

    const auto glob = global_loss_terms(a_ij, a_kl, s_ki, s_li, s_lj, weights.beta);
    out.clamped_global += glob.clamped ? 1 : 0;
    total += local_loss(s_ij, s_iu, kind) + local_loss(s_kl, s_kv, kind) + weights.alpha_loss * glob.value;

    if (!with_grad) continue;
    const double g1 = local_loss_slope(s_ij, s_iu, kind) * inv_batch;
    const double g2 = local_loss_slope(s_kl, s_kv, kind) * inv_batch;
    const double ga = weights.alpha_loss * inv_batch;
    auto& g = out.grad_features;
    add_cosine_grad(h, ri, rj, g1, g);
    add_cosine_grad(h, ri, ru, -g1, g);
    add_cosine_grad(h, rk, rl, g2, g);
    add_cosine_grad(h, rk, rv, -g2, g);
    add_cosine_grad(h, rk, ri, ga * glob.d_ki, g);
    add_cosine_grad(h, rl, ri, ga * glob.d_li, g);
    add_cosine_grad(h, rl, rj, ga * glob.d_lj, g);
  }
  out.value = total * inv_batch + weights.lambda * params.squared_norm();
  return out;
}

// ---------------------------------------------------------------------------
// sampling

namespace {

std::vector<std::size_t> connected_nodes(const AffinityGraph& graph) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < graph.nodes(); ++i) {
    if (!graph.neighbors(i).empty()) out.push_back(i);
  }
  return out;
}

std::optional<Sextet> try_sextet(const AffinityGraph& graph, const std::vector<std::size_t>& candidates, Rng& rng) {
  const std::size_t n = graph.nodes();
  Sextet s{};
  s.i = candidates[rng.below(candidates.size())];
  s.k = candidates[rng.below(candidates.size())];
  const auto ni = graph.neighbors(s.i), nk = graph.neighbors(s.k);
  s.j = ni[rng.below(ni.size())];
  s.l = nk[rng.below(nk.size())];
  if (s.i == s.k || s.i == s.l || s.j == s.k || s.j == s.l) return std::nullopt;

  std::vector<std::size_t> closure{s.i, s.j, s.k, s.l};
  for (auto c : {s.i, s.j, s.k, s.l}) {
    const auto nb = graph.neighbors(c);
    closure.insert(closure.end(), nb.begin(), nb.end());
  }
  std::sort(closure.begin(), closure.end());
  closure.erase(std::unique(closure.begin(), closure.end()), closure.end());
  if (closure.size() + 2 > n) return std::nullopt;

  auto draw_outside = [&](std::size_t avoid) -> std::optional<std::size_t> {
    for (std::size_t t = 0; t < kSextetTries; ++t) {
      const std::size_t c = rng.below(n);
      if (c != avoid && !std::binary_search(closure.begin(), closure.end(), c)) return c;
    }
    return std::nullopt;
  };
  const auto u = draw_outside(n);
  if (!u) return std::nullopt;
  const auto v = draw_outside(*u);
  if (!v) return std::nullopt;
  s.u = *u;
  s.v = *v;
  return s;
}

std::optional<Sextet> sample_with_retries(const AffinityGraph& graph, const std::vector<std::size_t>& candidates,
                                          Rng& rng) {
  if (candidates.size() < 2 || graph.nodes() < 6) return std::nullopt;
  for (std::size_t attempt = 0; attempt < kSextetTries; ++attempt) {
    if (auto s = try_sextet(graph, candidates, rng)) return s;
  }
  return std::nullopt;
}

}  // namespace

Sextet sample_sextet(const AffinityGraph& graph, Rng& rng) {
  const auto candidates = connected_nodes(graph);
  auto s = sample_with_retries(graph, candidates, rng);
  if (!s) {
    fail(ErrorKind::Sampling, "no valid sextet after " + std::to_string(kSextetTries) + " attempts (graph with " +
                                  std::to_string(graph.nodes()) + " nodes is too small or too dense)");
  }
  return *s;
}

std::vector<Sextet> sample_batch(const AffinityGraph& graph, Rng& rng, std::size_t count) {
  const auto candidates = connected_nodes(graph);
  std::vector<Sextet> out;
  for (std::size_t b = 0; b < count; ++b) {
    if (auto s = sample_with_retries(graph, candidates, rng)) out.push_back(*s);
  }
  if (out.empty() && count > 0) {
    fail(ErrorKind::Sampling, "could not sample any sextet (graph too small or too dense)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// mini-batch subgraph

Subgraph bfs_subgraph(const AffinityGraph& graph, std::span<const std::size_t> seeds, std::size_t hops,
                      std::size_t node_budget, Rng& rng) {
  const std::size_t n = graph.nodes();
  Subgraph sub;
  sub.row_of.assign(n, kNoRow);
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> frontier;
  for (auto s : seeds) {
    expect(s < n, ErrorKind::Parameter, "bfs_subgraph: seed out of range");
    if (!seen[s]) {
      seen[s] = 1;
      frontier.push_back(s);
    }
  }
  std::sort(frontier.begin(), frontier.end());
  sub.nodes = frontier;
  for (std::size_t hop = 0; hop < hops && !frontier.empty(); ++hop) {
    std::vector<std::size_t> next;
    for (auto f : frontier) {
      for (auto nb : graph.neighbors(f)) {
        if (!seen[nb]) {
          seen[nb] = 1;
          next.push_back(nb);
        }
      }
    }
    std::sort(next.begin(), next.end());
    if (node_budget != kUnlimitedBudget && sub.nodes.size() + next.size() > node_budget) {
      const std::size_t room = node_budget > sub.nodes.size() ? node_budget - sub.nodes.size() : 0;
      for (std::size_t a = 0; a < room; ++a) std::swap(next[a], next[a + rng.below(next.size() - a)]);
      next.resize(room);
      sub.nodes.insert(sub.nodes.end(), next.begin(), next.end());
      break;
    }
    sub.nodes.insert(sub.nodes.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  std::sort(sub.nodes.begin(), sub.nodes.end());
  for (std::size_t r = 0; r < sub.nodes.size(); ++r) sub.row_of[sub.nodes[r]] = r;

  const auto& s = graph.transition;
  std::vector<std::size_t> ptr(sub.nodes.size() + 1, 0), idx;
  std::vector<float> val;
  for (std::size_t r = 0; r < sub.nodes.size(); ++r) {
    const auto cols = s.row_cols(sub.nodes[r]);
    const auto vals = s.row_values(sub.nodes[r]);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      if (sub.row_of[cols[p]] != kNoRow) {
        idx.push_back(sub.row_of[cols[p]]);
        val.push_back(vals[p]);
      }
    }
    ptr[r + 1] = idx.size();
  }
  sub.transition = SparseMatrix(sub.nodes.size(), sub.nodes.size(), std::move(ptr), std::move(idx), std::move(val));
  return sub;
}

// ---------------------------------------------------------------------------
// optimizer

AdamState AdamState::zeros_like(const ModelParams& p) {
  AdamState s;
  for (const auto& l : p.layers) {
    s.m1.emplace_back(l.w1.rows(), l.w1.cols());
    s.v1.emplace_back(l.w1.rows(), l.w1.cols());
    s.m2.emplace_back(l.w2.rows(), l.w2.cols());
    s.v2.emplace_back(l.w2.rows(), l.w2.cols());
  }
  return s;
}

void adam_update(std::span<float> w, std::span<const float> g, std::span<float> m, std::span<float> v,
                 std::uint64_t timestep, double lr, const AdamConfig& cfg) {
  expect(w.size() == g.size() && w.size() == m.size() && w.size() == v.size(), ErrorKind::Shape,
         "adam_update: shape mismatch");
  const double t = static_cast<double>(timestep);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    w[i] = static_cast<float>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
  }
}

void adam_step(ModelParams& params, const ParamGrads<float>& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  expect(grads.size() == params.depth() && state.m1.size() == params.depth(), ErrorKind::Shape,
         "adam_step: layer count mismatch");
  ++state.timestep;
  for (std::size_t l = 0; l < params.depth(); ++l) {
    adam_update(params.layers[l].w1.values(), grads[l].w1.values(), state.m1[l].values(), state.v1[l].values(),
                state.timestep, lr, cfg);
    adam_update(params.layers[l].w2.values(), grads[l].w2.values(), state.m2[l].values(), state.v2[l].values(),
                state.timestep, lr, cfg);
  }
}

double lr_schedule(std::size_t epoch, double base_lr) {
  if (epoch < 30) return base_lr;
  if (epoch < 100) return base_lr / 2.0;
  return base_lr / 4.0;
}

// ---------------------------------------------------------------------------
// config

namespace {

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Config c;
    c.set("d", item);
    dims.push_back(c.get_size_or("d", 0));
    expect(dims.back() > 0, ErrorKind::Parameter, "layer widths must be positive: '" + text + "'");
  }
  expect(!dims.empty(), ErrorKind::Parameter, "dims must list at least one layer width");
  return dims;
}

}  // namespace

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.notation = c.get_or("notation", "pow10");
  if (t.notation == "exp") {
    t.weights.beta = std::exp(5.0);
    t.weights.lambda = std::exp(-5.0);
    t.lr = 3.0 * std::exp(-4.0);
  } else {
    expect(t.notation == "pow10", ErrorKind::Parameter, "notation must be 'pow10' or 'exp'");
  }
  if (auto d = c.get("dims")) t.hidden_dims = parse_dims(*d);
  t.dropout = c.get_double_or("dropout", t.dropout);
  t.leaky_slope = c.get_double_or("leaky_slope", t.leaky_slope);
  t.batch = c.get_size_or("batch", t.batch);
  t.epochs = c.get_size_or("epochs", t.epochs);
  t.lr = c.get_double_or("lr", t.lr);
  t.weights.alpha_loss = c.get_double_or("alpha_loss", t.weights.alpha_loss);
  t.weights.beta = c.get_double_or("beta", t.weights.beta);
  t.weights.lambda = c.get_double_or("lambda", t.weights.lambda);
  const auto local = c.get_or("local_loss", "clamp");
  expect(local == "clamp" || local == "bpr", ErrorKind::Parameter, "local_loss must be 'clamp' or 'bpr'");
  t.local = local == "bpr" ? LocalLossKind::Bpr : LocalLossKind::Clamp;
  t.seed = c.get_u64_or("seed", t.seed);
  if (c.has("hops")) t.hops = c.get_size_or("hops", 0);
  t.node_budget = c.get_size_or("node_budget", t.node_budget);
  t.checkpoint_every = c.get_size_or("checkpoint_every", t.checkpoint_every);

  expect(t.dropout >= 0.0 && t.dropout < 1.0, ErrorKind::Parameter, "dropout must lie in [0, 1)");
  expect(t.batch >= 1, ErrorKind::Parameter, "batch must be >= 1");
  expect(t.lr > 0.0, ErrorKind::Parameter, "lr must be > 0");
  expect(t.weights.alpha_loss >= 0.0 && t.weights.beta >= 0.0 && t.weights.lambda >= 0.0, ErrorKind::Parameter,
         "loss weights must be >= 0");
  return t;
}

Config TrainConfig::to_config() const {
  Config c;
  std::string dims;
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) dims += (i ? "," : "") + std::to_string(hidden_dims[i]);
  c.set("dims", dims);
  c.set("dropout", format_double(dropout));
  c.set("leaky_slope", format_double(leaky_slope));
  c.set("batch", std::to_string(batch));
  c.set("epochs", std::to_string(epochs));
  c.set("lr", format_double(lr));
  c.set("alpha_loss", format_double(weights.alpha_loss));
  c.set("beta", format_double(weights.beta));
  c.set("lambda", format_double(weights.lambda));
  c.set("local_loss", local == LocalLossKind::Bpr ? "bpr" : "clamp");
  c.set("seed", std::to_string(seed));
  c.set("hops", std::to_string(effective_hops()));
  c.set("node_budget", std::to_string(node_budget));
  c.set("checkpoint_every", std::to_string(checkpoint_every));
  c.set("notation", notation);
  return c;
}

// ---------------------------------------------------------------------------
// loop

std::size_t steps_per_epoch(std::size_t nodes, std::size_t batch) {
  const std::size_t per_step = 6 * std::max<std::size_t>(batch, 1);
  return std::max<std::size_t>(1, (nodes + per_step - 1) / per_step);
}

TrainState initial_train_state(std::size_t input_dim, const TrainConfig& cfg) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  TrainState s{init_params(dims, cfg.seed, cfg.leaky_slope, cfg.dropout), {}, 0, Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL)};
  s.adam = AdamState::zeros_like(s.params);
  return s;
}

TrainLogRecord train_step(const DenseMatrix& x_aug, const AffinityGraph& graph, const TrainConfig& cfg,
                          TrainState& state, double lr) {
  auto sextets = sample_batch(graph, state.rng, cfg.batch);
  std::vector<std::size_t> seeds;
  for (const auto& s : sextets) seeds.insert(seeds.end(), {s.i, s.j, s.k, s.l, s.u, s.v});
  const auto sub = bfs_subgraph(graph, seeds, cfg.effective_hops(), cfg.node_budget, state.rng);
  const auto x_sub = gather_rows(x_aug, sub.nodes);
  const auto fwd = forward(x_sub, sub.transition, state.params, Mode::Train, &state.rng);
  const auto loss = batch_loss<float>(sextets, fwd.features, graph, cfg.weights, state.params, sub.row_of, cfg.local);

  TrainLogRecord rec{state.epoch, state.adam.timestep, loss.value, lr, sub.nodes.size(), loss.clamped_global};
  if (!std::isfinite(loss.value)) return rec;

  auto grads = backward(loss.grad_features, fwd, sub.transition, state.params);
  const auto two_lambda = static_cast<float>(2.0 * cfg.weights.lambda);
  for (std::size_t l = 0; l < grads.size(); ++l) {
    for (auto [g, w] : {std::pair{&grads[l].w1, &state.params.layers[l].w1}, std::pair{&grads[l].w2, &state.params.layers[l].w2}}) {
      for (std::size_t i = 0; i < g->size(); ++i) g->data()[i] += two_lambda * w->data()[i];
    }
  }
  adam_step(state.params, grads, state.adam, lr);
  return rec;
}

std::vector<double> train(const DenseMatrix& x_aug, const AffinityGraph& graph, const TrainConfig& cfg,
                          TrainState& state, const TrainHooks& hooks) {
  expect(x_aug.rows() == graph.nodes(), ErrorKind::Shape,
         "train: " + std::to_string(x_aug.rows()) + " feature rows but graph has " + std::to_string(graph.nodes()) +
             " nodes");
  expect(x_aug.cols() == state.params.dims.front(), ErrorKind::Shape, "train: feature width does not match model d0");
  const std::size_t steps = steps_per_epoch(graph.nodes(), cfg.batch);
  std::vector<double> epoch_losses;
  while (state.epoch < cfg.epochs) {
    const double lr = lr_schedule(state.epoch, cfg.lr);
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto rec = train_step(x_aug, graph, cfg, state, lr);
      if (hooks.on_step) hooks.on_step(rec);
      if (!std::isfinite(rec.loss)) {
        if (hooks.on_abort) hooks.on_abort(state);
        fail(ErrorKind::Numerical, "non-finite training loss at epoch " + std::to_string(state.epoch) + ", step " +
                                       std::to_string(rec.step));
      }
      sum += rec.loss;
    }
    epoch_losses.push_back(sum / static_cast<double>(steps));
    ++state.epoch;
    if (hooks.on_epoch) hooks.on_epoch(state);
  }
  return epoch_losses;
}

OptimizerSnapshot snapshot(const TrainState& s) {
  OptimizerSnapshot snap;
  snap.timestep = s.adam.timestep;
  snap.epoch = s.epoch;
  snap.rng_state = s.rng.state();
  snap.m1 = s.adam.m1;
  snap.v1 = s.adam.v1;
  snap.m2 = s.adam.m2;
  snap.v2 = s.adam.v2;
  return snap;
}

TrainState restore(const CheckpointData& c) {
  TrainState s;
  s.params = params_from_checkpoint(c);
  if (c.state) {
    s.adam.m1 = c.state->m1;
    s.adam.v1 = c.state->v1;
    s.adam.m2 = c.state->m2;
    s.adam.v2 = c.state->v2;
    s.adam.timestep = c.state->timestep;
    s.epoch = c.state->epoch;
    s.rng.set_state(c.state->rng_state);
  } else {
    s.adam = AdamState::zeros_like(s.params);
    s.rng = Rng(Config::parse(c.config).get_u64_or("seed", 0) ^ 0x9e3779b97f4a7c15ULL);
  }
  return s;
}

template BatchLoss<float> batch_loss<float>(std::span<const Sextet>, const BasicMatrix<float>&, const AffinityGraph&,
                                            const LossWeights&, const BasicModelParams<float>&,
                                            std::span<const std::size_t>, LocalLossKind, bool);
template BatchLoss<double> batch_loss<double>(std::span<const Sextet>, const BasicMatrix<double>&,
                                              const AffinityGraph&, const LossWeights&, const BasicModelParams<double>&,
                                              std::span<const std::size_t>, LocalLossKind, bool);

}  // namespace gradnet
