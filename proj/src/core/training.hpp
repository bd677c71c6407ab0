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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "graph.hpp"
#include "model.hpp"

namespace gradnet {

/// (i, j, k, l, u, v): j in N(i), l in N(k), u and v outside the
/// neighborhoods of i, j, k, l; all six distinct.
struct Sextet {
  std::size_t i, j, k, l, u, v;
  bool operator==(const Sextet&) const = default;
};

struct LossWeights {
  double alpha_loss = 1.0;  // global-loss weight
  double beta = 1e5;        // scale inside the global loss
  double lambda = 1e-5;     // l2 penalty on all weights
};

enum class LocalLossKind { Clamp, Bpr };

inline constexpr double kGapEps = 1e-8;
inline constexpr std::size_t kSextetTries = 100;

// -ln(max(s_ij - s_iu, eps)), or -ln(sigmoid(gap)) for the Bpr variant.
double local_loss(double s_ij, double s_iu, LocalLossKind kind = LocalLossKind::Clamp);
// d local_loss / d gap
double local_loss_slope(double s_ij, double s_iu, LocalLossKind kind = LocalLossKind::Clamp);

struct GlobalLoss {
  double value = 0.0;
  double d_ki = 0.0, d_li = 0.0, d_lj = 0.0;
  bool clamped = false;  // product term was negative and clamped to eps
};

// ln(1 + max(beta a_ij a_kl s_ki s_li (s_ki - s_lj)^2, eps)); every term stays >= 0.
GlobalLoss global_loss_terms(double a_ij, double a_kl, double s_ki, double s_li, double s_lj, double beta);
double global_loss(double a_ij, double a_kl, double s_ki, double s_li, double s_lj, double beta);

// Throws Sampling if no valid sextet is found in kSextetTries attempts.
Sextet sample_sextet(const AffinityGraph& graph, Rng& rng);
// Up to `count` sextets; failed draws are skipped, all failing throws Sampling.
std::vector<Sextet> sample_batch(const AffinityGraph& graph, Rng& rng, std::size_t count);

template <class T>
struct BatchLoss {
  double value = 0.0;
  std::size_t clamped_global = 0;
  BasicMatrix<T> grad_features;  // dL/dH, same shape as H (penalty excluded)
};

// Mean over sextets of [local(i,j,u) + local(k,l,v) + alpha global(i,j,k,l)]
// plus lambda ||W||^2 once. Sextet indices are graph nodes; `row_of` maps a
// node to its row in `h` (empty = identity). Affinities come from graph.affinity.
template <class T>
BatchLoss<T> batch_loss(std::span<const Sextet> sextets, const BasicMatrix<T>& h, const AffinityGraph& graph,
                        const LossWeights& weights, const BasicModelParams<T>& params,
                        std::span<const std::size_t> row_of = {}, LocalLossKind kind = LocalLossKind::Clamp,
                        bool with_grad = true);

struct Subgraph {
  std::vector<std::size_t> nodes;   // ascending graph node ids
  std::vector<std::size_t> row_of;  // node id -> subgraph row, kNoRow if absent
  SparseMatrix transition;          // global S restricted to `nodes`
};

inline constexpr std::size_t kUnlimitedBudget = 0;

// Hop-by-hop frontier expansion. When a frontier would push the node count
// past `node_budget` (0 = unlimited), it is uniformly subsampled to fit.
Subgraph bfs_subgraph(const AffinityGraph& graph, std::span<const std::size_t> seeds, std::size_t hops,
                      std::size_t node_budget, Rng& rng);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<DenseMatrix> m1, v1, m2, v2;
  std::uint64_t timestep = 0;
  static AdamState zeros_like(const ModelParams& p);
};

void adam_update(std::span<float> w, std::span<const float> g, std::span<float> m, std::span<float> v,
                 std::uint64_t timestep, double lr, const AdamConfig& cfg = {});
void adam_step(ModelParams& params, const ParamGrads<float>& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// base for epoch < 30, base/2 for 30 <= epoch < 100, base/4 afterwards.
double lr_schedule(std::size_t epoch, double base_lr);

/// Training recipe. "pow10" notation reads the default "e^x" constants as
/// 10^x (beta 1e5, lambda 1e-5, lr 3e-4); "exp" reads them as natural exponentials.
struct TrainConfig {
  std::vector<std::size_t> hidden_dims{1024, 256, 128};
  double dropout = kDefaultDropout;
  double leaky_slope = kDefaultLeakySlope;
  std::size_t batch = 64;
  std::size_t epochs = 300;
  double lr = 3e-4;
  LossWeights weights;
  LocalLossKind local = LocalLossKind::Clamp;
  std::uint64_t seed = 0;
  std::optional<std::size_t> hops;  // default 2 * layers
  std::size_t node_budget = kUnlimitedBudget;
  std::size_t checkpoint_every = 0;
  std::string notation = "pow10";

  static TrainConfig from_config(const Config& c);
  Config to_config() const;
  std::size_t effective_hops() const { return hops.value_or(2 * hidden_dims.size()); }
};

struct TrainLogRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t nodes = 0;
  std::size_t clamped_global = 0;
};

struct TrainState {
  ModelParams params;
  AdamState adam;
  std::size_t epoch = 0;  // completed epochs
  Rng rng;
};

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_step;
  // Called after each completed epoch.
  std::function<void(const TrainState&)> on_epoch;
  // Called with the offending state before a non-finite loss aborts training.
  std::function<void(const TrainState&)> on_abort;
};

std::size_t steps_per_epoch(std::size_t nodes, std::size_t batch);

TrainState initial_train_state(std::size_t input_dim, const TrainConfig& cfg);

// Runs epochs [state.epoch, cfg.epochs) on x_aug / graph, mutating `state`.
// Returns mean loss per epoch run.
std::vector<double> train(const DenseMatrix& x_aug, const AffinityGraph& graph, const TrainConfig& cfg,
                          TrainState& state, const TrainHooks& hooks = {});

// One optimization step; returns its log record.
TrainLogRecord train_step(const DenseMatrix& x_aug, const AffinityGraph& graph, const TrainConfig& cfg,
                          TrainState& state, double lr);

OptimizerSnapshot snapshot(const TrainState& s);
TrainState restore(const CheckpointData& c);

}  // namespace gradnet
