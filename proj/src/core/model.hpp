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

#include <cstdint>
#include <vector>

#include "dataio.hpp"
#include "kernels.hpp"
#include "rng.hpp"

namespace gradnet {

inline constexpr double kDefaultLeakySlope = 0.2;
inline constexpr double kDefaultDropout = 0.3;

template <class T>
struct BasicLayerParams {
  BasicMatrix<T> w1;  // first-order (self-loop) path
  BasicMatrix<T> w2;  // second-order path
  bool operator==(const BasicLayerParams&) const = default;
};

/// Stacked diffusion layers; dims = [d0, d1, ..., dL].
template <class T>
struct BasicModelParams {
  std::vector<BasicLayerParams<T>> layers;
  std::vector<std::size_t> dims;
  double leaky_slope = kDefaultLeakySlope;
  double dropout = kDefaultDropout;

  std::size_t depth() const noexcept { return layers.size(); }
  // Width of the concatenated output H0 | H1 | ... | HL.
  std::size_t total_width() const;
  double squared_norm() const;
  void validate() const;

  bool operator==(const BasicModelParams&) const = default;
};

using LayerParams = BasicLayerParams<float>;
using ModelParams = BasicModelParams<float>;

template <class T>
using ParamGrads = std::vector<BasicLayerParams<T>>;

template <class U, class T>
BasicModelParams<U> params_cast(const BasicModelParams<T>& p) {
  BasicModelParams<U> out;
  out.dims = p.dims;
  out.leaky_slope = p.leaky_slope;
  out.dropout = p.dropout;
  for (const auto& l : p.layers) out.layers.push_back({matrix_cast<U>(l.w1), matrix_cast<U>(l.w2)});
  return out;
}

enum class Mode { Train, Eval };

// Glorot-uniform weights from the fixed PRNG.
ModelParams init_params(const std::vector<std::size_t>& dims, std::uint64_t seed,
                        double leaky_slope = kDefaultLeakySlope, double dropout = kDefaultDropout);

/// Intermediates of one layer kept for the backward pass.
template <class T>
struct LayerCache {
  BasicMatrix<T> smoothed;     // S H
  BasicMatrix<T> first;        // (I + S) H
  BasicMatrix<T> second;       // S ((S H) . H)
  BasicMatrix<T> pre;          // first W1 + second W2
  BasicMatrix<T> normalized;   // rows of LeakyReLU(pre) scaled to unit norm
  std::vector<double> norms;   // row norms before normalization
  BasicMatrix<T> dropout_scale;  // 0 or 1/(1-p); empty when dropout is off
};

template <class T>
struct LayerOutput {
  BasicMatrix<T> h;
  LayerCache<T> cache;
};

template <class T>
LayerOutput<T> layer_forward(const BasicMatrix<T>& h, const SparseMatrix& s, const BasicLayerParams<T>& layer,
                             double leaky_slope, double dropout, Mode mode, Rng* rng);

template <class T>
struct ForwardResult {
  BasicMatrix<T> features;              // H0 | H1 | ... | HL
  std::vector<BasicMatrix<T>> outputs;  // H0 .. HL
  std::vector<LayerCache<T>> caches;    // one per layer
  Mode mode = Mode::Eval;
};

// rng is required in training mode when dropout > 0.
template <class T>
ForwardResult<T> forward(const BasicMatrix<T>& x_aug, const SparseMatrix& s, const BasicModelParams<T>& params,
                         Mode mode, Rng* rng = nullptr);

// Gradients of a scalar loss w.r.t. every W1/W2 given dL/d(features).
template <class T>
ParamGrads<T> backward(const BasicMatrix<T>& grad_features, const ForwardResult<T>& fwd, const SparseMatrix& s,
                       const BasicModelParams<T>& params);

template <class T>
double pairwise_similarity(const BasicMatrix<T>& h, std::size_t i, std::size_t j);

// Eval-mode concatenated features.
DenseMatrix embed(const ModelParams& params, const DenseMatrix& x_aug, const SparseMatrix& s);

CheckpointData to_checkpoint(const ModelParams& params, const std::string& config, std::uint64_t feature_hash);
ModelParams params_from_checkpoint(const CheckpointData& c);

}  // namespace gradnet
