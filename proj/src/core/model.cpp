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

#include "model.hpp"

#include <cmath>
#include <numeric>

#include "config.hpp"

namespace gradnet {

template <class T>
std::size_t BasicModelParams<T>::total_width() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{0});
}

template <class T>
double BasicModelParams<T>::squared_norm() const {
  double acc = 0.0;
  for (const auto& l : layers) acc += dot(l.w1.values(), l.w1.values()) + dot(l.w2.values(), l.w2.values());
  return acc;
}

template <class T>
void BasicModelParams<T>::validate() const {
  expect(!layers.empty(), ErrorKind::State, "model has no layers");
  expect(dims.size() == layers.size() + 1, ErrorKind::State, "model dims do not match layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (const auto* w : {&layers[l].w1, &layers[l].w2}) {
      expect(w->rows() == dims[l] && w->cols() == dims[l + 1], ErrorKind::State,
             "layer " + std::to_string(l) + " weight shape does not match dims");
    }
  }
  expect(dropout >= 0.0 && dropout < 1.0, ErrorKind::Parameter, "dropout must lie in [0, 1)");
}

ModelParams init_params(const std::vector<std::size_t>& dims, std::uint64_t seed, double leaky_slope,
                        double dropout) {
  expect(dims.size() >= 2, ErrorKind::Parameter, "model needs at least one layer (dims has < 2 entries)");
  for (auto d : dims) expect(d >= 1, ErrorKind::Parameter, "layer widths must be >= 1");
  Rng rng(seed);
  ModelParams p;
  p.dims = dims;
  p.leaky_slope = leaky_slope;
  p.dropout = dropout;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    LayerParams layer{DenseMatrix(dims[l], dims[l + 1]), DenseMatrix(dims[l], dims[l + 1])};
    for (auto* w : {&layer.w1, &layer.w2}) {
      for (auto& v : w->values()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    p.layers.push_back(std::move(layer));
  }
  p.validate();
  return p;
}

template <class T>
LayerOutput<T> layer_forward(const BasicMatrix<T>& h, const SparseMatrix& s, const BasicLayerParams<T>& layer,
                             double leaky_slope, double dropout, Mode mode, Rng* rng) {
  expect(s.rows() == h.rows() && s.cols() == h.rows(), ErrorKind::Shape,
         "layer_forward: S is " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) + " but H has " +
             std::to_string(h.rows()) + " rows");
  expect(layer.w1.rows() == h.cols() && layer.w2.rows() == h.cols() && layer.w1.cols() == layer.w2.cols(),
         ErrorKind::Shape, "layer_forward: weight shapes do not match input width " + std::to_string(h.cols()));
  LayerOutput<T> out;
  auto& c = out.cache;
  c.smoothed = spmm(s, h);
  c.first = add(h, c.smoothed);
  c.second = spmm(s, hadamard(c.smoothed, h));
  c.pre = matmul(c.first, layer.w1);
  add_inplace(c.pre, matmul(c.second, layer.w2));

  const T slope = static_cast<T>(leaky_slope);
  BasicMatrix<T> act = c.pre;
  for (auto& v : act.values()) v = v > T{0} ? v : slope * v;
  c.norms.resize(act.rows());
  for (std::size_t r = 0; r < act.rows(); ++r) c.norms[r] = std::sqrt(dot<T>(act.row(r), act.row(r)));
  c.normalized = l2_normalize_rows(act);

  out.h = c.normalized;
  if (mode == Mode::Train && dropout > 0.0) {
    expect(rng != nullptr, ErrorKind::State, "layer_forward: training-mode dropout needs an rng");
    c.dropout_scale = BasicMatrix<T>(out.h.rows(), out.h.cols());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout));
    for (std::size_t i = 0; i < out.h.size(); ++i) {
      const T scale = rng->uniform() < dropout ? T{0} : keep_scale;
      c.dropout_scale.data()[i] = scale;
      out.h.data()[i] *= scale;
    }
  }
  return out;
}

template <class T>
ForwardResult<T> forward(const BasicMatrix<T>& x_aug, const SparseMatrix& s, const BasicModelParams<T>& params,
                         Mode mode, Rng* rng) {
  params.validate();
  expect(x_aug.cols() == params.dims.front(), ErrorKind::Shape,
         "forward: input width " + std::to_string(x_aug.cols()) + " != d0 " + std::to_string(params.dims.front()));
  ForwardResult<T> res;
  res.mode = mode;
  res.outputs.push_back(x_aug);
  for (const auto& layer : params.layers) {
    auto out = layer_forward(res.outputs.back(), s, layer, params.leaky_slope, params.dropout, mode, rng);
    res.outputs.push_back(std::move(out.h));
    res.caches.push_back(std::move(out.cache));
  }
  const std::size_t n = x_aug.rows();
  res.features = BasicMatrix<T>(n, params.total_width());
  std::size_t offset = 0;
  for (const auto& h : res.outputs) {
    for (std::size_t r = 0; r < n; ++r) std::copy_n(h.row(r).data(), h.cols(), res.features.row(r).data() + offset);
    offset += h.cols();
  }
  return res;
}

template <class T>
ParamGrads<T> backward(const BasicMatrix<T>& grad_features, const ForwardResult<T>& fwd, const SparseMatrix& s,
                       const BasicModelParams<T>& params) {
  const std::size_t depth = params.depth();
  expect(fwd.caches.size() == depth && fwd.outputs.size() == depth + 1, ErrorKind::State,
         "backward: forward caches do not match the model depth");
  expect(grad_features.rows() == fwd.features.rows() && grad_features.cols() == fwd.features.cols(), ErrorKind::State,
         "backward: upstream gradient shape does not match the forward output");
  for (std::size_t l = 0; l < depth; ++l) {
    expect(fwd.caches[l].pre.cols() == params.dims[l + 1] && fwd.outputs[l].cols() == params.dims[l],
           ErrorKind::State, "backward: cache shapes do not match the parameters");
  }

  std::vector<std::size_t> offsets(depth + 1, 0);
  for (std::size_t l = 1; l <= depth; ++l) offsets[l] = offsets[l - 1] + params.dims[l - 1];

  const T slope = static_cast<T>(params.leaky_slope);
  ParamGrads<T> grads(depth);
  BasicMatrix<T> upstream;  // dL/dH^(l+1) arriving from the layer above
  for (std::size_t li = depth; li-- > 0;) {
    const auto& cache = fwd.caches[li];
    const auto& h_in = fwd.outputs[li];
    const auto& layer = params.layers[li];

    // dL/dH^(li+1): concat slice plus the contribution of the next layer
    BasicMatrix<T> g = slice_cols(grad_features, offsets[li + 1], params.dims[li + 1]);
    if (!upstream.empty()) add_inplace(g, upstream);

    if (!cache.dropout_scale.empty()) g = hadamard(g, cache.dropout_scale);

    // row l2-normalization: dn -> da = (dn - n (n . dn)) / |a|
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      const auto nr = cache.normalized.row(r);
      if (cache.norms[r] > kNormEps) {
        const double proj = dot<T>(nr, gr);
        const double inv = 1.0 / cache.norms[r];
        for (std::size_t c = 0; c < gr.size(); ++c) gr[c] = static_cast<T>((gr[c] - nr[c] * proj) * inv);
      } else {
        for (auto& v : gr) v = static_cast<T>(v / kNormEps);
      }
    }
    // LeakyReLU
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(cache.pre.data()[i] > T{0})) g.data()[i] *= slope;
    }

    grads[li].w1 = matmul_at_b(cache.first, g);
    grads[li].w2 = matmul_at_b(cache.second, g);
    if (li == 0) break;  // H^(0) is data, no gradient needed

    const auto g_first = matmul_a_bt(g, layer.w1);
    const auto g_second = matmul_a_bt(g, layer.w2);
    const auto g_product = spmm_transposed(s, g_second);  // d/d((SH) . H)
    auto g_smoothed = add(g_first, hadamard(g_product, h_in));
    BasicMatrix<T> g_in = add(g_first, hadamard(g_product, cache.smoothed));
    add_inplace(g_in, spmm_transposed(s, g_smoothed));
    upstream = std::move(g_in);
  }
  return grads;
}

template <class T>
double pairwise_similarity(const BasicMatrix<T>& h, std::size_t i, std::size_t j) {
  expect(i < h.rows() && j < h.rows(), ErrorKind::Parameter,
         "pairwise_similarity: row index out of range (" + std::to_string(std::max(i, j)) + " >= " +
             std::to_string(h.rows()) + ")");
  return cosine_similarity<T>(h.row(i), h.row(j));
}

DenseMatrix embed(const ModelParams& params, const DenseMatrix& x_aug, const SparseMatrix& s) {
  return forward(x_aug, s, params, Mode::Eval).features;
}

CheckpointData to_checkpoint(const ModelParams& params, const std::string& config, std::uint64_t feature_hash) {
  params.validate();
  CheckpointData c;
  c.dims = params.dims;
  for (const auto& l : params.layers) {
    c.w1.push_back(l.w1);
    c.w2.push_back(l.w2);
  }
  Config echo = Config::parse(config);
  echo.set("leaky_slope", format_double(params.leaky_slope));
  echo.set("dropout", format_double(params.dropout));
  c.config = echo.serialize();
  c.feature_hash = feature_hash;
  return c;
}

ModelParams params_from_checkpoint(const CheckpointData& c) {
  const auto echo = Config::parse(c.config);
  ModelParams p;
  p.dims = c.dims;
  p.leaky_slope = echo.get_double_or("leaky_slope", kDefaultLeakySlope);
  p.dropout = echo.get_double_or("dropout", kDefaultDropout);
  for (std::size_t l = 0; l < c.w1.size(); ++l) p.layers.push_back({c.w1[l], c.w2.at(l)});
  p.validate();
  return p;
}

#define GRADNET_INSTANTIATE(T)                                                                                   \
  template struct BasicModelParams<T>;                                                                           \
  template LayerOutput<T> layer_forward<T>(const BasicMatrix<T>&, const SparseMatrix&, const BasicLayerParams<T>&, \
                                           double, double, Mode, Rng*);                                          \
  template ForwardResult<T> forward<T>(const BasicMatrix<T>&, const SparseMatrix&, const BasicModelParams<T>&,   \
                                       Mode, Rng*);                                                              \
  template ParamGrads<T> backward<T>(const BasicMatrix<T>&, const ForwardResult<T>&, const SparseMatrix&,        \
                                     const BasicModelParams<T>&);                                                \
  template double pairwise_similarity<T>(const BasicMatrix<T>&, std::size_t, std::size_t);

GRADNET_INSTANTIATE(float)
GRADNET_INSTANTIATE(double)

#undef GRADNET_INSTANTIATE

}  // namespace gradnet
