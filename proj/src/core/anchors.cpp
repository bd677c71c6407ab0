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

#include "anchors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "config.hpp"
#include "rng.hpp"

namespace gradnet {

namespace {

double sq_dist(std::span<const double> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace

DenseMatrix kmeans(const DenseMatrix& x, std::size_t clusters, std::uint64_t seed, std::size_t max_iters) {
  const std::size_t n = x.rows(), d = x.cols();
  expect(clusters >= 1, ErrorKind::Parameter, "kmeans: cluster count must be >= 1");
  expect(clusters <= n, ErrorKind::Parameter,
         "kmeans: cluster count " + std::to_string(clusters) + " exceeds point count " + std::to_string(n));
  Rng rng(seed);
  BasicMatrix<double> centers(clusters, d);
  auto set_center = [&](std::size_t c, std::size_t row) {
    for (std::size_t j = 0; j < d; ++j) centers(c, j) = x(row, j);
  };

  // k-means++ seeding
  std::vector<char> chosen(n, 0);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  set_center(0, first);
  chosen[first] = 1;
  for (std::size_t c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], sq_dist(centers.row(c - 1), x.row(i)));
      total += closest[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (closest[i] <= 0.0) continue;
        pick = i;
        target -= closest[i];
        if (target < 0.0) break;
      }
    } else {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free[rng.below(free.size())];
    }
    set_center(c, pick);
    chosen[pick] = 1;
  }

  // Lloyd iterations
  std::vector<std::size_t> assign(n, clusters);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < clusters; ++c) {
        const double dd = sq_dist(centers.row(c), x.row(i));
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      dist[i] = best_d;
    }
    if (!changed) break;

    BasicMatrix<double> sums(clusters, d);
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto s = sums.row(assign[i]);
      for (std::size_t j = 0; j < d; ++j) s[j] += x(i, j);
    }
    std::vector<char> used(n, 0);
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!used[i] && (far == n || dist[i] > dist[far])) far = i;
      }
      used[far] = 1;
      dist[far] = 0.0;
      set_center(c, far);
    }
  }
  return matrix_cast<float>(centers);
}

std::vector<double> project_simplex(std::vector<double> v) {
  if (v.empty()) return v;
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    running += sorted[j];
    const double t = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - t > 0.0) theta = t;
  }
  for (auto& e : v) e = std::max(e - theta, 0.0);
  return v;
}

SparseCode sparse_code(std::span<const float> x, const DenseMatrix& anchors, std::size_t support,
                       std::vector<double>* objective_trace) {
  const std::size_t b = anchors.rows();
  expect(support >= 1, ErrorKind::Parameter, "sparse_code: support must be >= 1");
  expect(support <= b, ErrorKind::Parameter,
         "sparse_code: support " + std::to_string(support) + " exceeds anchor count " + std::to_string(b));
  expect(x.size() == anchors.cols(), ErrorKind::Shape, "sparse_code: dimension mismatch");

  // nearest anchors, ties by index
  std::vector<std::pair<double, std::size_t>> keyed(b);
  for (std::size_t i = 0; i < b; ++i) keyed[i] = {squared_distance(x, anchors.row(i)), i};
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(support), keyed.end());
  std::vector<std::size_t> sup(support);
  for (std::size_t i = 0; i < support; ++i) sup[i] = keyed[i].second;

  std::vector<double> gram(support * support), lin(support);
  for (std::size_t p = 0; p < support; ++p) {
    lin[p] = dot(anchors.row(sup[p]), x);
    for (std::size_t q = 0; q < support; ++q) gram[p * support + q] = dot(anchors.row(sup[p]), anchors.row(sup[q]));
  }
  double lipschitz = 0.0;
  for (std::size_t p = 0; p < support; ++p) {
    double row = 0.0;
    for (std::size_t q = 0; q < support; ++q) row += std::fabs(gram[p * support + q]);
    lipschitz = std::max(lipschitz, row);
  }
  const double xx = dot(x, x);
  auto objective = [&](const std::vector<double>& z) {
    // ||x - U^T z||^2 = z'Gz - 2 b'z + x'x
    double quad = 0.0, lin_term = 0.0;
    for (std::size_t p = 0; p < support; ++p) {
      lin_term += lin[p] * z[p];
      for (std::size_t q = 0; q < support; ++q) quad += z[p] * gram[p * support + q] * z[q];
    }
    return std::max(0.0, quad - 2.0 * lin_term + xx);
  };

  std::vector<double> z(support, 0.0);
  z[0] = 1.0;
  if (objective_trace) objective_trace->push_back(objective(z));
  if (support > 1 && lipschitz > 0.0) {
    std::vector<double> step(support);
    for (std::size_t it = 0; it < kSimplexIterations; ++it) {
      for (std::size_t p = 0; p < support; ++p) {
        double g = -lin[p];
        for (std::size_t q = 0; q < support; ++q) g += gram[p * support + q] * z[q];
        step[p] = z[p] - g / lipschitz;
      }
      z = project_simplex(step);
      if (objective_trace) objective_trace->push_back(objective(z));
    }
  }

  std::vector<std::pair<std::size_t, double>> entries;
  for (std::size_t p = 0; p < support; ++p) {
    if (z[p] > 0.0) entries.emplace_back(sup[p], z[p]);
  }
  std::sort(entries.begin(), entries.end());
  SparseCode out;
  for (const auto& [i, w] : entries) {
    out.indices.push_back(i);
    out.weights.push_back(w);
  }
  return out;
}

SparseMatrix encode_rows(const DenseMatrix& x, const DenseMatrix& anchors, std::size_t support) {
  std::vector<SparseCode> codes(x.rows());
  parallel_for(x.rows(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) codes[r] = sparse_code(x.row(r), anchors, support);
  });
  std::vector<std::size_t> ptr(x.rows() + 1, 0), idx;
  std::vector<float> val;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t p = 0; p < codes[r].indices.size(); ++p) {
      idx.push_back(codes[r].indices[p]);
      val.push_back(static_cast<float>(codes[r].weights[p]));
    }
    ptr[r + 1] = idx.size();
  }
  return SparseMatrix(x.rows(), anchors.rows(), std::move(ptr), std::move(idx), std::move(val));
}

AnchorModel fit_anchors(const FeatureMatrix& x, std::size_t count, std::size_t support, std::uint64_t seed,
                        std::size_t max_iters) {
  expect(support >= 1 && support <= count, ErrorKind::Parameter,
         "anchor support c must satisfy 1 <= c <= B (c=" + std::to_string(support) + ", B=" + std::to_string(count) + ")");
  AnchorModel m;
  m.anchors = kmeans(x.data, count, seed, max_iters);
  m.codes = encode_rows(x.data, m.anchors, support);
  m.support = support;
  return m;
}

FeatureMatrix augment_features(const FeatureMatrix& x, const SparseMatrix& codes) {
  expect(codes.rows() == x.n(), ErrorKind::Shape,
         "augment_features: code rows " + std::to_string(codes.rows()) + " != feature rows " + std::to_string(x.n()));
  const std::size_t d = x.d(), b = codes.cols();
  DenseMatrix out(x.n(), d + b);
  for (std::size_t r = 0; r < x.n(); ++r) {
    std::copy_n(x.data.row(r).data(), d, out.row(r).data());
    const auto cols = codes.row_cols(r);
    const auto vals = codes.row_values(r);
    for (std::size_t p = 0; p < cols.size(); ++p) out(r, d + cols[p]) = vals[p];
  }
  return FeatureMatrix{std::move(out), x.ids, x.labels};
}

void save_anchors(const AnchorModel& m, const std::filesystem::path& anchors_path,
                  const std::filesystem::path& codes_path, const std::string& config_echo) {
  FeatureMatrix u;
  u.data = m.anchors;
  for (std::size_t i = 0; i < m.count(); ++i) u.ids.push_back("anchor_" + std::to_string(i));
  write_fmat(u, anchors_path);
  Config meta;
  meta.set("kind", "anchor_codes");
  meta.set("support", std::to_string(m.support));
  std::string text = meta.serialize();
  if (!config_echo.empty()) text += "[config]\n" + config_echo;
  write_csrg(m.codes, codes_path, text);
}

AnchorModel load_anchors(const std::filesystem::path& anchors_path, const std::filesystem::path& codes_path) {
  AnchorModel m;
  m.anchors = read_fmat(anchors_path).data;
  auto file = read_csrg(codes_path);
  const auto meta = Config::parse(file.meta.substr(0, file.meta.find("[config]")));
  m.support = meta.get_size_or("support", kDefaultSupport);
  expect(file.matrix.cols() == m.anchors.rows(), ErrorKind::Data,
         "anchor codes have " + std::to_string(file.matrix.cols()) + " columns but " +
             std::to_string(m.anchors.rows()) + " anchors were loaded");
  m.codes = std::move(file.matrix);
  return m;
}

}  // namespace gradnet
