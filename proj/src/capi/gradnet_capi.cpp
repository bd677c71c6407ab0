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

#include "gradnet.h"

#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "anchors.hpp"
#include "diffusion.hpp"
#include "graph.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "retrieval.hpp"
#include "training.hpp"

using namespace gradnet;

struct gn_features {
  FeatureMatrix m;
};
struct gn_graph {
  AffinityGraph g;
};
struct gn_anchors {
  AnchorModel a;
};
struct gn_model {
  CheckpointData ckpt;
  ModelParams params;
};
struct gn_rankings {
  std::vector<Ranking> r;
};
struct gn_config {
  Config c;
  std::string text;
  std::string scratch;
};

namespace {

thread_local std::string g_last_error;

gn_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::Parameter:
    case ErrorKind::Validation:
      return GN_ERR_PARAMETER;
    case ErrorKind::Numerical:
      return GN_ERR_NUMERICAL;
    default:
      return GN_ERR_DATA;
  }
}

template <class F>
gn_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return GN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GN_ERR_INTERNAL;
  }
}

template <class T>
const T& deref(const T* p, const char* what) {
  if (!p) fail(ErrorKind::Parameter, std::string(what) + " handle is NULL");
  return *p;
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorKind::Parameter, std::string(what) + " is NULL");
}

std::string str_or_empty(const char* s) { return s ? std::string(s) : std::string(); }

std::uint64_t feature_hash(const DenseMatrix& x) {
  const auto v = x.values();
  return content_hash({reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(float)});
}

std::string item_id(const gn_features* ids, std::size_t i) {
  return ids ? ids->m.ids.at(i) : std::to_string(i);
}

}  // namespace

extern "C" {

const char* gn_last_error(void) { return g_last_error.c_str(); }

const char* gn_version(void) { return "1.0.0"; }

gn_status gn_set_threads(int threads) {
  return guarded([&] {
    expect(threads >= 1, ErrorKind::Parameter, "thread count must be >= 1");
    set_num_threads(threads);
  });
}

// ---- configuration --------------------------------------------------------

gn_status gn_config_parse(const char* text, gn_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gn_config{Config::parse(str_or_empty(text)), {}, {}};
  });
}

gn_status gn_config_load(const char* path, gn_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gn_config{Config::parse_file(path), {}, {}};
  });
}

gn_status gn_config_set(gn_config* c, const char* key, const char* value) {
  return guarded([&] {
    need(c, "config handle");
    need(key, "key");
    need(value, "value");
    expect(*key != '\0', ErrorKind::Parameter, "config key is empty");
    c->c.set(key, value);
  });
}

gn_status gn_config_get(const gn_config* c, const char* key, const char** value) {
  return guarded([&] {
    need(key, "key");
    need(value, "value");
    auto& cfg = const_cast<gn_config&>(deref(c, "config"));
    const auto v = cfg.c.get(key);
    if (!v) {
      *value = nullptr;
      return;
    }
    cfg.scratch = *v;
    *value = cfg.scratch.c_str();
  });
}

gn_status gn_config_text(const gn_config* c, const char** text) {
  return guarded([&] {
    need(text, "text");
    auto& cfg = const_cast<gn_config&>(deref(c, "config"));
    cfg.text = cfg.c.serialize();
    *text = cfg.text.c_str();
  });
}

void gn_config_free(gn_config* c) { delete c; }

// ---- features -------------------------------------------------------------

gn_status gn_features_load(const char* path, gn_features** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gn_features{read_fmat(path)};
  });
}

gn_status gn_features_save(const gn_features* f, const char* path) {
  return guarded([&] {
    need(path, "path");
    write_fmat(deref(f, "features").m, path);
  });
}

gn_status gn_features_create(const float* data, size_t n, size_t d, const int32_t* labels, gn_features** out) {
  return guarded([&] {
    need(out, "out");
    expect(data || n * d == 0, ErrorKind::Parameter, "data is NULL");
    DenseMatrix m(n, d, std::vector<float>(data, data + n * d));
    std::optional<std::vector<std::int32_t>> lab;
    if (labels) lab = std::vector<std::int32_t>(labels, labels + n);
    auto f = FeatureMatrix::from_matrix(std::move(m), std::move(lab));
    f.validate();
    *out = new gn_features{std::move(f)};
  });
}

gn_status gn_features_shape(const gn_features* f, size_t* n, size_t* d) {
  return guarded([&] {
    const auto& m = deref(f, "features").m;
    if (n) *n = m.n();
    if (d) *d = m.d();
  });
}

gn_status gn_features_data(const gn_features* f, const float** data) {
  return guarded([&] {
    need(data, "data");
    *data = deref(f, "features").m.data.data();
  });
}

gn_status gn_features_id(const gn_features* f, size_t row, const char** id) {
  return guarded([&] {
    need(id, "id");
    const auto& m = deref(f, "features").m;
    expect(row < m.n(), ErrorKind::Parameter, "row " + std::to_string(row) + " out of range");
    *id = m.ids[row].c_str();
  });
}

gn_status gn_features_labels(const gn_features* f, const int32_t** labels) {
  return guarded([&] {
    need(labels, "labels");
    const auto& m = deref(f, "features").m;
    expect(m.labels.has_value(), ErrorKind::Data, "feature matrix has no labels");
    *labels = m.labels->data();
  });
}

void gn_features_free(gn_features* f) { delete f; }

gn_status gn_toy_generate(size_t per_letter, double noise, uint64_t seed, gn_features** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gn_features{generate_toy(per_letter, noise, seed)};
  });
}

gn_status gn_orl_load(const char* dir, gn_features** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new gn_features{load_orl(dir)};
  });
}

// ---- graph ----------------------------------------------------------------

gn_status gn_graph_build(const gn_features* f, size_t k, const char* metric, double sigma, gn_graph** out) {
  return guarded([&] {
    need(out, "out");
    const auto m = SimilarityMetric::parse(metric ? metric : "inv_euclidean", sigma);
    *out = new gn_graph{build_mutual_knn(deref(f, "features").m, k, m)};
  });
}

gn_status gn_graph_load(const char* path, gn_graph** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gn_graph{load_graph(path)};
  });
}

gn_status gn_graph_save(const gn_graph* g, const char* path, const char* config_echo) {
  return guarded([&] {
    need(path, "path");
    save_graph(deref(g, "graph").g, path, str_or_empty(config_echo));
  });
}

gn_status gn_graph_info(const gn_graph* g, size_t* nodes, size_t* edges) {
  return guarded([&] {
    const auto& gr = deref(g, "graph").g;
    if (nodes) *nodes = gr.nodes();
    if (edges) *edges = gr.affinity.nnz() / 2;
  });
}

void gn_graph_free(gn_graph* g) { delete g; }

// ---- anchors --------------------------------------------------------------

gn_status gn_anchors_fit(const gn_features* f, size_t count, size_t support, uint64_t seed, gn_anchors** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gn_anchors{fit_anchors(deref(f, "features").m, count, support, seed)};
  });
}

gn_status gn_anchors_load(const char* anchors_path, const char* codes_path, gn_anchors** out) {
  return guarded([&] {
    need(anchors_path, "anchors_path");
    need(codes_path, "codes_path");
    need(out, "out");
    *out = new gn_anchors{load_anchors(anchors_path, codes_path)};
  });
}

gn_status gn_anchors_save(const gn_anchors* a, const char* anchors_path, const char* codes_path,
                          const char* config_echo) {
  return guarded([&] {
    need(anchors_path, "anchors_path");
    need(codes_path, "codes_path");
    save_anchors(deref(a, "anchors").a, anchors_path, codes_path, str_or_empty(config_echo));
  });
}

gn_status gn_anchors_augment(const gn_anchors* a, const gn_features* f, gn_features** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gn_features{augment_features(deref(f, "features").m, deref(a, "anchors").a.codes)};
  });
}

void gn_anchors_free(gn_anchors* a) { delete a; }

// ---- diffusion ------------------------------------------------------------

gn_status gn_diffuse(const gn_graph* g, const size_t* queries, size_t query_count, double alpha, const char* mode,
                     size_t iterations, const gn_features* ids, gn_rankings** out) {
  return guarded([&] {
    need(out, "out");
    expect(queries || query_count == 0, ErrorKind::Parameter, "queries is NULL");
    const auto& gr = deref(g, "graph").g;
    const std::string m = mode ? mode : "closed";
    expect(m == "iterate" || m == "closed" || m == "tpg", ErrorKind::Parameter,
           "diffusion mode must be iterate, closed or tpg, got '" + m + "'");
    expect(!ids || ids->m.n() == gr.nodes(), ErrorKind::Shape, "id source row count differs from graph nodes");
    const std::size_t n = gr.nodes();
    BasicMatrix<double> tpg;
    if (m == "tpg") tpg = tpg_iterate(gr.transition, gr.affinity.to_dense<double>(), iterations);
    auto result = std::make_unique<gn_rankings>();
    for (std::size_t qi = 0; qi < query_count; ++qi) {
      const std::size_t q = queries[qi];
      expect(q < n, ErrorKind::Parameter, "query index " + std::to_string(q) + " out of range");
      const std::size_t qpos[] = {q};
      std::vector<double> f;
      if (m == "tpg") {
        const auto row = tpg.row(q);
        f.assign(row.begin(), row.end());
      } else {
        const auto f0 = initial_state(n, qpos);
        f = m == "closed" ? random_walk_closed(gr.transition, f0, alpha)
                          : random_walk_iterate(gr.transition, f0, alpha, iterations ? iterations : 100000, 1e-12).f;
      }
      auto r = rank_from_state(f, qpos);
      r.query_id = item_id(ids, q);
      for (auto& item : r.items) item.id = item_id(ids, item.index);
      result->r.push_back(std::move(r));
    }
    *out = result.release();
  });
}

gn_status gn_tpg_save(const gn_graph* g, size_t iterations, const char* path) {
  return guarded([&] {
    need(path, "path");
    const auto& gr = deref(g, "graph").g;
    const auto a = tpg_iterate(gr.transition, gr.affinity.to_dense<double>(), iterations);
    Config meta;
    meta.set("kind", "tpg_affinity");
    meta.set("iterations", std::to_string(iterations));
    write_csrg(SparseMatrix::from_dense(a), path, meta.serialize());
  });
}

// ---- model ----------------------------------------------------------------

gn_status gn_train(const gn_features* x_aug, const gn_graph* g, const gn_train_options* opts, gn_model** out) {
  return guarded([&] {
    need(out, "out");
    const auto& x = deref(x_aug, "features").m;
    const auto& gr = deref(g, "graph").g;
    const gn_train_options defaults{};
    const auto& o = opts ? *opts : defaults;
    auto user = Config::parse(str_or_empty(o.config));
    const auto cfg = TrainConfig::from_config(user);
    user.merge(cfg.to_config());
    const std::string echo = user.serialize();
    const auto hash = feature_hash(x.data);

    TrainState state;
    if (o.resume_path) {
      state = restore(read_ckpt(o.resume_path));
      expect(state.params.dims.front() == x.d(), ErrorKind::Data,
             std::string(o.resume_path) + ": checkpoint input width " + std::to_string(state.params.dims.front()) +
                 " != feature width " + std::to_string(x.d()));
      std::vector<std::size_t> hidden(state.params.dims.begin() + 1, state.params.dims.end());
      expect(hidden == cfg.hidden_dims, ErrorKind::Parameter, "resume: dims differ from the checkpoint");
      state.params.dropout = cfg.dropout;
      state.params.leaky_slope = cfg.leaky_slope;
    } else {
      state = initial_train_state(x.d(), cfg);
    }

    auto dump = [&](const TrainState& s, const std::string& path) {
      auto c = to_checkpoint(s.params, echo, hash);
      c.state = snapshot(s);
      write_ckpt(c, path);
    };
    TrainHooks hooks;
    if (o.log) {
      hooks.on_step = [&](const TrainLogRecord& r) {
        nlohmann::ordered_json j{{"epoch", r.epoch}, {"step", r.step},   {"loss", r.loss},
                                 {"lr", r.lr},       {"nodes", r.nodes}, {"clamped_global", r.clamped_global}};
        o.log(j.dump().c_str(), o.log_user);
      };
    }
    if (o.checkpoint_path) {
      const std::string path = o.checkpoint_path;
      if (cfg.checkpoint_every > 0) {
        hooks.on_epoch = [&, path](const TrainState& s) {
          if (s.epoch % cfg.checkpoint_every == 0) dump(s, path);
        };
      }
      hooks.on_abort = [&, path](const TrainState& s) { dump(s, path + ".abort"); };
    }
    train(x.data, gr, cfg, state, hooks);

    auto model = std::make_unique<gn_model>();
    model->ckpt = to_checkpoint(state.params, echo, hash);
    model->ckpt.state = snapshot(state);
    model->params = std::move(state.params);
    *out = model.release();
  });
}

gn_status gn_model_load(const char* path, gn_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto m = std::make_unique<gn_model>();
    m->ckpt = read_ckpt(path);
    m->params = params_from_checkpoint(m->ckpt);
    *out = m.release();
  });
}

gn_status gn_model_save(const gn_model* m, const char* path) {
  return guarded([&] {
    need(path, "path");
    write_ckpt(deref(m, "model").ckpt, path);
  });
}

gn_status gn_model_config(const gn_model* m, const char** config) {
  return guarded([&] {
    need(config, "config");
    *config = deref(m, "model").ckpt.config.c_str();
  });
}

gn_status gn_model_dims(const gn_model* m, const size_t** dims, size_t* count) {
  return guarded([&] {
    const auto& d = deref(m, "model").params.dims;
    if (dims) *dims = d.data();
    if (count) *count = d.size();
  });
}

gn_status gn_embed(const gn_model* m, const gn_features* x_aug, const gn_graph* g, gn_features** out) {
  return guarded([&] {
    need(out, "out");
    const auto& x = deref(x_aug, "features").m;
    const auto& gr = deref(g, "graph").g;
    expect(x.n() == gr.nodes(), ErrorKind::Shape,
           "embed: " + std::to_string(x.n()) + " feature rows but graph has " + std::to_string(gr.nodes()) + " nodes");
    FeatureMatrix h{embed(deref(m, "model").params, x.data, gr.transition), x.ids, x.labels};
    *out = new gn_features{std::move(h)};
  });
}

void gn_model_free(gn_model* m) { delete m; }

// ---- retrieval ------------------------------------------------------------

gn_status gn_query(const gn_features* embeddings, const gn_features* database, const gn_features* queries,
                   size_t qfe_k, size_t rounds, const char* metric, double sigma, size_t topk, gn_rankings** out) {
  return guarded([&] {
    need(out, "out");
    const auto& e = deref(embeddings, "embeddings").m;
    const auto& db = deref(database, "database").m;
    const auto& q = deref(queries, "queries").m;
    const auto sm = SimilarityMetric::parse(metric ? metric : "inv_euclidean", sigma);
    expect(e.n() == db.n(), ErrorKind::Shape, "embeddings and database row counts differ");
    auto result = std::make_unique<gn_rankings>();
    for (std::size_t r = 0; r < q.n(); ++r) {
      const auto hq = qfe_iterate(q.data.row(r), db.data, e.data, qfe_k, sm, rounds);
      result->r.push_back(retrieve(hq, e.data, topk, e.ids, q.ids[r]));
    }
    *out = result.release();
  });
}

gn_status gn_rank_all(const gn_features* embeddings, size_t topk, gn_rankings** out) {
  return guarded([&] {
    need(out, "out");
    const auto& e = deref(embeddings, "embeddings").m;
    auto result = std::make_unique<gn_rankings>();
    for (std::size_t r = 0; r < e.n(); ++r) result->r.push_back(retrieve(e.data.row(r), e.data, topk, e.ids, e.ids[r], r));
    *out = result.release();
  });
}

gn_status gn_rankings_load(const char* path, gn_rankings** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gn_rankings{read_rankings(path)};
  });
}

gn_status gn_rankings_save(const gn_rankings* r, const char* path) {
  return guarded([&] {
    need(path, "path");
    write_rankings(deref(r, "rankings").r, path);
  });
}

gn_status gn_rankings_count(const gn_rankings* r, size_t* queries) {
  return guarded([&] {
    need(queries, "queries");
    *queries = deref(r, "rankings").r.size();
  });
}

gn_status gn_rankings_query(const gn_rankings* r, size_t q, const char** query_id, size_t* length) {
  return guarded([&] {
    const auto& rs = deref(r, "rankings").r;
    expect(q < rs.size(), ErrorKind::Parameter, "query " + std::to_string(q) + " out of range");
    if (query_id) *query_id = rs[q].query_id.c_str();
    if (length) *length = rs[q].items.size();
  });
}

gn_status gn_rankings_item(const gn_rankings* r, size_t q, size_t rank, const char** id, double* score) {
  return guarded([&] {
    const auto& rs = deref(r, "rankings").r;
    expect(q < rs.size() && rank < rs[q].items.size(), ErrorKind::Parameter, "ranking position out of range");
    if (id) *id = rs[q].items[rank].id.c_str();
    if (score) *score = rs[q].items[rank].score;
  });
}

void gn_rankings_free(gn_rankings* r) { delete r; }

// ---- evaluation -----------------------------------------------------------

gn_status gn_evaluate(const gn_rankings* r, const char* truth_path, const char* metric, size_t window,
                      const char* report_path, const char* config_echo, double* result) {
  return guarded([&] {
    need(truth_path, "truth_path");
    const auto& rs = deref(r, "rankings").r;
    const std::string m = metric ? metric : "map";
    const auto truth = GroundTruth::load(truth_path);
    MetricResult res;
    if (m == "map") {
      res = mean_average_precision(rs, truth);
    } else if (m == "bullseye") {
      expect(!truth.labels.empty(), ErrorKind::Metric, "bullseye needs per-instance labels in the ground truth");
      res = bullseye(rs, truth.labels, window);
    } else {
      fail(ErrorKind::Parameter, "metric must be map or bullseye, got '" + m + "'");
    }
    if (report_path) {
      const auto text = metric_report_json(m, rs, res, str_or_empty(config_echo));
      write_file_bytes(report_path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    }
    if (result) *result = res.aggregate;
  });
}

}  // extern "C"
