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

/* C interface to the gradnet retrieval library.
 *
 * Every fallible call returns a gn_status; on failure gn_last_error() holds
 * a message for the calling thread. Objects are opaque handles released with
 * the matching *_free function (NULL is accepted). Strings returned through
 * const char** stay valid until the owning handle is freed. */

#ifndef GRADNET_H
#define GRADNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GN_API __declspec(dllexport)
#else
#define GN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gn_status {
  GN_OK = 0,
  GN_ERR_PARAMETER = 2, /* invalid argument or configuration */
  GN_ERR_DATA = 3,      /* malformed input, I/O, shape or sampling failure */
  GN_ERR_NUMERICAL = 4, /* non-finite values or solver breakdown */
  GN_ERR_INTERNAL = 5
} gn_status;

typedef struct gn_features gn_features;
typedef struct gn_graph gn_graph;
typedef struct gn_anchors gn_anchors;
typedef struct gn_model gn_model;
typedef struct gn_rankings gn_rankings;

GN_API const char* gn_last_error(void);
GN_API const char* gn_version(void);
/* Kernel thread count; 1 gives bit-reproducible results. */
GN_API gn_status gn_set_threads(int threads);

/* ---- configuration ----------------------------------------------------- */
/* Flat key=value document ('#' comments, optional quotes, [sections] ignored). */
typedef struct gn_config gn_config;
GN_API gn_status gn_config_parse(const char* text, gn_config** out);
GN_API gn_status gn_config_load(const char* path, gn_config** out);
GN_API gn_status gn_config_set(gn_config* c, const char* key, const char* value);
/* *value is NULL when the key is absent; valid until the next get on c. */
GN_API gn_status gn_config_get(const gn_config* c, const char* key, const char** value);
/* Sorted "key=value" lines. */
GN_API gn_status gn_config_text(const gn_config* c, const char** text);
GN_API void gn_config_free(gn_config* c);

/* ---- features ---------------------------------------------------------- */
GN_API gn_status gn_features_load(const char* path, gn_features** out);
GN_API gn_status gn_features_save(const gn_features* f, const char* path);
/* labels may be NULL; ids are "0".."n-1". */
GN_API gn_status gn_features_create(const float* data, size_t n, size_t d, const int32_t* labels, gn_features** out);
GN_API gn_status gn_features_shape(const gn_features* f, size_t* n, size_t* d);
GN_API gn_status gn_features_data(const gn_features* f, const float** data);
GN_API gn_status gn_features_id(const gn_features* f, size_t row, const char** id);
/* Returns GN_ERR_DATA when the matrix has no labels. */
GN_API gn_status gn_features_labels(const gn_features* f, const int32_t** labels);
GN_API void gn_features_free(gn_features* f);

/* Four-letter 2-D point cloud, 4 * per_letter rows, labels 0..3. */
GN_API gn_status gn_toy_generate(size_t per_letter, double noise, uint64_t seed, gn_features** out);
/* Face directory s1..s40 with 1.pgm..10.pgm each. */
GN_API gn_status gn_orl_load(const char* dir, gn_features** out);

/* ---- graph ------------------------------------------------------------- */
/* metric: "inv_euclidean", "cosine" or "gaussian_euclidean" (uses sigma). */
GN_API gn_status gn_graph_build(const gn_features* f, size_t k, const char* metric, double sigma, gn_graph** out);
GN_API gn_status gn_graph_load(const char* path, gn_graph** out);
/* config_echo may be NULL. */
GN_API gn_status gn_graph_save(const gn_graph* g, const char* path, const char* config_echo);
GN_API gn_status gn_graph_info(const gn_graph* g, size_t* nodes, size_t* edges);
GN_API void gn_graph_free(gn_graph* g);

/* ---- anchors ----------------------------------------------------------- */
GN_API gn_status gn_anchors_fit(const gn_features* f, size_t count, size_t support, uint64_t seed, gn_anchors** out);
GN_API gn_status gn_anchors_load(const char* anchors_path, const char* codes_path, gn_anchors** out);
GN_API gn_status gn_anchors_save(const gn_anchors* a, const char* anchors_path, const char* codes_path,
                                 const char* config_echo);
/* [X | Z] using the stored codes; row counts must match. */
GN_API gn_status gn_anchors_augment(const gn_anchors* a, const gn_features* f, gn_features** out);
GN_API void gn_anchors_free(gn_anchors* a);

/* ---- classic diffusion ------------------------------------------------- */
/* mode: "iterate", "closed" or "tpg". One ranking per query row, query
 * excluded. ids (may be NULL) supplies instance ids; iterations bounds the
 * iterate mode and is T for tpg. */
GN_API gn_status gn_diffuse(const gn_graph* g, const size_t* queries, size_t query_count, double alpha,
                            const char* mode, size_t iterations, const gn_features* ids, gn_rankings** out);
/* Diffused affinity after T tensor-product iterations, written as .csrg. */
GN_API gn_status gn_tpg_save(const gn_graph* g, size_t iterations, const char* path);

/* ---- model ------------------------------------------------------------- */
typedef void (*gn_log_fn)(const char* json_line, void* user);

typedef struct gn_train_options {
  const char* config;          /* key=value text, may be NULL */
  const char* resume_path;     /* checkpoint to continue from, may be NULL */
  const char* checkpoint_path; /* periodic / abort dumps, may be NULL */
  gn_log_fn log;               /* one JSON record per step, may be NULL */
  void* log_user;
} gn_train_options;

/* x_aug rows must match graph nodes. */
GN_API gn_status gn_train(const gn_features* x_aug, const gn_graph* g, const gn_train_options* opts,
                          gn_model** out);
GN_API gn_status gn_model_load(const char* path, gn_model** out);
GN_API gn_status gn_model_save(const gn_model* m, const char* path);
/* Effective configuration echoed in the checkpoint. */
GN_API gn_status gn_model_config(const gn_model* m, const char** config);
GN_API gn_status gn_model_dims(const gn_model* m, const size_t** dims, size_t* count);
/* Evaluation-mode concatenated features H0 | ... | HL, ids copied from x_aug. */
GN_API gn_status gn_embed(const gn_model* m, const gn_features* x_aug, const gn_graph* g, gn_features** out);
GN_API void gn_model_free(gn_model* m);

/* ---- retrieval --------------------------------------------------------- */
/* Each row of `queries` (original descriptor space) is expanded over its
 * qfe_k nearest rows of `database` and ranked against `embeddings`. Query ids
 * come from the query matrix. */
GN_API gn_status gn_query(const gn_features* embeddings, const gn_features* database, const gn_features* queries,
                          size_t qfe_k, size_t rounds, const char* metric, double sigma, size_t topk,
                          gn_rankings** out);
/* Rank every row of `embeddings` against the others (self excluded). */
GN_API gn_status gn_rank_all(const gn_features* embeddings, size_t topk, gn_rankings** out);

GN_API gn_status gn_rankings_load(const char* path, gn_rankings** out);
/* .csv extension selects CSV, anything else JSON lines. */
GN_API gn_status gn_rankings_save(const gn_rankings* r, const char* path);
GN_API gn_status gn_rankings_count(const gn_rankings* r, size_t* queries);
GN_API gn_status gn_rankings_query(const gn_rankings* r, size_t q, const char** query_id, size_t* length);
GN_API gn_status gn_rankings_item(const gn_rankings* r, size_t q, size_t rank, const char** id, double* score);
GN_API void gn_rankings_free(gn_rankings* r);

/* ---- evaluation -------------------------------------------------------- */
/* metric: "map" or "bullseye" (window K). truth_path is a .json ground truth
 * or a labelled .fmat. Result is x100. report_path (may be NULL) receives a
 * JSON report echoing config_echo. */
GN_API gn_status gn_evaluate(const gn_rankings* r, const char* truth_path, const char* metric, size_t window,
                             const char* report_path, const char* config_echo, double* result);

#ifdef __cplusplus
}
#endif

#endif /* GRADNET_H */
