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

#include <gradnet.h>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() / ("gradnet_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string path_str(const std::filesystem::path& p) { return p.string(); }

void count_lines(const char* line, void* user) {
  auto* n = static_cast<int*>(user);
  if (std::strstr(line, "\"loss\"") != nullptr) ++*n;
}

}  // namespace

TEST_CASE("version and null handling") {
  REQUIRE(gn_version() != nullptr);
  CHECK(std::strlen(gn_version()) > 0);
  gn_features* f = nullptr;
  CHECK(gn_features_load(nullptr, &f) == GN_ERR_PARAMETER);
  CHECK(std::strlen(gn_last_error()) > 0);
  CHECK(gn_features_load("x.fmat", nullptr) == GN_ERR_PARAMETER);
  CHECK(gn_set_threads(0) == GN_ERR_PARAMETER);
  CHECK(gn_set_threads(1) == GN_OK);
  gn_features_free(nullptr);
  gn_graph_free(nullptr);
  gn_model_free(nullptr);
  gn_rankings_free(nullptr);
  gn_anchors_free(nullptr);
  gn_config_free(nullptr);
}

TEST_CASE("missing and malformed files map to data errors") {
  TempDir dir("capi_bad");
  gn_features* f = nullptr;
  const auto missing = path_str(dir / "none.fmat");
  CHECK(gn_features_load(missing.c_str(), &f) == GN_ERR_DATA);
  CHECK(std::string(gn_last_error()).find("none.fmat") != std::string::npos);
  CHECK(f == nullptr);
  const auto junk = dir / "junk.fmat";
  std::ofstream(junk) << "not a matrix";
  CHECK(gn_features_load(path_str(junk).c_str(), &f) == GN_ERR_DATA);
}

TEST_CASE("feature handles") {
  const float data[6] = {0, 0, 1, 0, 5, 5};
  const int32_t labels[3] = {1, 1, 2};
  gn_features* f = nullptr;
  REQUIRE(gn_features_create(data, 3, 2, labels, &f) == GN_OK);
  size_t n = 0, d = 0;
  CHECK(gn_features_shape(f, &n, &d) == GN_OK);
  CHECK(n == 3);
  CHECK(d == 2);
  const char* id = nullptr;
  CHECK(gn_features_id(f, 2, &id) == GN_OK);
  CHECK(std::string(id) == "2");
  CHECK(gn_features_id(f, 3, &id) == GN_ERR_PARAMETER);
  const int32_t* l = nullptr;
  CHECK(gn_features_labels(f, &l) == GN_OK);
  CHECK(l[2] == 2);
  const float bad[2] = {NAN, 0};
  gn_features* g = nullptr;
  CHECK(gn_features_create(bad, 1, 2, nullptr, &g) == GN_ERR_DATA);
  gn_features* nolab = nullptr;
  REQUIRE(gn_features_create(data, 3, 2, nullptr, &nolab) == GN_OK);
  CHECK(gn_features_labels(nolab, &l) == GN_ERR_DATA);
  gn_features_free(nolab);
  gn_features_free(f);
}

TEST_CASE("config handles") {
  gn_config* c = nullptr;
  REQUIRE(gn_config_parse("epochs=3\n# note\nseed = 4\n", &c) == GN_OK);
  const char* v = nullptr;
  CHECK(gn_config_get(c, "seed", &v) == GN_OK);
  CHECK(std::string(v) == "4");
  CHECK(gn_config_get(c, "absent", &v) == GN_OK);
  CHECK(v == nullptr);
  CHECK(gn_config_set(c, "dims", "4,2") == GN_OK);
  const char* text = nullptr;
  CHECK(gn_config_text(c, &text) == GN_OK);
  CHECK(std::string(text) == "dims=4,2\nepochs=3\nseed=4\n");
  gn_config_free(c);
  CHECK(gn_config_parse("no equals sign", &c) == GN_ERR_PARAMETER);
}

TEST_CASE("end to end through the C interface") {
  TempDir dir("capi_e2e");
  gn_features* x = nullptr;
  REQUIRE(gn_toy_generate(20, 0.001, 3, &x) == GN_OK);
  size_t n = 0, d = 0;
  gn_features_shape(x, &n, &d);
  CHECK(n == 80);
  CHECK(d == 2);

  gn_graph* g = nullptr;
  CHECK(gn_graph_build(x, 200, "inv_euclidean", 1.0, &g) == GN_ERR_PARAMETER);
  CHECK(gn_graph_build(x, 5, "manhattan", 1.0, &g) == GN_ERR_PARAMETER);
  REQUIRE(gn_graph_build(x, 5, "inv_euclidean", 1.0, &g) == GN_OK);
  size_t nodes = 0, edges = 0;
  gn_graph_info(g, &nodes, &edges);
  CHECK(nodes == 80);
  CHECK(edges > 0);

  gn_anchors* a = nullptr;
  CHECK(gn_anchors_fit(x, 10, 11, 1, &a) == GN_ERR_PARAMETER);
  REQUIRE(gn_anchors_fit(x, 10, 3, 1, &a) == GN_OK);
  gn_features* xa = nullptr;
  REQUIRE(gn_anchors_augment(a, x, &xa) == GN_OK);
  gn_features_shape(xa, &n, &d);
  CHECK(d == 12);

  const size_t q[1] = {0};
  gn_rankings* diff = nullptr;
  REQUIRE(gn_diffuse(g, q, 1, 0.9, "closed", 0, x, &diff) == GN_OK);
  size_t len = 0;
  const char* qid = nullptr;
  gn_rankings_query(diff, 0, &qid, &len);
  CHECK(len == 79);
  CHECK(gn_diffuse(g, q, 1, 1.5, "closed", 0, x, &diff) == GN_ERR_PARAMETER);
  gn_rankings_free(diff);

  int steps = 0;
  gn_train_options opts{};
  opts.config = "epochs=2\ndims=8,4\nbatch=4\n";
  opts.log = count_lines;
  opts.log_user = &steps;
  gn_model* m = nullptr;
  REQUIRE(gn_train(xa, g, &opts, &m) == GN_OK);
  CHECK(steps == 8);  // ceil(80 / (6 * 4)) per epoch
  const size_t* dims = nullptr;
  size_t depth = 0;
  gn_model_dims(m, &dims, &depth);
  REQUIRE(depth == 3);
  CHECK(dims[0] == 12);
  CHECK(dims[2] == 4);

  gn_train_options bad{};
  bad.config = "dims=8,4\nlocal_loss=hinge\n";
  gn_model* none = nullptr;
  CHECK(gn_train(xa, g, &bad, &none) == GN_ERR_PARAMETER);
  CHECK(gn_train(x, g, &opts, &none) == GN_OK);  // plain features are a valid input too
  gn_model_free(none);

  const auto ck = path_str(dir / "m.ckpt");
  REQUIRE(gn_model_save(m, ck.c_str()) == GN_OK);
  gn_model* back = nullptr;
  REQUIRE(gn_model_load(ck.c_str(), &back) == GN_OK);
  gn_features* e1 = nullptr;
  gn_features* e2 = nullptr;
  REQUIRE(gn_embed(m, xa, g, &e1) == GN_OK);
  REQUIRE(gn_embed(back, xa, g, &e2) == GN_OK);
  const float *d1 = nullptr, *d2 = nullptr;
  gn_features_data(e1, &d1);
  gn_features_data(e2, &d2);
  gn_features_shape(e1, &n, &d);
  CHECK(d == 24);
  CHECK(std::memcmp(d1, d2, n * d * sizeof(float)) == 0);
  CHECK(gn_embed(m, x, g, &e2) == GN_ERR_DATA);

  gn_rankings* r = nullptr;
  REQUIRE(gn_rank_all(e1, 10, &r) == GN_OK);
  size_t count = 0;
  gn_rankings_count(r, &count);
  CHECK(count == 80);
  const char* item = nullptr;
  double score = 0;
  CHECK(gn_rankings_item(r, 0, 0, &item, &score) == GN_OK);
  CHECK(gn_rankings_item(r, 0, 10, &item, &score) == GN_ERR_PARAMETER);

  const auto truth = path_str(dir / "truth.fmat");
  REQUIRE(gn_features_save(x, truth.c_str()) == GN_OK);
  double map = -1;
  REQUIRE(gn_evaluate(r, truth.c_str(), "map", 0, nullptr, nullptr, &map) == GN_OK);
  CHECK(map >= 0.0);
  CHECK(map <= 100.0);
  CHECK(gn_evaluate(r, truth.c_str(), "ndcg", 0, nullptr, nullptr, &map) == GN_ERR_PARAMETER);

  const auto rpath = path_str(dir / "r.csv");
  REQUIRE(gn_rankings_save(r, rpath.c_str()) == GN_OK);
  gn_rankings* r2 = nullptr;
  REQUIRE(gn_rankings_load(rpath.c_str(), &r2) == GN_OK);
  gn_rankings_count(r2, &count);
  CHECK(count == 80);

  gn_rankings_free(r2);
  gn_rankings_free(r);
  gn_features_free(e2);
  gn_features_free(e1);
  gn_model_free(back);
  gn_model_free(m);
  gn_features_free(xa);
  gn_anchors_free(a);
  gn_graph_free(g);
  gn_features_free(x);
}
