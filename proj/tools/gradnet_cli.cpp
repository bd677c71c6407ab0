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

// gradnet command-line driver. Links only the C interface.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradnet.h"

namespace {

// Carries a library status out of a subcommand.
struct Failure {
  gn_status status;
  std::string message;
};

void check(gn_status s, const std::string& context) {
  if (s != GN_OK) throw Failure{s, context + ": " + gn_last_error()};
}

void usage_error(const std::string& message) { throw Failure{GN_ERR_PARAMETER, message}; }

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Features = Handle<gn_features, gn_features_free>;
using Graph = Handle<gn_graph, gn_graph_free>;
using Anchors = Handle<gn_anchors, gn_anchors_free>;
using Model = Handle<gn_model, gn_model_free>;
using Rankings = Handle<gn_rankings, gn_rankings_free>;
using ConfigH = Handle<gn_config, gn_config_free>;

/// Effective settings: --config file first, then every explicitly given flag.
class Settings {
 public:
  void load(const std::string& path) {
    if (path.empty()) {
      check(gn_config_parse("", cfg_.out()), "config");
    } else {
      check(gn_config_load(path.c_str(), cfg_.out()), "config " + path);
    }
  }
  void override_with(const CLI::App& app, std::initializer_list<std::pair<const char*, const char*>> flags) {
    for (const auto& [flag, key] : flags) {
      const auto* opt = app.get_option(flag);
      if (opt->count() > 0) set(key, opt->as<std::string>());
    }
  }
  void set(const std::string& key, const std::string& value) {
    check(gn_config_set(cfg_.get(), key.c_str(), value.c_str()), "config");
  }
  std::string get(const std::string& key, const std::string& fallback = {}) const {
    const char* v = nullptr;
    check(gn_config_get(cfg_.get(), key.c_str(), &v), "config");
    return v ? v : fallback;
  }
  std::string require(const std::string& key) const {
    auto v = get(key);
    if (v.empty()) usage_error("missing required setting '" + key + "' (flag or config key)");
    return v;
  }
  std::size_t size(const std::string& key, std::size_t fallback) const {
    const auto v = get(key);
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const auto n = std::stoull(v, &pos);
      if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      usage_error("setting '" + key + "' must be a non-negative integer, got '" + v + "'");
    }
    return fallback;
  }
  double real(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      usage_error("setting '" + key + "' must be a number, got '" + v + "'");
    }
    return fallback;
  }
  std::string text() const {
    const char* t = nullptr;
    check(gn_config_text(cfg_.get(), &t), "config");
    return t;
  }
  gn_config* handle() const { return cfg_.get(); }

 private:
  ConfigH cfg_;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{GN_ERR_DATA, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void load_features(const std::string& path, Features& f) { check(gn_features_load(path.c_str(), f.out()), path); }

// [X | Z] when a codes file is given, X otherwise.
void load_model_input(const Settings& s, Features& x) {
  Features raw;
  load_features(s.require("features"), raw);
  const auto codes = s.get("codes");
  if (codes.empty()) {
    std::swap(x.p, raw.p);
    return;
  }
  const auto anchors = s.get("anchors", codes.substr(0, codes.rfind(".codes.csrg")) + ".anchors.fmat");
  Anchors a;
  check(gn_anchors_load(anchors.c_str(), codes.c_str(), a.out()), "anchors " + anchors);
  check(gn_anchors_augment(a.get(), raw.get(), x.out()), "augment");
}

std::string stem_path(const std::string& path) {
  const auto dot = path.rfind('.');
  const auto slash = path.rfind('/');
  return dot == std::string::npos || (slash != std::string::npos && dot < slash) ? path : path.substr(0, dot);
}

// Query tokens: instance ids when an id source is given, otherwise row indices.
std::vector<std::size_t> parse_queries(const std::string& path, const gn_features* ids) {
  std::size_t n = 0;
  if (ids) check(gn_features_shape(ids, &n, nullptr), "features");
  std::vector<std::size_t> out;
  std::istringstream in(read_text(path));
  std::string tok;
  while (in >> tok) {
    bool found = false;
    for (std::size_t r = 0; ids && r < n && !found; ++r) {
      const char* id = nullptr;
      check(gn_features_id(ids, r, &id), "features");
      if (tok == id) {
        out.push_back(r);
        found = true;
      }
    }
    if (found) continue;
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Failure{GN_ERR_DATA, path + ": unknown query '" + tok + "'"};
    }
  }
  if (out.empty()) throw Failure{GN_ERR_DATA, path + ": no queries"};
  return out;
}

void log_line(const char* line, void* user) {
  auto* out = static_cast<std::ofstream*>(user);
  if (out && *out) *out << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradnet: graph diffusion retrieval toolkit"};
  app.require_subcommand(1);
  int threads = 1;
  std::string config_path;
  app.add_option("--threads", threads, "Kernel threads (1 = deterministic)")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "key=value settings file; flags override its keys");

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "Generate the four-letter 2-D point cloud");
  gen->add_option("--per-letter", "Points per letter (default 375)");
  gen->add_option("--noise", "Gaussian jitter sigma (default 0.005)");
  gen->add_option("--seed", "PRNG seed (default 0)");
  gen->add_option("--out", "Output .fmat");

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "Build the mutual k-NN affinity graph");
  bg->add_option("--features", "Input .fmat");
  bg->add_option("--k", "Neighbors (default 15)");
  bg->add_option("--metric", "inv_euclidean | cosine | gaussian_euclidean");
  bg->add_option("--sigma", "Gaussian bandwidth (default 1)");
  bg->add_option("--out", "Output .csrg");

  // anchors
  auto* an = app.add_subcommand("anchors", "Fit k-means anchors and simplex sparse codes");
  an->add_option("--features", "Input .fmat");
  an->add_option("--B", "Anchor count (default 100)");
  an->add_option("--c", "Support size (default 5)");
  an->add_option("--seed", "PRNG seed (default 0)");
  an->add_option("--out", "Output prefix; writes <prefix>.anchors.fmat and <prefix>.codes.csrg");

  // diffuse
  auto* df = app.add_subcommand("diffuse", "Classic diffusion re-ranking baselines");
  df->add_option("--graph", "Input .csrg graph");
  df->add_option("--queries", "File of query ids or row indices, whitespace separated");
  df->add_option("--features", "Optional .fmat supplying instance ids");
  df->add_option("--alpha", "Restart weight in (0, 1) (default 0.9)");
  df->add_option("--mode", "iterate | closed | tpg (default closed)");
  df->add_option("--T", "Iteration count: tpg steps (default 30) or iterate cap");
  df->add_option("--matrix-out", "tpg only: write the diffused affinity as .csrg");
  df->add_option("--out", "Output rankings (.csv or .jsonl)");

  // train
  auto* tr = app.add_subcommand("train", "Train the graph diffusion network");
  tr->add_option("--features", "Input .fmat (original descriptors)");
  tr->add_option("--graph", "Input .csrg graph");
  tr->add_option("--codes", "Sparse codes .csrg from `anchors` (omit to train on X only)");
  tr->add_option("--anchors", "Anchor .fmat (default derived from --codes)");
  tr->add_option("--resume", "Checkpoint to continue from");
  tr->add_option("--out", "Output checkpoint");
  tr->add_option("--log", "Per-step JSON-lines log");
  tr->add_option("--epochs", "Epochs (default 300)");
  tr->add_option("--seed", "PRNG seed (default 0)");
  tr->add_option("--dims", "Hidden widths, comma separated (default 1024,256,128)");
  tr->add_option("--batch", "Sextets per step (default 64)");
  tr->add_option("--lr", "Base learning rate");
  tr->add_option("--dropout", "Dropout probability (default 0.3)");
  tr->add_option("--notation", "pow10 | exp reading of the default constants");
  tr->add_option("--checkpoint-every", "Also write --out every E epochs");
  tr->add_option("--node-budget", "Max subgraph nodes per step (0 = unlimited)");
  tr->add_option("--hops", "BFS hops (default 2 * layers)");

  // embed
  auto* em = app.add_subcommand("embed", "Evaluation-mode embeddings for every instance");
  em->add_option("--ckpt", "Checkpoint");
  em->add_option("--features", "Input .fmat");
  em->add_option("--graph", "Input .csrg graph");
  em->add_option("--codes", "Sparse codes .csrg (needed if training used them)");
  em->add_option("--anchors", "Anchor .fmat (default derived from --codes)");
  em->add_option("--out", "Output .fmat");

  // query
  auto* qu = app.add_subcommand("query", "Rank unseen queries with query feature expansion");
  qu->add_option("--ckpt", "Checkpoint the embeddings came from");
  qu->add_option("--embeddings", "Embeddings .fmat from `embed`");
  qu->add_option("--features", "Database original descriptors .fmat");
  qu->add_option("--query-file", "Query descriptors .fmat");
  qu->add_option("--qfe-k", "Expansion neighbors (default 10)");
  qu->add_option("--rounds", "Expansion rounds (default 1)");
  qu->add_option("--metric", "Metric on original descriptors (default inv_euclidean)");
  qu->add_option("--sigma", "Gaussian bandwidth (default 1)");
  qu->add_option("--topk", "Ranking length (default 100)");
  qu->add_option("--out", "Output rankings (.csv or .jsonl)");

  // eval
  auto* ev = app.add_subcommand("eval", "Score rankings with mAP or the bullseye test");
  ev->add_option("--rankings", "Rankings (.csv or .jsonl)");
  ev->add_option("--ground-truth", "Ground truth .json or labelled .fmat");
  ev->add_option("--metric", "map | bullseye (default map)");
  ev->add_option("--K", "Bullseye window (default 15)");
  ev->add_option("--out", "Output JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return GN_ERR_PARAMETER;
  }

  try {
    check(gn_set_threads(threads), "--threads");
    Settings s;
    s.load(config_path);

    if (gen->parsed()) {
      s.override_with(*gen, {{"--per-letter", "per_letter"}, {"--noise", "noise"}, {"--seed", "seed"}, {"--out", "out"}});
      Features f;
      check(gn_toy_generate(s.size("per_letter", 375), s.real("noise", 0.005), s.size("seed", 0), f.out()), "gen-toy");
      const auto out = s.require("out");
      check(gn_features_save(f.get(), out.c_str()), out);
      std::size_t n = 0;
      gn_features_shape(f.get(), &n, nullptr);
      std::cerr << "wrote " << n << " points to " << out << "\n";
    } else if (bg->parsed()) {
      s.override_with(*bg, {{"--features", "features"}, {"--k", "k"}, {"--metric", "metric"}, {"--sigma", "sigma"}, {"--out", "out"}});
      s.set("k", std::to_string(s.size("k", 15)));
      s.set("metric", s.get("metric", "inv_euclidean"));
      Features f;
      load_features(s.require("features"), f);
      Graph g;
      check(gn_graph_build(f.get(), s.size("k", 15), s.get("metric").c_str(), s.real("sigma", 1.0), g.out()), "build-graph");
      const auto out = s.require("out");
      check(gn_graph_save(g.get(), out.c_str(), s.text().c_str()), out);
      std::size_t nodes = 0, edges = 0;
      gn_graph_info(g.get(), &nodes, &edges);
      std::cerr << "graph: " << nodes << " nodes, " << edges << " mutual edges -> " << out << "\n";
    } else if (an->parsed()) {
      s.override_with(*an, {{"--features", "features"}, {"--B", "B"}, {"--c", "c"}, {"--seed", "seed"}, {"--out", "out"}});
      s.set("B", std::to_string(s.size("B", 100)));
      s.set("c", std::to_string(s.size("c", 5)));
      Features f;
      load_features(s.require("features"), f);
      Anchors a;
      check(gn_anchors_fit(f.get(), s.size("B", 100), s.size("c", 5), s.size("seed", 0), a.out()), "anchors");
      const auto prefix = stem_path(s.require("out"));
      const auto ap = prefix + ".anchors.fmat", cp = prefix + ".codes.csrg";
      check(gn_anchors_save(a.get(), ap.c_str(), cp.c_str(), s.text().c_str()), prefix);
      std::cerr << "wrote " << ap << " and " << cp << "\n";
    } else if (df->parsed()) {
      s.override_with(*df, {{"--graph", "graph"}, {"--queries", "queries"}, {"--features", "features"}, {"--alpha", "alpha"},
                            {"--mode", "mode"}, {"--T", "T"}, {"--matrix-out", "matrix_out"}, {"--out", "out"}});
      Graph g;
      const auto gp = s.require("graph");
      check(gn_graph_load(gp.c_str(), g.out()), gp);
      Features ids;
      if (!s.get("features").empty()) load_features(s.get("features"), ids);
      const auto queries = parse_queries(s.require("queries"), ids.get());
      const auto mode = s.get("mode", "closed");
      const std::size_t t = s.size("T", mode == "tpg" ? 30 : 0);
      Rankings r;
      check(gn_diffuse(g.get(), queries.data(), queries.size(), s.real("alpha", 0.9), mode.c_str(), t, ids.get(), r.out()),
            "diffuse");
      const auto out = s.require("out");
      check(gn_rankings_save(r.get(), out.c_str()), out);
      if (!s.get("matrix_out").empty()) {
        if (mode != "tpg") usage_error("--matrix-out requires --mode tpg");
        check(gn_tpg_save(g.get(), t, s.get("matrix_out").c_str()), s.get("matrix_out"));
      }
      std::cerr << "ranked " << queries.size() << " queries (" << mode << ") -> " << out << "\n";
    } else if (tr->parsed()) {
      s.override_with(*tr, {{"--features", "features"}, {"--graph", "graph"}, {"--codes", "codes"}, {"--anchors", "anchors"},
                            {"--resume", "resume"}, {"--out", "out"}, {"--log", "log"}, {"--epochs", "epochs"},
                            {"--seed", "seed"}, {"--dims", "dims"}, {"--batch", "batch"}, {"--lr", "lr"},
                            {"--dropout", "dropout"}, {"--notation", "notation"},
                            {"--checkpoint-every", "checkpoint_every"}, {"--node-budget", "node_budget"},
                            {"--hops", "hops"}});
      Features x;
      load_model_input(s, x);
      Graph g;
      const auto gp = s.require("graph");
      check(gn_graph_load(gp.c_str(), g.out()), gp);
      const auto out = s.require("out");
      std::ofstream log;
      if (!s.get("log").empty()) {
        log.open(s.get("log"));
        if (!log) throw Failure{GN_ERR_DATA, "cannot write " + s.get("log")};
      }
      // File locations describe this run only; they are not echoed.
      Settings echo;
      echo.load("");
      {
        std::istringstream lines(s.text());
        std::string line;
        while (std::getline(lines, line)) {
          const auto eq = line.find('=');
          const auto key = line.substr(0, eq);
          if (key == "out" || key == "log" || key == "resume") continue;
          echo.set(key, line.substr(eq + 1));
        }
      }
      const auto config = echo.text();
      const auto resume = s.get("resume");
      gn_train_options opts{config.c_str(), resume.empty() ? nullptr : resume.c_str(), out.c_str(),
                            log.is_open() ? log_line : nullptr, &log};
      Model m;
      check(gn_train(x.get(), g.get(), &opts, m.out()), "train");
      check(gn_model_save(m.get(), out.c_str()), out);
      std::cerr << "checkpoint -> " << out << "\n";
    } else if (em->parsed()) {
      s.override_with(*em, {{"--ckpt", "ckpt"}, {"--features", "features"}, {"--graph", "graph"}, {"--codes", "codes"},
                            {"--anchors", "anchors"}, {"--out", "out"}});
      Model m;
      const auto cp = s.require("ckpt");
      check(gn_model_load(cp.c_str(), m.out()), cp);
      Features x;
      load_model_input(s, x);
      Graph g;
      const auto gp = s.require("graph");
      check(gn_graph_load(gp.c_str(), g.out()), gp);
      Features h;
      check(gn_embed(m.get(), x.get(), g.get(), h.out()), "embed");
      const auto out = s.require("out");
      check(gn_features_save(h.get(), out.c_str()), out);
      std::cerr << "embeddings -> " << out << "\n";
    } else if (qu->parsed()) {
      s.override_with(*qu, {{"--ckpt", "ckpt"}, {"--embeddings", "embeddings"}, {"--features", "features"},
                            {"--query-file", "query_file"}, {"--qfe-k", "qfe_k"}, {"--rounds", "rounds"},
                            {"--metric", "metric"}, {"--sigma", "sigma"}, {"--topk", "topk"}, {"--out", "out"}});
      Model m;
      const auto cp = s.require("ckpt");
      check(gn_model_load(cp.c_str(), m.out()), cp);
      Features e, db, q;
      load_features(s.require("embeddings"), e);
      load_features(s.require("features"), db);
      load_features(s.require("query_file"), q);
      const size_t* dims = nullptr;
      std::size_t depth = 0, width = 0, total = 0;
      gn_model_dims(m.get(), &dims, &depth);
      for (std::size_t i = 0; i < depth; ++i) total += dims[i];
      gn_features_shape(e.get(), nullptr, &width);
      if (width != total) {
        throw Failure{GN_ERR_DATA, "embeddings width " + std::to_string(width) + " does not match checkpoint (" +
                                       std::to_string(total) + ")"};
      }
      Rankings r;
      check(gn_query(e.get(), db.get(), q.get(), s.size("qfe_k", 10), s.size("rounds", 1),
                     s.get("metric", "inv_euclidean").c_str(), s.real("sigma", 1.0), s.size("topk", 100), r.out()),
            "query");
      const auto out = s.require("out");
      check(gn_rankings_save(r.get(), out.c_str()), out);
      std::cerr << "rankings -> " << out << "\n";
    } else if (ev->parsed()) {
      s.override_with(*ev, {{"--rankings", "rankings"}, {"--ground-truth", "ground_truth"}, {"--metric", "metric"},
                            {"--K", "K"}, {"--out", "out"}});
      Rankings r;
      const auto rp = s.require("rankings");
      check(gn_rankings_load(rp.c_str(), r.out()), rp);
      const auto metric = s.get("metric", "map");
      const auto out = s.get("out");
      double value = 0.0;
      check(gn_evaluate(r.get(), s.require("ground_truth").c_str(), metric.c_str(), s.size("K", 15),
                        out.empty() ? nullptr : out.c_str(), s.text().c_str(), &value),
            "eval");
      std::cerr << metric << " = " << value << "\n";
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.status;
  }
  return 0;
}
