// Copyright 2026 The streamkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "streamkit/encoding.hpp"
#include "streamkit/io.hpp"
#include "streamkit/merge_reduce.hpp"
#include "streamkit/oracle.hpp"
#include "streamkit/pipeline.hpp"
#include "streamkit/solvers.hpp"
#include "streamkit/subspace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using json = nlohmann::json;
using namespace streamkit;

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("STREAMKIT_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 1;
}

json histogram_json(const std::array<std::uint64_t, 40>& h) {
  json out = json::array();
  for (auto v : h) out.push_back(v);
  return out;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot open metrics file: " + path);
  os << j.dump(2) << "\n";
}

Dataset to_dataset(const PointsFile& file, double grid_delta) {
  Dataset out;
  out.delta = grid_delta;
  out.points = file.points.cast<double>();
  out.weights = file.weights;
  return out;
}

int cmd_cluster_stream(const std::string& input, bool weighted, int k,
                       double z, double epsilon, double delta,
                       std::uint64_t seed, double n_bound, double grid_delta,
                       double lambda_scale, double iota, double alpha,
                       long batch_size, long mr_block, double reduce_c,
                       int height_bound, double encode_c,
                       const std::string& jl_mode, bool no_rough,
                       const std::string& out, const std::string& centers_out,
                       const std::string& snapshot_out,
                       const std::string& metrics_path) {
  auto t0 = std::chrono::steady_clock::now();
  PointsFile file = load_points(input, weighted);
  const Eigen::Index n = file.points.rows();

  PipelineConfig cfg;
  cfg.params.k = k;
  cfg.params.z = z;
  cfg.params.epsilon = epsilon;
  cfg.params.delta = delta;
  cfg.params.seed = seed;
  cfg.grid_delta =
      grid_delta > 0.0
          ? grid_delta
          : static_cast<double>(std::max<std::int64_t>(
                1, n ? file.points.maxCoeff() : 1));
  cfg.n_bound = n_bound > 0.0 ? n_bound : std::max<double>(1.0, n);
  cfg.lambda_scale = lambda_scale;
  cfg.iota = iota;
  cfg.alpha = alpha;
  cfg.batch_size = batch_size;
  cfg.mr_block_size = mr_block;
  cfg.reduce_c = reduce_c;
  cfg.mr_height_bound = height_bound;
  cfg.encode_c = encode_c;
  cfg.rough_filter = !no_rough;
  cfg.jl = jl_mode == "on" ? JlMode::kOn
                           : (jl_mode == "off" ? JlMode::kOff : JlMode::kAuto);

  ClusteringPipeline pipeline(cfg);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Weighted CSV input replicates by integer weight on the streaming
    // path; the common case is unit weights.
    int reps = std::max(1, static_cast<int>(std::llround(file.weights(i))));
    for (int r = 0; r < reps; ++r)
      pipeline.update(file.points.row(i).transpose());
  }

  if (!out.empty()) {
    // The artifact is the PIPE snapshot: config echo wrapping the MRST
    // bucket container.
    std::ofstream os(out, std::ios::binary);
    if (!os) throw DataError("cannot open output file: " + out);
    pipeline.save_snapshot(os);
  }
  if (!snapshot_out.empty()) {
    std::ofstream os(snapshot_out, std::ios::binary);
    if (!os) throw DataError("cannot open snapshot file: " + snapshot_out);
    pipeline.save_snapshot(os);
  }
  if (!centers_out.empty())
    write_centers_csv(centers_out, pipeline.current_centers().centers);

  auto t1 = std::chrono::steady_clock::now();
  const PipelineMetrics& m = pipeline.metrics();
  json j;
  j["schema_version"] = 1;
  j["command"] = "cluster-stream";
  j["seed"] = seed;
  j["config"] = {{"k", k},
                 {"z", z},
                 {"epsilon", epsilon},
                 {"delta", delta},
                 {"n_bound", cfg.n_bound},
                 {"grid_delta", cfg.grid_delta},
                 {"lambda_scale", cfg.lambda_scale},
                 {"iota", cfg.iota},
                 {"alpha", cfg.alpha},
                 {"batch_size", static_cast<long>(cfg.batch_size)},
                 {"mr_block_size", static_cast<long>(cfg.mr_block_size)},
                 {"reduce_c", cfg.reduce_c},
                 {"height_bound", cfg.mr_height_bound},
                 {"encode_c", cfg.encode_c},
                 {"jl", jl_mode},
                 {"rough_filter", cfg.rough_filter}};
  j["n"] = static_cast<long>(m.processed);
  j["d"] = static_cast<long>(file.points.cols());
  j["s_len"] = static_cast<long>(m.crude_kept);
  j["s2_len"] = static_cast<long>(m.refined_kept);
  j["reduce_events"] = static_cast<long>(m.reduce_events);
  j["peak_record_bytes"] = static_cast<double>(m.peak_record_bits) / 8.0;
  j["anchor_bytes"] = static_cast<double>(m.anchor_bits) / 8.0;
  j["header_bytes"] = static_cast<double>(m.header_bits) / 8.0;
  j["jl_dim"] = m.jl_dim;
  j["rebuild_events"] = static_cast<long>(m.rebuild_events);
  j["update_ns"] = {
      {"total", m.update_ns_total},
      {"max", m.update_ns_max},
      {"mean", m.processed ? static_cast<double>(m.update_ns_total) /
                                 static_cast<double>(m.processed)
                           : 0.0},
      {"histogram_log2", histogram_json(m.update_ns_histogram)}};
  j["total_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
  write_json(metrics_path, j);
  return 0;
}

int cmd_embed_stream(const std::string& input, double p, double epsilon,
                     double delta, std::uint64_t seed, double n_bound,
                     double entry_bound, double lambda_scale, double alpha,
                     int trials, long batch_size, long block_size,
                     double reduce_c, long anchor_rows, double encode_c,
                     bool no_crude, const std::string& out,
                     const std::string& metrics_path) {
  auto t0 = std::chrono::steady_clock::now();
  PointsFile file = load_points(input, false);
  const Eigen::Index n = file.points.rows();

  EmbedConfig cfg;
  cfg.p = p;
  cfg.epsilon = epsilon;
  cfg.delta = delta;
  cfg.seed = seed;
  cfg.n_bound = n_bound > 0.0 ? n_bound : std::max<double>(1.0, n);
  cfg.entry_bound = entry_bound > 0.0
                        ? entry_bound
                        : static_cast<double>(std::max<std::int64_t>(
                              1, n ? file.points.cwiseAbs().maxCoeff() : 1));
  cfg.lambda_scale = lambda_scale;
  cfg.alpha = alpha;
  cfg.crude_trials = trials;
  cfg.batch_size = batch_size;
  cfg.block_size = block_size;
  cfg.reduce_c = reduce_c;
  cfg.anchor_rows = anchor_rows;
  cfg.encode_c = encode_c;
  cfg.crude_filter = !no_crude;

  EmbedPipeline pipeline(cfg);
  for (Eigen::Index i = 0; i < n; ++i)
    pipeline.update(file.points.row(i).transpose());

  if (!out.empty()) {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw DataError("cannot open output file: " + out);
    write_lpe1(os, pipeline.current_rowset());
  }

  auto t1 = std::chrono::steady_clock::now();
  const EmbedMetrics& m = pipeline.metrics();
  json j;
  j["schema_version"] = 1;
  j["command"] = "embed-stream";
  j["seed"] = seed;
  j["config"] = {{"p", p},
                 {"epsilon", epsilon},
                 {"delta", delta},
                 {"n_bound", cfg.n_bound},
                 {"entry_bound", cfg.entry_bound},
                 {"lambda_scale", cfg.lambda_scale},
                 {"alpha", cfg.alpha},
                 {"crude_trials", cfg.crude_trials},
                 {"batch_size", static_cast<long>(cfg.batch_size)},
                 {"block_size", static_cast<long>(cfg.block_size)},
                 {"reduce_c", cfg.reduce_c},
                 {"anchor_rows", static_cast<long>(cfg.anchor_rows)},
                 {"crude_filter", cfg.crude_filter}};
  j["n"] = static_cast<long>(m.processed);
  j["d"] = static_cast<long>(file.points.cols());
  j["s_len"] = static_cast<long>(m.crude_kept);
  j["s2_len"] = static_cast<long>(m.refined_kept);
  j["reduce_events"] = static_cast<long>(m.reduce_events);
  j["peak_record_bytes"] = static_cast<double>(m.peak_record_bits) / 8.0;
  j["anchor_bytes"] = static_cast<double>(m.anchor_bits) / 8.0;
  j["lewis_unconverged"] = static_cast<long>(m.lewis_unconverged);
  j["update_ns"] = {
      {"total", m.update_ns_total},
      {"mean", m.processed ? static_cast<double>(m.update_ns_total) /
                                 static_cast<double>(m.processed)
                           : 0.0},
      {"histogram_log2", histogram_json(m.update_ns_histogram)}};
  j["total_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
  write_json(metrics_path, j);
  return 0;
}

int cmd_eval(const std::string& input, bool weighted,
             const std::string& artifact, int k, double z, int queries,
             int ls_queries, int directions, std::uint64_t seed, int threads,
             const std::string& metrics_path) {
  std::ifstream is(artifact, std::ios::binary);
  if (!is) throw DataError("cannot open artifact: " + artifact);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  is.seekg(0);
  std::string kind(magic, 4);

  PointsFile file = load_points(input, weighted);
  json j;
  j["schema_version"] = 1;
  j["command"] = "eval";
  j["seed"] = seed;
  j["artifact"] = artifact;

  if (kind == "LPE1") {
    EncodedRowSet rowset = read_lpe1(is);
    Matrix decoded = decode_rows(rowset);
    EmbedEvalReport rep = eval_embedding(file.points.cast<double>(), decoded,
                                         rowset.p, directions, seed);
    j["mode"] = "embedding";
    j["p"] = rowset.p;
    j["min_ratio"] = rep.min_ratio;
    j["max_ratio"] = rep.max_ratio;
    j["directions"] = rep.directions;
    j["rows"] = static_cast<long>(decoded.rows());
  } else if (kind == "PIPE" || kind == "MRST" || kind == "KZC1") {
    Dataset original = to_dataset(file, 0.0);
    original.delta = file.points.size()
                         ? static_cast<double>(file.points.maxCoeff())
                         : 1.0;
    Dataset coreset;
    if (kind == "KZC1") {
      coreset = decode(read_kzc1(is));
    } else if (kind == "MRST") {
      MergeReduceConfig mrc;
      mrc.k = k;
      mrc.z = z;
      coreset = MergeReduceState::deserialize(is, mrc).query();
    } else {
      coreset = ClusteringPipeline::load_snapshot(is).current_coreset();
    }
    ClusterEvalReport rep = eval_clustering(original, coreset, k, z, queries,
                                            ls_queries, seed, threads);
    j["mode"] = "clustering";
    j["k"] = k;
    j["z"] = z;
    j["max_rel_error"] = rep.max_rel_error;
    j["mean_rel_error"] = rep.mean_rel_error;
    j["max_rel_error_random"] = rep.max_rel_error_random;
    j["max_rel_error_data"] = rep.max_rel_error_data;
    j["max_rel_error_local_search"] = rep.max_rel_error_local_search;
    j["queries"] = rep.queries;
    j["coreset_points"] = static_cast<long>(coreset.size());
    j["coreset_weight"] = coreset.total_weight();
    j["dataset_weight"] = original.total_weight();
  } else {
    throw DataError("eval: unrecognized artifact magic");
  }
  write_json(metrics_path, j);
  return 0;
}

int cmd_solve(const std::string& input, bool weighted, int k, double z,
              double epsilon, double delta, std::uint64_t seed,
              const std::string& centers_out, const std::string& metrics_path) {
  PointsFile file = load_points(input, weighted);
  PipelineConfig cfg;
  cfg.params.k = k;
  cfg.params.z = z;
  cfg.params.epsilon = epsilon;
  cfg.params.delta = delta;
  cfg.params.seed = seed;
  cfg.grid_delta = static_cast<double>(std::max<std::int64_t>(
      1, file.points.size() ? file.points.maxCoeff() : 1));
  cfg.n_bound = std::max<double>(1.0, file.points.rows());
  CenterSet centers = offline_cluster(file.points, cfg);
  if (!centers_out.empty()) write_centers_csv(centers_out, centers.centers);

  Dataset data = to_dataset(file, cfg.grid_delta);
  json j;
  j["schema_version"] = 1;
  j["command"] = "solve";
  j["seed"] = seed;
  j["k"] = k;
  j["z"] = z;
  j["centers"] = static_cast<long>(centers.size());
  j["cost"] = centers.empty() ? 0.0 : clustering_cost(data, centers, z);
  write_json(metrics_path, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamkit: streaming coresets for (k,z)-clustering and Lp "
               "subspace embeddings"};
  app.require_subcommand(1);

  std::string cs_input, cs_out, cs_centers, cs_metrics, cs_snapshot;
  std::string cs_jl = "auto";
  bool cs_weighted = false, cs_no_rough = false;
  int cs_k = 8, cs_height = 4;
  double cs_z = 2.0, cs_eps = 0.1, cs_delta = 0.01, cs_nbound = 0.0,
         cs_grid = 0.0, cs_lambda = 1.0, cs_iota = 0.25, cs_alpha = 0.0,
         cs_reduce_c = 1.0, cs_encode_c = 100.0;
  long cs_batch = 0, cs_block = 0;
  std::optional<std::uint64_t> cs_seed;
  auto* cs = app.add_subcommand("cluster-stream",
                                "stream a point file into a (k,z) coreset");
  cs->add_option("--input", cs_input, "CSV or SCKZ points")->required();
  cs->add_flag("--weighted", cs_weighted, "trailing CSV weight column");
  cs->add_option("--k", cs_k)->check(CLI::PositiveNumber);
  cs->add_option("--z", cs_z)->check(CLI::Range(1.0, 8.0));
  cs->add_option("--epsilon", cs_eps)->check(CLI::Range(1e-6, 0.999999));
  cs->add_option("--delta", cs_delta)->check(CLI::Range(1e-12, 0.999999));
  cs->add_option("--seed", cs_seed, "defaults to $STREAMKIT_SEED or 1");
  cs->add_option("--n-bound", cs_nbound, "stream length bound (0: file size)");
  cs->add_option("--grid-delta", cs_grid, "coordinate bound (0: file max)");
  cs->add_option("--lambda-scale", cs_lambda);
  cs->add_option("--iota", cs_iota);
  cs->add_option("--alpha", cs_alpha);
  cs->add_option("--batch-size", cs_batch);
  cs->add_option("--mr-block", cs_block);
  cs->add_option("--reduce-c", cs_reduce_c);
  cs->add_option("--height-bound", cs_height);
  cs->add_option("--encode-c", cs_encode_c);
  cs->add_option("--jl", cs_jl)->check(CLI::IsMember({"auto", "on", "off"}));
  cs->add_flag("--no-rough", cs_no_rough, "disable the crude filter stage");
  cs->add_option("--out", cs_out, "coreset artifact (PIPE/MRST container)");
  cs->add_option("--centers-out", cs_centers, "centers CSV");
  cs->add_option("--snapshot-out", cs_snapshot, "pipeline snapshot");
  cs->add_option("--metrics", cs_metrics, "metrics JSON path (- for stdout)");

  std::string es_input, es_out, es_metrics;
  bool es_no_crude = false;
  double es_p = 2.0, es_eps = 0.1, es_delta = 0.01, es_nbound = 0.0,
         es_entry = 0.0, es_lambda = 1.0, es_alpha = 0.1, es_reduce_c = 1.0,
         es_encode_c = 100.0;
  int es_trials = 21;
  long es_batch = 0, es_block = 0, es_anchor = 0;
  std::optional<std::uint64_t> es_seed;
  auto* es = app.add_subcommand("embed-stream",
                                "stream matrix rows into an Lp embedding");
  es->add_option("--input", es_input)->required();
  es->add_option("--p", es_p)->check(CLI::Range(1.0, 16.0));
  es->add_option("--epsilon", es_eps)->check(CLI::Range(1e-6, 0.999999));
  es->add_option("--delta", es_delta)->check(CLI::Range(1e-12, 0.999999));
  es->add_option("--seed", es_seed);
  es->add_option("--n-bound", es_nbound);
  es->add_option("--entry-bound", es_entry);
  es->add_option("--lambda-scale", es_lambda);
  es->add_option("--alpha", es_alpha);
  es->add_option("--crude-trials", es_trials);
  es->add_option("--batch-size", es_batch);
  es->add_option("--block-size", es_block);
  es->add_option("--reduce-c", es_reduce_c);
  es->add_option("--anchor-rows", es_anchor);
  es->add_option("--encode-c", es_encode_c);
  es->add_flag("--no-crude", es_no_crude);
  es->add_option("--out", es_out, "LPE1 artifact");
  es->add_option("--metrics", es_metrics);

  std::string ev_input, ev_artifact, ev_metrics;
  bool ev_weighted = false;
  int ev_k = 8, ev_queries = 200, ev_ls = 10, ev_dirs = 2000, ev_threads = 1;
  double ev_z = 2.0;
  std::optional<std::uint64_t> ev_seed;
  auto* ev = app.add_subcommand("eval", "evaluate an artifact against data");
  ev->add_option("--input", ev_input)->required();
  ev->add_flag("--weighted", ev_weighted);
  ev->add_option("--artifact", ev_artifact)->required();
  ev->add_option("--k", ev_k);
  ev->add_option("--z", ev_z);
  ev->add_option("--queries", ev_queries);
  ev->add_option("--ls-queries", ev_ls);
  ev->add_option("--directions", ev_dirs);
  ev->add_option("--seed", ev_seed);
  ev->add_option("--threads", ev_threads)->check(CLI::Range(1, 64));
  ev->add_option("--metrics", ev_metrics);

  std::string sv_input, sv_centers, sv_metrics;
  bool sv_weighted = false;
  int sv_k = 8;
  double sv_z = 2.0, sv_eps = 0.2, sv_delta = 0.01;
  std::optional<std::uint64_t> sv_seed;
  auto* sv = app.add_subcommand("solve", "offline (k,z) clustering");
  sv->add_option("--input", sv_input)->required();
  sv->add_flag("--weighted", sv_weighted);
  sv->add_option("--k", sv_k);
  sv->add_option("--z", sv_z);
  sv->add_option("--epsilon", sv_eps);
  sv->add_option("--delta", sv_delta);
  sv->add_option("--seed", sv_seed);
  sv->add_option("--centers-out", sv_centers);
  sv->add_option("--metrics", sv_metrics);

  std::string or_input, or_metrics, or_op;
  bool or_weighted = false;
  int or_k = 1, or_index = 0, or_dirs = 100000;
  double or_z = 2.0, or_p = 2.0, or_resolution = 1.0;
  auto* orc = app.add_subcommand("oracle", "brute-force reference values");
  orc->add_option("--op", or_op)
      ->required()
      ->check(CLI::IsMember(
          {"medoids-opt", "medoids-sens", "grid-sens", "lp-sens"}));
  orc->add_option("--input", or_input)->required();
  orc->add_flag("--weighted", or_weighted);
  orc->add_option("--k", or_k);
  orc->add_option("--z", or_z);
  orc->add_option("--p", or_p);
  orc->add_option("--index", or_index);
  orc->add_option("--resolution", or_resolution);
  orc->add_option("--directions", or_dirs);
  orc->add_option("--metrics", or_metrics);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cs->parsed())
      return cmd_cluster_stream(cs_input, cs_weighted, cs_k, cs_z, cs_eps,
                                cs_delta, resolve_seed(cs_seed), cs_nbound,
                                cs_grid, cs_lambda, cs_iota, cs_alpha, cs_batch,
                                cs_block, cs_reduce_c, cs_height, cs_encode_c,
                                cs_jl, cs_no_rough, cs_out, cs_centers,
                                cs_snapshot, cs_metrics);
    if (es->parsed())
      return cmd_embed_stream(es_input, es_p, es_eps, es_delta,
                              resolve_seed(es_seed), es_nbound, es_entry,
                              es_lambda, es_alpha, es_trials, es_batch,
                              es_block, es_reduce_c, es_anchor, es_encode_c,
                              es_no_crude, es_out, es_metrics);
    if (ev->parsed())
      return cmd_eval(ev_input, ev_weighted, ev_artifact, ev_k, ev_z,
                      ev_queries, ev_ls, ev_dirs, resolve_seed(ev_seed),
                      ev_threads, ev_metrics);
    if (sv->parsed())
      return cmd_solve(sv_input, sv_weighted, sv_k, sv_z, sv_eps, sv_delta,
                       resolve_seed(sv_seed), sv_centers, sv_metrics);
    if (orc->parsed()) {
      json j;
      PointsFile file = load_points(or_input, or_weighted);
      Dataset data = to_dataset(file, 0.0);
      if (or_op == "medoids-opt") {
        auto [centers, cost] = oracle::exact_medoids_opt(data, or_k, or_z);
        j["op"] = "medoids-opt";
        j["k"] = or_k;
        j["z"] = or_z;
        j["cost"] = cost;
        j["centers"] = json::array();
        for (Eigen::Index i = 0; i < centers.size(); ++i) {
          json row = json::array();
          for (Eigen::Index c = 0; c < centers.dim(); ++c)
            row.push_back(centers.centers(i, c));
          j["centers"].push_back(row);
        }
      } else if (or_op == "medoids-sens") {
        j["op"] = "medoids-sens";
        j["index"] = or_index;
        j["value"] =
            oracle::exact_medoids_sensitivity(data, or_index, or_k, or_z);
      } else if (or_op == "grid-sens") {
        auto g = oracle::grid_clustering_sensitivity(data, or_index, or_k,
                                                     or_z, or_resolution);
        j["op"] = "grid-sens";
        j["index"] = or_index;
        j["value"] = g.value;
        j["spacing"] = g.spacing;
      } else {
        oracle::LpSensitivityOptions opts;
        opts.directions = or_dirs;
        auto s = oracle::exact_lp_sensitivity(file.points.cast<double>(),
                                              or_index, or_p, opts);
        j["op"] = "lp-sens";
        j["row"] = or_index;
        j["value"] = s.value;
        j["directions"] = s.directions;
      }
      j["schema_version"] = 1;
      write_json(or_metrics, j);
      return 0;
    }
  } catch (const ResourceError& e) {
    std::cerr << "resource error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
