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

#pragma once

#include "streamkit/merge_reduce.hpp"
#include "streamkit/quadtree.hpp"
#include "streamkit/rng.hpp"
#include "streamkit/types.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace streamkit {

/// Gaussian random projection scaled by 1/sqrt(m); drawn once per run.
struct JlTransform {
  Matrix map;  // m x d
  Vector project(const Eigen::Ref<const Vector>& x) const { return map * x; }
};

JlTransform make_jl_transform(Eigen::Index d, Eigen::Index m, Rng& rng);

enum class JlMode { kAuto, kOn, kOff };

struct PipelineConfig {
  ClusteringParams params;
  double grid_delta = 65536.0;  // coordinates live in [1, grid_delta]
  double n_bound = 1e5;         // stream-length upper bound
  double iota = 0.25;           // quadtree branching exponent
  double alpha = 0.0;           // crude factor exponent; 0 -> iota
  double lambda_scale = 1.0;    // scales lambda = (d k / eps^2) ln(n delta/eps)
  double crude_inflation = 0.0;  // 0 -> n_bound^alpha
  Eigen::Index batch_size = 0;   // 0 -> k
  Eigen::Index mr_block_size = 0;
  double reduce_c = 1.0;
  int mr_height_bound = 4;
  double encode_c = 100.0;
  JlMode jl = JlMode::kAuto;  // auto: on iff d > 8 ln(n_bound)
  bool rough_filter = true;

  double lambda(int effective_dim) const;
};

struct PipelineMetrics {
  std::uint64_t processed = 0;       // stream positions consumed
  std::uint64_t crude_kept = 0;      // |S|
  std::uint64_t refined_kept = 0;    // |S'|
  std::uint64_t reduce_events = 0;
  std::uint64_t peak_record_bits = 0;
  std::uint64_t anchor_bits = 0;
  std::uint64_t header_bits = 0;
  std::uint64_t rebuild_events = 0;  // n_bound auto-doubling
  int jl_dim = 0;                    // 0 when JL bypassed
  // log2-bucketed per-update wall times (nanoseconds).
  std::array<std::uint64_t, 40> update_ns_histogram{};
  std::uint64_t update_ns_total = 0;
  std::uint64_t update_ns_max = 0;
};

/// End-to-end streaming (k,z)-clustering: optional JL preprocessing for the
/// sensitivity estimates, RoughSens crude filtering per batch, BatchSens
/// refinement of the survivors, and merge-and-reduce over the sampled
/// sub-stream. The stored coreset keeps original coordinates; the filter
/// stages run in (projected and rounded) filter space.
class ClusteringPipeline {
 public:
  explicit ClusteringPipeline(const PipelineConfig& config);

  /// Inserts the next stream point (integer grid coordinates in
  /// [1, grid_delta]).
  void update(const Eigen::Ref<const IntVector>& x);

  /// Coreset of the full prefix: merge-and-reduce content plus the not yet
  /// filtered in-flight points at their current weights.
  Dataset current_coreset() const;

  /// O(z)-approximate centers, recomputed lazily at reduce events and
  /// served cached between them.
  const CenterSet& current_centers();

  const PipelineMetrics& metrics();
  const PipelineConfig& config() const { return config_; }

  // "PIPE" snapshot: config echo wrapping the MRST state plus in-flight
  // points.
  void save_snapshot(std::ostream& os) const;
  static ClusteringPipeline load_snapshot(std::istream& is);

 private:
  void ensure_stream_setup(Eigen::Index d);
  void process_batch();
  void process_refined();
  void refresh_filter_coreset();
  IntVector to_filter_space(const Eigen::Ref<const IntVector>& x) const;

  PipelineConfig config_;
  Rng rng_;
  std::optional<MergeReduceState> mr_;
  std::optional<JlTransform> jl_;
  Eigen::Index dim_ = 0;
  Eigen::Index filter_dim_ = 0;
  double filter_delta_ = 0.0;
  double lambda_ = 1.0;
  double inflation_ = 1.0;
  Eigen::Index batch_size_ = 1;

  // In-flight raw batch (original and filter space).
  std::vector<IntVector> batch_raw_;
  std::vector<IntVector> batch_filter_;
  // Crude survivors waiting for refinement: original point, filter point,
  // crude keep probability.
  struct Survivor {
    IntVector raw;
    IntVector filter;
    double crude_p = 1.0;
  };
  std::vector<Survivor> refined_queue_;

  // Filter-space mirror of the maintained coreset, refreshed at anchor
  // generation bumps (stale between bumps, which only oversamples).
  Dataset filter_coreset_;
  std::uint64_t filter_generation_ = ~0ull;
  std::uint64_t last_refresh_inserted_ = 0;
  std::uint64_t refresh_counter_ = 0;
  Matrix refined_solution_;
  std::uint64_t refined_solution_gen_ = ~0ull - 1;
  Eigen::Index refined_solution_basis_ = 0;
  std::uint64_t refresh_cadence() const;
  double seen_weight_ = 0.0;
  std::uint64_t batch_counter_ = 0;
  std::uint64_t refined_batch_counter_ = 0;

  CenterSet centers_cache_;
  std::uint64_t centers_generation_ = ~0ull;
  bool centers_valid_ = false;

  PipelineMetrics metrics_;
};

/// Runs the streaming pipeline over the rows of `points` in order and
/// returns the centers at the end.
CenterSet offline_cluster(const IntMatrix& points, const PipelineConfig& config);

}  // namespace streamkit
