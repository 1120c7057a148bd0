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

#include "streamkit/encoding.hpp"
#include "streamkit/rng.hpp"
#include "streamkit/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace streamkit {

/// Sensitivity-sampling coreset reduction: constant-factor local search,
/// BatchSens sensitivities, then Bernoulli sampling with probabilities
/// min(1, m * s_i / sum s) and inverse-probability weights, targeting
/// m = c * (k / eps2^2) * (d + log2(1/delta2)) * log2(k) points
/// (`target_override` > 0 pins m directly). Inputs at or below the target
/// pass through unchanged.
Dataset reduce_coreset(const Dataset& data, int k, double z, double eps2,
                       double delta2, Rng& rng,
                       Eigen::Index target_override = 0, double c = 1.0);

Eigen::Index reduce_target_size(int k, int d, double eps2, double delta2,
                                double c = 1.0);

struct MergeReduceConfig {
  int k = 1;
  double z = 2.0;
  double epsilon = 0.2;
  double delta = 0.01;
  double grid_delta = 0.0;
  double n_bound = 1e6;
  Eigen::Index block_size = 0;  // 0 -> the reduce target size
  double reduce_c = 1.0;
  int height_bound = 4;   // eps'' = epsilon / (4 * height_bound)
  double encode_c = 100.0;
  std::uint64_t seed = 1;

  double eps_level() const { return epsilon / (4.0 * height_bound); }
  double delta_level() const;
};

struct MergeReduceMetrics {
  std::uint64_t current_record_bits = 0;
  std::uint64_t peak_record_bits = 0;
  std::uint64_t anchor_bits = 0;
  std::uint64_t header_bits = 0;
  std::uint64_t reduce_events = 0;
  std::uint64_t inserted = 0;
  std::uint64_t peak_buffer_points = 0;
};

/// Merge-and-reduce over an insertion stream with at most one encoded
/// bucket per level. Every reduce event recomputes the global anchor
/// solution from the full decoded state; prior buckets keep the anchors
/// they were encoded with (no re-encoding).
class MergeReduceState {
 public:
  explicit MergeReduceState(const MergeReduceConfig& config);

  void insert(const Eigen::Ref<const Vector>& point, double weight);
  /// Current coreset of everything inserted: decoded union of all buckets
  /// plus the level-0 buffer.
  Dataset query() const;

  const MergeReduceConfig& config() const { return config_; }
  Eigen::Index block_size() const { return block_size_; }
  const MergeReduceMetrics& metrics() const { return metrics_; }
  std::uint64_t anchor_generation() const { return generation_; }
  const std::optional<CenterSet>& global_anchors() const { return anchors_; }
  const EncodingSchedule& schedule() const { return schedule_; }

  // "MRST" snapshot: header plus one "KZC1" blob per live bucket; the raw
  // buffer is stored as a trailing encoded bucket.
  void serialize(std::ostream& os) const;
  static MergeReduceState deserialize(std::istream& is,
                                      const MergeReduceConfig& config);

 private:
  void flush_buffer();
  void refresh_metrics();
  Dataset buffer_dataset() const;

  MergeReduceConfig config_;
  EncodingSchedule schedule_;
  Eigen::Index block_size_ = 0;
  Rng rng_;
  std::vector<Vector> buffer_points_;
  std::vector<double> buffer_weights_;
  std::vector<std::optional<EncodedCoreset>> buckets_;
  std::optional<CenterSet> anchors_;
  std::uint64_t generation_ = 0;
  MergeReduceMetrics metrics_;
};

}  // namespace streamkit
