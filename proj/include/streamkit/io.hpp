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

#include "streamkit/types.hpp"

#include <iosfwd>
#include <string>

namespace streamkit {

struct PointsFile {
  IntMatrix points;
  Vector weights;  // ones unless the CSV carried a weight column
  bool weighted = false;
};

/// CSV of integers, one point per row; with `weighted` the trailing column
/// is a real weight. "SCKZ" binary: magic, u32 d, u64 n, i64 coords
/// row-major, little-endian (no weights). The loader sniffs the magic.
PointsFile load_points(const std::string& path, bool weighted);
void write_points_csv(const std::string& path, const IntMatrix& points,
                      const Vector* weights = nullptr);
void write_points_sckz(const std::string& path, const IntMatrix& points);

void write_centers_csv(const std::string& path, const Matrix& centers);

struct ClusterEvalReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  double max_rel_error_random = 0.0;
  double max_rel_error_data = 0.0;
  double max_rel_error_local_search = 0.0;
  int queries = 0;
};

/// Max/mean relative cost error of `coreset` against `original` over
/// `random_queries` random center sets (half uniform over the bounding box,
/// half jittered data points) plus `ls_queries` local-search center sets on
/// subsamples.
ClusterEvalReport eval_clustering(const Dataset& original,
                                  const Dataset& coreset, int k, double z,
                                  int random_queries, int ls_queries,
                                  std::uint64_t seed, int threads = 1);

struct EmbedEvalReport {
  double min_ratio = 1.0;  // spectral (p=2) or direction-sampled extremes
  double max_ratio = 1.0;
  int directions = 0;  // 0 for the exact spectral route
};

/// p = 2: extreme eigenvalues of the generalized Rayleigh spectrum of the
/// decoded coreset against A; p != 2: direction-sampled extremes of
/// ||M'x||_p^p / ||Ax||_p^p.
EmbedEvalReport eval_embedding(const Matrix& a, const Matrix& coreset_rows,
                               double p, int directions, std::uint64_t seed);

}  // namespace streamkit
