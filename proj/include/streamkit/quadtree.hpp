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

#include "streamkit/rng.hpp"
#include "streamkit/types.hpp"

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace streamkit {

// Randomly shifted grid hierarchy with wide branching zeta (~ n^iota), so the
// number of levels is O(1/iota) when the grid bound is poly(n). Levels run
// 0..levels; the top side length is >= 2*delta and the shift is clamped so
// every registered point lands in the same top cell. TreeDist between two
// distinct points is sqrt(d) * zeta^alpha where alpha is the first level at
// which they share a cell.
struct CrudeQuadTree {
  IntMatrix points;  // build points, one per row
  Vector weights;
  IntVector shift;
  std::int64_t zeta = 2;
  int levels = 1;
  std::int64_t delta = 1;

  // Margin certificate: accepted means every point sits at least side/kappa
  // above the lower cell boundary, per coordinate, at every level in
  // [1, levels-1]. On retry exhaustion the best shift found is kept and
  // achieved_margin records the certified fraction (0 when some point lies
  // on a boundary).
  bool margin_ok = false;
  double kappa = 0.0;
  double achieved_margin = 0.0;
  int retries_used = 0;

  std::vector<std::unordered_map<std::uint64_t, double>> cell_weight;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::int32_t>>>
      cell_points;

  std::vector<std::int64_t> side;  // zeta^t for t = 0..levels

  Eigen::Index dim() const { return points.cols(); }
  Eigen::Index size() const { return points.rows(); }

  std::uint64_t cell_key(const Eigen::Ref<const IntVector>& x, int level) const;
  /// First level (0..levels) at which x and y share a cell; levels+1 acts as
  /// a virtual root for pairs never merged below (cannot happen for
  /// registered points, by the shift clamp).
  int first_common_level(const Eigen::Ref<const IntVector>& x,
                         const Eigen::Ref<const IntVector>& y) const;
  double tree_dist(const Eigen::Ref<const IntVector>& x,
                   const Eigen::Ref<const IntVector>& y) const;
};

struct TreeBuildOptions {
  std::int64_t zeta = 2;
  double kappa = 8.0;  // must be > 2
  int max_retries = 0;  // 0 -> ceil(log2 n) + 10
  bool with_point_lists = false;
};

/// Builds a tree whose shift leaves every point at least side/kappa above
/// every lower cell boundary (levels 1..levels-1), retrying with fresh
/// shifts; on exhaustion returns the best shift found with margin_ok=false.
CrudeQuadTree build_tree_checked(const IntMatrix& points, const Vector& weights,
                                 const TreeBuildOptions& opts, Rng& rng);

/// Per-level index of a center set against a tree: representative center and
/// aggregate served weight per occupied cell. Kept outside the tree so the
/// tree stays immutable.
struct TreeCenterIndex {
  const CrudeQuadTree* tree = nullptr;
  std::vector<std::int32_t> center_ids;       // rows into the tree's points
  Vector served_weight;                       // n_c per center
  Vector tree_r;                              // tree-dist to nearest other center
  std::vector<std::unordered_map<std::uint64_t, std::int32_t>> cell_rep;
  std::vector<std::unordered_map<std::uint64_t, double>> cell_served;

  /// First level at which x's cell contains a center, and that cell's
  /// representative. Returns levels+1 / -1 when there are no centers.
  std::pair<int, std::int32_t> nearest_center_level(
      const Eigen::Ref<const IntVector>& x) const;
  /// Aggregate served weight of centers sharing x's cell at `level`.
  double served_weight_in_cell(const Eigen::Ref<const IntVector>& x,
                               int level) const;
};

/// Assigns every tree point to its tree-nearest center, filling served
/// weights, tree-metric r_c, and the per-cell aggregates. `center_rows`
/// index rows of tree.points. Also returns the tree-metric clustering cost.
TreeCenterIndex index_centers(const CrudeQuadTree& tree,
                              const std::vector<std::int32_t>& center_rows,
                              double z, double* tree_cost = nullptr);

struct RoughSensParams {
  int k = 1;
  double z = 2.0;
  double alpha = 0.25;  // kappa = n_for_factors^alpha
  double iota = 0.25;   // zeta = n_for_factors^iota
  double n_for_factors = 0.0;  // 0 -> |Z| + |B|
  int max_retries = 0;
  std::uint64_t seed = 0;
};

/// RoughSens: crude batch sensitivity approximation through the quadtree.
/// Coordinates of Z and B are rounded to the integer grid. Quality is
/// kCrude; the claimed factor widens when the tree carries a margin warning.
std::vector<SensitivityEstimate> rough_sens(const Dataset& z_set,
                                            const Dataset& batch,
                                            const RoughSensParams& params);

}  // namespace streamkit
