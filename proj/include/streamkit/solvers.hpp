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

#include "streamkit/quadtree.hpp"
#include "streamkit/rng.hpp"
#include "streamkit/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace streamkit {

/// One candidate center removal: the swap's cost-increase estimate
/// psi = n_c * r_c^z for the removed center.
struct SwapCandidate {
  Eigen::Index removed_center = -1;
  double psi = 0.0;
};

/// Single-swap local search for (k,z)-medoids, seeded by adaptive sampling.
/// Terminates when no candidate swap strictly improves the cost (which in
/// particular means no swap improves it by factor 1 - 1/(2k)) or after
/// max_iters accepted swaps (default 2k ln(n*delta)). When the support has
/// at most k distinct points they are returned directly at cost zero.
/// Candidate swap-in points are enumerated exhaustively on small inputs and
/// sampled proportionally to w * dist^z on large ones.
CenterSet local_search_medoids(const Dataset& data, int k, double z,
                               int max_iters = 0,
                               Rng rng = Rng(0x10ca15ea));

/// D^z adaptive sampling: the first center is drawn proportionally to
/// weight, each subsequent one proportionally to w * dist(current centers)^z.
/// With `tree` non-null the distances are TreeDist estimates and the tree
/// must have been built over data's (rounded) points in row order.
CenterSet adaptive_sampling_seed(const Dataset& data, int k, double z,
                                 Rng& rng,
                                 const CrudeQuadTree* tree = nullptr);

/// Tree-distance adaptive seeding over the tree's own points; returns the
/// chosen rows. Requires the tree to carry point lists.
std::vector<std::int32_t> tree_adaptive_seed(const CrudeQuadTree& tree, int k,
                                             double z, Rng& rng);

struct FastKzParams {
  int k = 1;
  double z = 2.0;
  double iota = 0.25;          // zeta = n^iota
  double alpha = 0.0;          // kappa = n^alpha; 0 -> alpha = iota
  double n_for_factors = 0.0;  // 0 -> |X|
  int max_retries = 0;
  std::uint64_t seed = 0x5eed;
};

struct FastKzResult {
  CenterSet centers;
  std::vector<std::int32_t> rows;  // chosen rows of the input
  double cost_estimate = 0.0;      // quadtree-assignment cost
  bool tree_margin_ok = false;
};

/// Crude (k,z)-solver: adaptive sampling with TreeDist from a crude quadtree
/// plus a quadtree nearest-center cost estimate.
FastKzResult fast_kz_approx(const Dataset& data, const FastKzParams& params);

/// Approximates the best (k,z)-medoids clustering containing a fixed center
/// x by swapping one center of C out for x. Only the center of C nearest to
/// x has its nearest-other distance refreshed against x; the others reuse
/// their cached r_c. Returns the swap pick and
/// Psi = Cost(X,C) + min_c n_c * r~_c^z.
std::pair<SwapCandidate, double> constrained_with_center(const Dataset& data,
                                                         const CenterSet& c,
                                                         const Vector& x,
                                                         double z);

/// Same estimate with Cost(X,C) precomputed (no dataset pass).
std::pair<SwapCandidate, double> constrained_swap_estimate(
    const CenterSet& c, const Eigen::Ref<const Vector>& x, double z,
    double base_cost);

}  // namespace streamkit
