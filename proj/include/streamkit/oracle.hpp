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

#include "streamkit/geometry.hpp"
#include "streamkit/types.hpp"

#include <cstdint>
#include <utility>

namespace streamkit::oracle {

// Brute-force reference implementations, used exclusively to test
// approximation factors on small instances. Weighted throughout: the cost
// contribution of a queried point is w_x * dist(x,C)^z.
//
// Ratio convention: a candidate C with Cost(X,C) = 0 covers every point, so
// the query's contribution equals the total; such candidates contribute the
// limit value w_x / W(X). On a singleton this yields sensitivity 1.

/// Exhaustive (k,z)-medoids optimum over all size-k subsets of X's support.
/// Guard: C(|support|, k) <= 10^6.
std::pair<CenterSet, double> exact_medoids_opt(const Dataset& data, int k,
                                               double z);

/// Exact (k,z)-medoids sensitivity of point `index`: max over all subsets
/// C of the support with |C| <= k of w_x dist(x,C)^z / Cost(X,C).
double exact_medoids_sensitivity(const Dataset& data, Eigen::Index index,
                                 int k, double z);

struct GridSensitivity {
  double value = 0.0;
  double spacing = 0.0;  // grid step used, for discretization error bounds
};

/// Continuous (k,z)-clustering sensitivity approximated on a uniform grid of
/// the bounding box (inflated by one step on each side) at the given
/// spacing. Guard: at most 10^7 candidate center tuples.
GridSensitivity grid_clustering_sensitivity(const Dataset& data,
                                            Eigen::Index index, int k,
                                            double z, double resolution);

struct LpSensitivity {
  double value = 0.0;
  int directions = 0;  // sampling density (0 when closed-form)
};

struct LpSensitivityOptions {
  int directions = 100000;
  int polish_rounds = 40;
  std::uint64_t seed = 0x517ea11u;
};

/// Lp sensitivity of row `row`: max_y |<a_row, y>|^p / ||A y||_p^p.
/// Closed form (leverage score) for p = 2; dense direction sampling plus
/// coordinate-descent polish otherwise (guard d <= 6, approximate).
/// A rank-deficient A whose queried row lies outside the span of the other
/// rows has sensitivity exactly 1.
LpSensitivity exact_lp_sensitivity(const Matrix& a, Eigen::Index row, double p,
                                   const LpSensitivityOptions& opts = {});

}  // namespace streamkit::oracle
