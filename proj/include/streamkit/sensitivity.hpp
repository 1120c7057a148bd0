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

#include <functional>
#include <optional>
#include <vector>

namespace streamkit {

struct BatchSensOptions {
  int k = 1;
  double z = 2.0;
  std::uint64_t seed = 0xba7c;
  /// Optional precomputed constant-factor solution (coordinates only);
  /// bookkeeping is rebuilt against Z u B either way. When absent a local
  /// search solution is computed per call.
  std::optional<Matrix> solution;
};

/// BatchSens: constant-factor sensitivity estimates for each query in
/// `batch` against the weighted set Z u B. For each query x the radial
/// sweep enumerates candidate serving centers p in Z u B by increasing
/// distance r = dist(x,p), forms the constrained-cost estimate
/// Psi_p = Cost(X,S) + psi_p via the cached-bookkeeping swap, counts the
/// weight n_b served by solution centers inside B_{r/2}(x) (at most two
/// centers change per step), and takes
///   s(x) = max_p  w_x r^z / (Psi_p + n_b r^z),
/// clamped into [w_x / (2^z W), 1]; the lower clamp is a valid sensitivity
/// bound for any point.
std::vector<SensitivityEstimate> batch_sens(const Dataset& z_set,
                                            const Dataset& batch,
                                            const BatchSensOptions& opts);

struct GapReport {
  double medoid_sensitivity = 0.0;  // tau(x), exact enumeration
  double grid_sensitivity = 0.0;    // s(x), grid sweep
  double grid_spacing = 0.0;
  double ratio = 0.0;  // grid / medoid
};

/// Compares the exact (k,z)-medoids sensitivity against the grid-swept
/// continuous sensitivity on an oracle-scale instance.
GapReport medoids_vs_clustering_gap(const Dataset& data, Eigen::Index index,
                                    int k, double z, double resolution);

struct SampledPoint {
  Eigen::Index index = -1;
  double weight = 0.0;       // 1 / p_t
  double probability = 1.0;  // p_t actually used
};

/// Online sensitivity sampling: point t is kept with probability
/// p_t = min(1, lambda * estimator(t)) and weighted 1/p_t.
std::vector<SampledPoint> online_sensitivity_sample(
    Eigen::Index n, const std::function<double(Eigen::Index)>& estimator,
    double lambda, Rng& rng);

}  // namespace streamkit
