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

#include "streamkit/sensitivity.hpp"

#include "streamkit/geometry.hpp"
#include "streamkit/oracle.hpp"
#include "streamkit/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace streamkit {

std::vector<SensitivityEstimate> batch_sens(const Dataset& z_set,
                                            const Dataset& batch,
                                            const BatchSensOptions& opts) {
  const Eigen::Index nz = z_set.size();
  const Eigen::Index nb = batch.size();
  if (nb == 0) return {};
  if (nz + nb == 0) throw ContractError("batch_sens: empty Z u B");
  const double z = opts.z;

  Dataset x;
  x.delta = std::max(z_set.delta, batch.delta);
  x.points.resize(nz + nb, batch.dim());
  x.weights.resize(nz + nb);
  if (nz > 0) {
    x.points.topRows(nz) = z_set.points;
    x.weights.head(nz) = z_set.weights;
  }
  x.points.bottomRows(nb) = batch.points;
  x.weights.tail(nb) = batch.weights;
  const Eigen::Index n = x.size();
  const double w_total = x.total_weight();

  auto clamp_out = [&](double raw, double wx) -> SensitivityEstimate {
    double lo = std::min(1.0, wx / (pow_z(2.0, z) * std::max(w_total, wx)));
    double v = std::max(std::min(raw, 1.0), lo);
    return {v, raw, SensQuality::kConstantFactor, pow_z(2.0, 3.0 * z + 7.0)};
  };

  std::vector<SensitivityEstimate> out(static_cast<std::size_t>(nb));
  if (n == 1) {
    out[0] = clamp_out(1.0, batch.weights(0));
    return out;
  }

  CenterSet sol;
  if (opts.solution) {
    sol = CenterSet(*opts.solution);
  } else {
    sol = local_search_medoids(x, opts.k, z, 0, Rng(opts.seed));
  }
  sol = prepare_swap_bookkeeping(x, sol);
  const Eigen::Index m = sol.size();
  const double base_cost = clustering_cost(x, sol, z);

  // Nearest solution center and its distance, for every point of X.
  std::vector<Eigen::Index> near(static_cast<std::size_t>(n));
  std::vector<double> near_d(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double sq = 0.0;
    near[static_cast<std::size_t>(i)] =
        nearest_center(x.points.row(i).transpose(), sol.centers, &sq);
    near_d[static_cast<std::size_t>(i)] = std::sqrt(sq);
  }

  // Global minimum and runner-up of n_c * r_c^z over cached bookkeeping.
  double m1 = std::numeric_limits<double>::infinity();
  double m2 = m1;
  Eigen::Index arg1 = -1;
  std::vector<double> swap_val(static_cast<std::size_t>(m));
  for (Eigen::Index c = 0; c < m; ++c) {
    double v = (*sol.served_weight)(c) * pow_z((*sol.nearest_other)(c), z);
    swap_val[static_cast<std::size_t>(c)] = v;
    if (v < m1) {
      m2 = m1;
      m1 = v;
      arg1 = c;
    } else if (v < m2) {
      m2 = v;
    }
  }

  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::Index qi = nz + b;
    const double wx = x.weights(qi);

    // Solution centers ordered by distance from the query, with running
    // served-weight prefix for the growing half-radius ball.
    std::vector<std::pair<double, Eigen::Index>> cdist(
        static_cast<std::size_t>(m));
    for (Eigen::Index c = 0; c < m; ++c)
      cdist[static_cast<std::size_t>(c)] = {
          (sol.centers.row(c).transpose() - x.points.row(qi).transpose())
              .norm(),
          c};
    std::sort(cdist.begin(), cdist.end());

    std::vector<std::pair<double, Eigen::Index>> cand(
        static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      cand[static_cast<std::size_t>(i)] = {
          (x.points.row(i) - x.points.row(qi)).norm(), i};
    std::sort(cand.begin(), cand.end());

    double best = 0.0;
    std::size_t ptr = 0;
    double prefix_n = 0.0;
    for (auto& [r, p] : cand) {
      if (r <= 0.0) continue;
      while (ptr < cdist.size() && cdist[ptr].first < r / 2.0) {
        prefix_n += (*sol.served_weight)(cdist[ptr].second);
        ++ptr;
      }
      // Swap estimate for adjoining p: only p's nearest center u refreshes
      // its nearest-other distance.
      Eigen::Index u = near[static_cast<std::size_t>(p)];
      double ru = std::min((*sol.nearest_other)(u),
                           near_d[static_cast<std::size_t>(p)]);
      double vu = (*sol.served_weight)(u) * pow_z(ru, z);
      double psi;
      Eigen::Index removed;
      double alt = (u == arg1) ? m2 : m1;
      if (m == 1 || !std::isfinite(alt)) {
        psi = vu;
        removed = u;
      } else if (vu <= alt) {
        psi = vu;
        removed = u;
      } else {
        psi = alt;
        removed = (u == arg1) ? -1 : arg1;  // -1: runner-up index unknown
      }
      // The removed center no longer serves anyone; drop it from the ball
      // count if it sat inside. (Runner-up identity is only needed when it
      // was u's alternative; scan lazily in that rare branch.)
      double n_b = prefix_n;
      if (removed == -1) {
        double bestv = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < m; ++c) {
          if (c == arg1) continue;
          if (swap_val[static_cast<std::size_t>(c)] < bestv) {
            bestv = swap_val[static_cast<std::size_t>(c)];
            removed = c;
          }
        }
      }
      if (removed >= 0) {
        double dr = (sol.centers.row(removed).transpose() -
                     x.points.row(qi).transpose())
                        .norm();
        if (dr < r / 2.0) n_b -= (*sol.served_weight)(removed);
      }
      double denom = base_cost + psi + std::max(0.0, n_b) * pow_z(r, z);
      double val = denom > 0.0 ? wx * pow_z(r, z) / denom : 1.0;
      best = std::max(best, val);
    }
    out[static_cast<std::size_t>(b)] = clamp_out(best, wx);
  }
  return out;
}

GapReport medoids_vs_clustering_gap(const Dataset& data, Eigen::Index index,
                                    int k, double z, double resolution) {
  GapReport rep;
  rep.medoid_sensitivity = oracle::exact_medoids_sensitivity(data, index, k, z);
  auto grid = oracle::grid_clustering_sensitivity(data, index, k, z, resolution);
  rep.grid_sensitivity = grid.value;
  rep.grid_spacing = grid.spacing;
  rep.ratio = rep.medoid_sensitivity > 0.0
                  ? rep.grid_sensitivity / rep.medoid_sensitivity
                  : std::numeric_limits<double>::infinity();
  return rep;
}

std::vector<SampledPoint> online_sensitivity_sample(
    Eigen::Index n, const std::function<double(Eigen::Index)>& estimator,
    double lambda, Rng& rng) {
  std::vector<SampledPoint> kept;
  for (Eigen::Index t = 0; t < n; ++t) {
    double p = std::min(1.0, lambda * std::max(0.0, estimator(t)));
    if (p <= 0.0) continue;
    if (rng.bernoulli(p)) kept.push_back({t, 1.0 / p, p});
  }
  return kept;
}

}  // namespace streamkit
