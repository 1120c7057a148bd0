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

#include "streamkit/quadtree.hpp"

#include "streamkit/geometry.hpp"
#include "streamkit/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace streamkit {
namespace {

std::uint64_t hash_cell(int level, const std::int64_t* cells, Eigen::Index d) {
  std::uint64_t h = Rng::mix(static_cast<std::uint64_t>(level) + 0x51ee7);
  for (Eigen::Index j = 0; j < d; ++j)
    h = Rng::mix(h ^ Rng::mix(static_cast<std::uint64_t>(cells[j]) +
                              0x9e3779b97f4a7c15ULL * (j + 1)));
  return h;
}

}  // namespace

std::uint64_t CrudeQuadTree::cell_key(const Eigen::Ref<const IntVector>& x,
                                      int level) const {
  const Eigen::Index d = x.size();
  std::int64_t cells[64];
  std::int64_t s = side[static_cast<std::size_t>(level)];
  for (Eigen::Index j = 0; j < d; ++j) cells[j] = (x(j) + shift(j)) / s;
  return hash_cell(level, cells, d);
}

int CrudeQuadTree::first_common_level(
    const Eigen::Ref<const IntVector>& x,
    const Eigen::Ref<const IntVector>& y) const {
  const Eigen::Index d = x.size();
  for (int t = 0; t <= levels; ++t) {
    std::int64_t s = side[static_cast<std::size_t>(t)];
    bool same = true;
    for (Eigen::Index j = 0; j < d; ++j) {
      if ((x(j) + shift(j)) / s != (y(j) + shift(j)) / s) {
        same = false;
        break;
      }
    }
    if (same) return t;
  }
  return levels + 1;
}

double CrudeQuadTree::tree_dist(const Eigen::Ref<const IntVector>& x,
                                const Eigen::Ref<const IntVector>& y) const {
  if (x == y) return 0.0;
  int alpha = first_common_level(x, y);
  return std::sqrt(static_cast<double>(x.size())) *
         std::pow(static_cast<double>(zeta), alpha);
}

CrudeQuadTree build_tree_checked(const IntMatrix& points, const Vector& weights,
                                 const TreeBuildOptions& opts, Rng& rng) {
  if (points.rows() == 0) throw ContractError("build_tree_checked: no points");
  if (points.rows() != weights.size())
    throw ContractError("build_tree_checked: weights size mismatch");
  if (!(opts.kappa > 2.0))
    throw ContractError("build_tree_checked: kappa must be > 2");

  CrudeQuadTree tree;
  tree.points = points;
  tree.weights = weights;
  tree.zeta = std::max<std::int64_t>(2, opts.zeta);
  tree.kappa = opts.kappa;
  tree.delta = std::max<std::int64_t>(1, points.maxCoeff());

  int levels = 1;
  {
    std::int64_t s = tree.zeta;
    while (s < 2 * tree.delta) {
      s *= tree.zeta;
      ++levels;
    }
  }
  tree.levels = levels;
  tree.side.resize(static_cast<std::size_t>(levels) + 1);
  tree.side[0] = 1;
  for (int t = 1; t <= levels; ++t)
    tree.side[static_cast<std::size_t>(t)] =
        tree.side[static_cast<std::size_t>(t - 1)] * tree.zeta;

  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  const std::int64_t top = tree.side[static_cast<std::size_t>(levels)];
  // Clamping the shift so coords + shift < top puts everything in one top
  // cell; only levels 1..levels-1 can then separate margins matter for.
  const std::int64_t shift_range = std::max<std::int64_t>(1, top - tree.delta);

  int max_retries = opts.max_retries > 0
                        ? opts.max_retries
                        : static_cast<int>(std::ceil(
                              std::log2(static_cast<double>(n) + 1.0))) +
                              10;

  IntVector best_shift = IntVector::Zero(d);
  double best_margin = -1.0;
  int used = 0;
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    ++used;
    IntVector s(d);
    for (Eigen::Index j = 0; j < d; ++j)
      s(j) = static_cast<std::int64_t>(
          rng.uniform_int(static_cast<std::uint64_t>(shift_range)));

    // Worst fraction of side that any point sits above a lower boundary,
    // over levels 1..levels-1 and all coordinates. Levels whose side is at
    // most kappa are exempt: integer points separated there are already at
    // least side/kappa apart, which is all the dilation argument needs.
    double margin = 1.0;
    for (int t = 1; t < levels; ++t) {
      std::int64_t sd = tree.side[static_cast<std::size_t>(t)];
      if (static_cast<double>(sd) <= opts.kappa) continue;
      for (Eigen::Index i = 0; i < n && margin >= 1.0 / opts.kappa; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          std::int64_t off = (points(i, j) + s(j)) % sd;
          double frac = static_cast<double>(off) / static_cast<double>(sd);
          if (frac < margin) margin = frac;
        }
      }
    }

    if (margin > best_margin) {
      best_margin = margin;
      best_shift = s;
    }
    if (margin >= 1.0 / opts.kappa) break;
  }

  tree.shift = best_shift;
  tree.achieved_margin = std::max(0.0, best_margin);
  tree.margin_ok = best_margin >= 1.0 / opts.kappa;
  tree.retries_used = used;

  tree.cell_weight.assign(static_cast<std::size_t>(levels) + 1, {});
  if (opts.with_point_lists)
    tree.cell_points.assign(static_cast<std::size_t>(levels) + 1, {});
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int t = 0; t <= levels; ++t) {
      std::uint64_t key = tree.cell_key(points.row(i).transpose(), t);
      tree.cell_weight[static_cast<std::size_t>(t)][key] += weights(i);
      if (opts.with_point_lists)
        tree.cell_points[static_cast<std::size_t>(t)][key].push_back(
            static_cast<std::int32_t>(i));
    }
  }
  return tree;
}

std::pair<int, std::int32_t> TreeCenterIndex::nearest_center_level(
    const Eigen::Ref<const IntVector>& x) const {
  for (int t = 0; t <= tree->levels; ++t) {
    auto it = cell_rep[static_cast<std::size_t>(t)].find(tree->cell_key(x, t));
    if (it != cell_rep[static_cast<std::size_t>(t)].end())
      return {t, it->second};
  }
  return {tree->levels + 1, -1};
}

double TreeCenterIndex::served_weight_in_cell(
    const Eigen::Ref<const IntVector>& x, int level) const {
  auto it =
      cell_served[static_cast<std::size_t>(level)].find(tree->cell_key(x, level));
  return it == cell_served[static_cast<std::size_t>(level)].end() ? 0.0
                                                                  : it->second;
}

TreeCenterIndex index_centers(const CrudeQuadTree& tree,
                              const std::vector<std::int32_t>& center_rows,
                              double z, double* tree_cost) {
  TreeCenterIndex idx;
  idx.tree = &tree;
  idx.center_ids = center_rows;
  const int m = static_cast<int>(center_rows.size());
  const double sqrt_d = std::sqrt(static_cast<double>(tree.dim()));

  // Occupancy first: per level, which cells hold a center (lowest center
  // index is the representative, for determinism) and how many.
  idx.cell_rep.assign(static_cast<std::size_t>(tree.levels) + 1, {});
  std::vector<std::unordered_map<std::uint64_t, std::int32_t>> cell_count(
      static_cast<std::size_t>(tree.levels) + 1);
  for (int c = 0; c < m; ++c) {
    auto row = tree.points.row(center_rows[static_cast<std::size_t>(c)]);
    for (int t = 0; t <= tree.levels; ++t) {
      std::uint64_t key = tree.cell_key(row.transpose(), t);
      auto& map = idx.cell_rep[static_cast<std::size_t>(t)];
      auto it = map.find(key);
      if (it == map.end()) map.emplace(key, static_cast<std::int32_t>(c));
      ++cell_count[static_cast<std::size_t>(t)][key];
    }
  }

  // Tree-nearest assignment of every point (first level whose cell holds a
  // center); identical coordinates mean true distance zero.
  idx.served_weight = Vector::Zero(m);
  double cost = 0.0;
  for (Eigen::Index i = 0; i < tree.size(); ++i) {
    auto [lvl, rep] = idx.nearest_center_level(tree.points.row(i).transpose());
    if (rep < 0) continue;
    idx.served_weight(rep) += tree.weights(i);
    bool coincides =
        tree.points.row(i) ==
        tree.points.row(idx.center_ids[static_cast<std::size_t>(rep)]);
    if (!coincides)
      cost += tree.weights(i) *
              pow_z(sqrt_d * std::pow(static_cast<double>(tree.zeta), lvl), z);
  }
  if (tree_cost) *tree_cost = cost;

  // Tree-metric distance to the nearest other center.
  idx.tree_r = Vector::Zero(m);
  for (int c = 0; c < m; ++c) {
    auto row = tree.points.row(center_rows[static_cast<std::size_t>(c)]);
    double r = sqrt_d * static_cast<double>(tree.delta);  // singleton default
    for (int t = 0; t <= tree.levels; ++t) {
      std::uint64_t key = tree.cell_key(row.transpose(), t);
      auto it = cell_count[static_cast<std::size_t>(t)].find(key);
      if (it != cell_count[static_cast<std::size_t>(t)].end() &&
          it->second >= 2) {
        r = sqrt_d * std::pow(static_cast<double>(tree.zeta), t);
        break;
      }
    }
    idx.tree_r(c) = r;
  }

  // Aggregate served weight per occupied cell.
  idx.cell_served.assign(static_cast<std::size_t>(tree.levels) + 1, {});
  for (int c = 0; c < m; ++c) {
    auto row = tree.points.row(center_rows[static_cast<std::size_t>(c)]);
    for (int t = 0; t <= tree.levels; ++t)
      idx.cell_served[static_cast<std::size_t>(t)][tree.cell_key(
          row.transpose(), t)] += idx.served_weight(c);
  }
  return idx;
}

std::vector<SensitivityEstimate> rough_sens(const Dataset& z_set,
                                            const Dataset& batch,
                                            const RoughSensParams& params) {
  if (batch.empty()) return {};
  const Eigen::Index nz = z_set.size();
  const Eigen::Index nb = batch.size();
  const Eigen::Index n = nz + nb;
  const Eigen::Index d = batch.dim();
  const double z = params.z;

  IntMatrix pts(n, d);
  Vector w(n);
  for (Eigen::Index i = 0; i < nz; ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      pts(i, j) = static_cast<std::int64_t>(std::llround(z_set.points(i, j)));
    w(i) = z_set.weights(i);
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      pts(nz + i, j) =
          static_cast<std::int64_t>(std::llround(batch.points(i, j)));
    w(nz + i) = batch.weights(i);
  }
  const double w_total = w.sum();
  const double n_factors =
      params.n_for_factors > 0.0 ? params.n_for_factors : static_cast<double>(n);
  const double kappa =
      std::max(4.0, std::pow(n_factors, params.alpha));
  const std::int64_t zeta = std::max<std::int64_t>(
      2, static_cast<std::int64_t>(std::ceil(std::pow(n_factors, params.iota))));

  std::vector<SensitivityEstimate> out(static_cast<std::size_t>(nb));
  auto floor_clamp = [&](double v, double wx) {
    double lo = wx / (pow_z(2.0, z) * std::max(w_total, wx));
    return std::max(std::min(v, 1.0), std::min(lo, 1.0));
  };

  if (n == 1) {
    out[0] = {1.0, 1.0, SensQuality::kCrude, 1.0};
    return out;
  }

  Rng rng(params.seed ? params.seed : 0xc0ffee);
  TreeBuildOptions topts;
  topts.zeta = zeta;
  topts.kappa = kappa;
  topts.max_retries = params.max_retries;
  topts.with_point_lists = true;
  CrudeQuadTree tree = build_tree_checked(pts, w, topts, rng);

  Rng seed_rng = rng.derive("rough-sens-seed");
  auto centers = tree_adaptive_seed(tree, params.k, z, seed_rng);
  double tree_cost = 0.0;
  TreeCenterIndex cidx = index_centers(tree, centers, z, &tree_cost);

  // Global and runner-up minima of n_c * r_c^z, for O(1) swap estimates.
  double m1 = std::numeric_limits<double>::infinity();
  double m2 = std::numeric_limits<double>::infinity();
  int arg1 = -1;
  for (int c = 0; c < static_cast<int>(centers.size()); ++c) {
    double v = cidx.served_weight(c) * pow_z(cidx.tree_r(c), z);
    if (v < m1) {
      m2 = m1;
      m1 = v;
      arg1 = c;
    } else if (v < m2) {
      m2 = v;
    }
  }

  const double sqrt_d = std::sqrt(static_cast<double>(d));
  const double claimed =
      std::pow(std::max(kappa, tree.margin_ok
                                   ? kappa
                                   : (tree.achieved_margin > 0.0
                                          ? 1.0 / tree.achieved_margin
                                          : kappa * kappa)),
               3.0 * z);

  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::Index i = nz + b;
    const double wx = w(i);
    auto xrow = pts.row(i).transpose();

    auto [u_lvl, u_rep] = cidx.nearest_center_level(xrow);
    double best = 0.0;
    for (int beta = 1; beta <= tree.levels; ++beta) {
      // A serving-center guess exists at this level only if some other mass
      // shares x's cell.
      auto itw = tree.cell_weight[static_cast<std::size_t>(beta)].find(
          tree.cell_key(xrow, beta));
      double occupant =
          itw == tree.cell_weight[static_cast<std::size_t>(beta)].end()
              ? 0.0
              : itw->second;
      if (occupant - wx <= 1e-12 * std::max(1.0, wx)) continue;

      double r_pow = pow_z(sqrt_d * std::pow(static_cast<double>(tree.zeta),
                                             beta),
                           z);
      double psi = std::min(m1, m2);
      if (u_rep >= 0) {
        double ru = cidx.tree_r(u_rep);
        double r_up = sqrt_d * std::pow(static_cast<double>(tree.zeta),
                                        std::max(beta, u_lvl));
        double vu = cidx.served_weight(u_rep) * pow_z(std::min(ru, r_up), z);
        psi = std::min(u_rep == arg1 ? m2 : m1, vu);
        if (!std::isfinite(psi)) psi = vu;  // single center
      } else {
        psi = 0.0;
      }
      double psi_total = tree_cost + psi;
      double n_beta =
          beta >= 1 ? cidx.served_weight_in_cell(xrow, beta - 1) : 0.0;
      double denom = psi_total + n_beta * r_pow;
      double val = denom > 0.0 ? wx * r_pow / denom : 1.0;
      best = std::max(best, val);
    }
    double clamped = floor_clamp(best, wx);
    out[static_cast<std::size_t>(b)] = {clamped, best, SensQuality::kCrude,
                                        claimed};
  }
  return out;
}

}  // namespace streamkit
