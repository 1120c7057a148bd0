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

#include "streamkit/solvers.hpp"

#include "streamkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace streamkit {
namespace {

// Fenwick tree over nonnegative weights for O(log n) categorical draws.
class WeightIndex {
 public:
  explicit WeightIndex(Eigen::Index n)
      : n_(n), tree_(static_cast<std::size_t>(n) + 1, 0.0),
        raw_(static_cast<std::size_t>(n), 0.0) {}

  void set(Eigen::Index i, double w) {
    double delta = w - raw_[static_cast<std::size_t>(i)];
    if (delta == 0.0) return;
    raw_[static_cast<std::size_t>(i)] = w;
    for (Eigen::Index j = i + 1; j <= n_; j += j & (-j))
      tree_[static_cast<std::size_t>(j)] += delta;
  }

  double get(Eigen::Index i) const { return raw_[static_cast<std::size_t>(i)]; }

  double total() const {
    double s = 0.0;
    for (Eigen::Index j = n_; j > 0; j -= j & (-j))
      s += tree_[static_cast<std::size_t>(j)];
    return s;
  }

  /// Smallest index with prefix sum exceeding target.
  Eigen::Index find(double target) const {
    Eigen::Index idx = 0;
    Eigen::Index mask = 1;
    while ((mask << 1) <= n_) mask <<= 1;
    for (; mask > 0; mask >>= 1) {
      Eigen::Index next = idx + mask;
      if (next <= n_ && tree_[static_cast<std::size_t>(next)] <= target) {
        target -= tree_[static_cast<std::size_t>(next)];
        idx = next;
      }
    }
    return std::min(idx, n_ - 1);
  }

 private:
  Eigen::Index n_;
  std::vector<double> tree_;
  std::vector<double> raw_;
};

template <typename Derived>
std::uint64_t hash_row(const Eigen::MatrixBase<Derived>& row) {
  std::uint64_t h = 0x9ae16a3b2f90404fULL;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    std::uint64_t bits;
    double v = row(j);
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = Rng::mix(h ^ bits);
  }
  return h;
}

std::vector<Eigen::Index> distinct_rows(const Matrix& pts,
                                        Eigen::Index stop_after = -1) {
  std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> seen;
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    auto& bucket = seen[hash_row(pts.row(i))];
    bool dup = false;
    for (Eigen::Index j : bucket)
      if (pts.row(i) == pts.row(j)) {
        dup = true;
        break;
      }
    if (!dup) {
      bucket.push_back(i);
      out.push_back(i);
      if (stop_after > 0 && static_cast<Eigen::Index>(out.size()) > stop_after)
        break;
    }
  }
  return out;
}

}  // namespace

CenterSet adaptive_sampling_seed(const Dataset& data, int k, double z,
                                 Rng& rng, const CrudeQuadTree* tree) {
  if (data.empty()) throw ContractError("adaptive_sampling_seed: empty input");
  std::vector<std::int32_t> rows;
  if (tree) {
    rows = tree_adaptive_seed(*tree, k, z, rng);
  } else {
    const Eigen::Index n = data.size();
    WeightIndex widx(n);
    for (Eigen::Index i = 0; i < n; ++i) widx.set(i, data.weights(i));
    std::vector<double> cur_pow(static_cast<std::size_t>(n));
    bool first = true;
    for (int c = 0; c < k; ++c) {
      double total = widx.total();
      if (total <= 0.0) break;
      Eigen::Index pick = widx.find(rng.uniform() * total);
      rows.push_back(static_cast<std::int32_t>(pick));
      for (Eigen::Index i = 0; i < n; ++i) {
        double p = data.weights(i) *
                   pow_dist_sq((data.points.row(i) - data.points.row(pick))
                                   .squaredNorm(),
                               z);
        if (first) {
          cur_pow[static_cast<std::size_t>(i)] = p;
        } else {
          p = std::min(p, cur_pow[static_cast<std::size_t>(i)]);
          cur_pow[static_cast<std::size_t>(i)] = p;
        }
        widx.set(i, p);
      }
      first = false;
    }
  }
  Matrix centers(static_cast<Eigen::Index>(rows.size()), data.dim());
  for (std::size_t r = 0; r < rows.size(); ++r)
    centers.row(static_cast<Eigen::Index>(r)) = data.points.row(rows[r]);
  return CenterSet(centers);
}

std::vector<std::int32_t> tree_adaptive_seed(const CrudeQuadTree& tree, int k,
                                             double z, Rng& rng) {
  if (tree.cell_points.empty())
    throw ContractError("tree_adaptive_seed: tree lacks point lists");
  const Eigen::Index n = tree.size();
  const double sqrt_d = std::sqrt(static_cast<double>(tree.dim()));
  const double far_pow =
      pow_z(sqrt_d * std::pow(static_cast<double>(tree.zeta), tree.levels + 1),
            z);

  std::vector<int> alpha(static_cast<std::size_t>(n), tree.levels + 1);
  WeightIndex widx(n);
  for (Eigen::Index i = 0; i < n; ++i)
    widx.set(i, tree.weights(i) * far_pow);  // first draw ~ weight

  std::vector<std::unordered_set<std::uint64_t>> done(
      static_cast<std::size_t>(tree.levels) + 1);
  std::vector<std::int32_t> rows;
  for (int c = 0; c < k; ++c) {
    double total = widx.total();
    if (total <= 1e-300) break;
    Eigen::Index pick = widx.find(rng.uniform() * total);
    rows.push_back(static_cast<std::int32_t>(pick));
    for (int t = 0; t <= tree.levels; ++t) {
      std::uint64_t key = tree.cell_key(tree.points.row(pick).transpose(), t);
      if (!done[static_cast<std::size_t>(t)].insert(key).second)
        break;  // cell already had a center; so do all its ancestors
      auto it = tree.cell_points[static_cast<std::size_t>(t)].find(key);
      if (it == tree.cell_points[static_cast<std::size_t>(t)].end()) continue;
      for (std::int32_t i : it->second) {
        if (alpha[static_cast<std::size_t>(i)] <= t) continue;
        alpha[static_cast<std::size_t>(i)] = t;
        double p = t == 0
                       ? 0.0
                       : tree.weights(i) *
                             pow_z(sqrt_d * std::pow(
                                                static_cast<double>(tree.zeta),
                                                t),
                                   z);
        widx.set(i, p);
      }
    }
  }
  return rows;
}

FastKzResult fast_kz_approx(const Dataset& data, const FastKzParams& params) {
  if (data.empty()) throw ContractError("fast_kz_approx: empty input");
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  IntMatrix pts(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      pts(i, j) = static_cast<std::int64_t>(std::llround(data.points(i, j)));

  const double n_f = params.n_for_factors > 0.0 ? params.n_for_factors
                                                : static_cast<double>(n);
  const double alpha = params.alpha > 0.0 ? params.alpha : params.iota;
  Rng rng(params.seed);
  TreeBuildOptions topts;
  topts.zeta = std::max<std::int64_t>(
      2, static_cast<std::int64_t>(std::ceil(std::pow(n_f, params.iota))));
  topts.kappa = std::max(4.0, std::pow(n_f, alpha));
  topts.max_retries = params.max_retries;
  topts.with_point_lists = true;
  CrudeQuadTree tree = build_tree_checked(pts, data.weights, topts, rng);

  Rng seed_rng = rng.derive("fast-kz-seed");
  FastKzResult res;
  res.rows = tree_adaptive_seed(tree, params.k, params.z, seed_rng);
  res.tree_margin_ok = tree.margin_ok;
  double cost = 0.0;
  index_centers(tree, res.rows, params.z, &cost);
  res.cost_estimate = cost;
  Matrix centers(static_cast<Eigen::Index>(res.rows.size()), d);
  for (std::size_t r = 0; r < res.rows.size(); ++r)
    centers.row(static_cast<Eigen::Index>(r)) = data.points.row(res.rows[r]);
  res.centers = CenterSet(centers);
  return res;
}

CenterSet local_search_medoids(const Dataset& data, int k, double z,
                               int max_iters, Rng rng) {
  if (data.empty()) return CenterSet{};
  const Eigen::Index n = data.size();

  auto distinct = distinct_rows(data.points, k);
  if (static_cast<int>(distinct.size()) <= k) {
    Matrix centers(static_cast<Eigen::Index>(distinct.size()), data.dim());
    for (std::size_t r = 0; r < distinct.size(); ++r)
      centers.row(static_cast<Eigen::Index>(r)) = data.points.row(distinct[r]);
    return CenterSet(centers);
  }

  if (max_iters <= 0) {
    double span = std::max(2.0, static_cast<double>(n) *
                                    std::max(2.0, data.delta));
    max_iters = static_cast<int>(std::ceil(2.0 * k * std::log(span)));
  }

  CenterSet seeds = adaptive_sampling_seed(data, k, z, rng);
  std::vector<Eigen::Index> centers;
  {
    // Map seed rows back to indices (seeding returns coordinates).
    std::unordered_set<Eigen::Index> used;
    for (Eigen::Index c = 0; c < seeds.size(); ++c) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (used.count(i)) continue;
        if (data.points.row(i) == seeds.centers.row(c)) {
          centers.push_back(i);
          used.insert(i);
          break;
        }
      }
    }
    // Top up with distinct rows if seeding stopped early.
    for (Eigen::Index i : distinct) {
      if (static_cast<int>(centers.size()) >= k) break;
      if (!used.count(i)) {
        centers.push_back(i);
        used.insert(i);
      }
    }
  }
  const int m = static_cast<int>(centers.size());

  std::vector<double> first(static_cast<std::size_t>(n));
  std::vector<double> second(static_cast<std::size_t>(n));
  std::vector<int> assigned(static_cast<std::size_t>(n));
  double cur_cost = 0.0;
  auto recompute = [&]() {
    cur_cost = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double b1 = std::numeric_limits<double>::infinity();
      double b2 = b1;
      int ba = 0;
      for (int c = 0; c < m; ++c) {
        double p = pow_dist_sq((data.points.row(i) -
                                data.points.row(centers[static_cast<std::size_t>(
                                    c)]))
                                   .squaredNorm(),
                               z);
        if (p < b1) {
          b2 = b1;
          b1 = p;
          ba = c;
        } else if (p < b2) {
          b2 = p;
        }
      }
      first[static_cast<std::size_t>(i)] = b1;
      second[static_cast<std::size_t>(i)] = b2;
      assigned[static_cast<std::size_t>(i)] = ba;
      cur_cost += data.weights(i) * b1;
    }
  };
  recompute();

  const bool exhaustive = n <= 2048;
  std::vector<double> delta(static_cast<std::size_t>(m));
  for (int iter = 0; iter < max_iters; ++iter) {
    if (cur_cost <= 0.0) break;

    std::vector<Eigen::Index> candidates;
    if (exhaustive) {
      candidates.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) candidates.push_back(i);
    } else {
      WeightIndex widx(n);
      for (Eigen::Index i = 0; i < n; ++i)
        widx.set(i, data.weights(i) * first[static_cast<std::size_t>(i)]);
      int want = 4 * k + 64;
      Rng crng = rng.derive("ls-cands", static_cast<std::uint64_t>(iter));
      for (int c = 0; c < want; ++c) {
        double total = widx.total();
        if (total <= 0.0) break;
        Eigen::Index pick = widx.find(crng.uniform() * total);
        candidates.push_back(pick);
        widx.set(pick, 0.0);
      }
    }

    double best_cost = cur_cost;
    Eigen::Index best_p = -1;
    int best_c = -1;
    for (Eigen::Index p : candidates) {
      double base = 0.0;
      std::fill(delta.begin(), delta.end(), 0.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        double dp = pow_dist_sq(
            (data.points.row(i) - data.points.row(p)).squaredNorm(), z);
        double w = data.weights(i);
        double f = first[static_cast<std::size_t>(i)];
        double keep = std::min(f, dp);
        base += w * keep;
        double without =
            std::min(second[static_cast<std::size_t>(i)], dp);
        delta[static_cast<std::size_t>(assigned[static_cast<std::size_t>(i)])] +=
            w * (without - keep);
      }
      for (int c = 0; c < m; ++c) {
        double cost = base + delta[static_cast<std::size_t>(c)];
        if (cost < best_cost) {
          best_cost = cost;
          best_p = p;
          best_c = c;
        }
      }
    }
    if (best_p < 0 || best_cost >= cur_cost * (1.0 - 1e-12)) break;
    centers[static_cast<std::size_t>(best_c)] = best_p;
    recompute();
  }

  Matrix out(m, data.dim());
  for (int c = 0; c < m; ++c)
    out.row(c) = data.points.row(centers[static_cast<std::size_t>(c)]);
  return CenterSet(out);
}

std::pair<SwapCandidate, double> constrained_swap_estimate(
    const CenterSet& c, const Eigen::Ref<const Vector>& x, double z,
    double base_cost) {
  if (c.empty()) throw ContractError("constrained_swap_estimate: no centers");
  if (!c.has_bookkeeping())
    throw ContractError("constrained_swap_estimate: bookkeeping missing");
  const Eigen::Index m = c.size();
  Eigen::Index u = nearest_center(x, c.centers);
  double du = (c.centers.row(u).transpose() - x).norm();

  SwapCandidate best;
  best.psi = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < m; ++j) {
    double r = (*c.nearest_other)(j);
    if (j == u) r = std::min(r, du);
    double v = (*c.served_weight)(j) * pow_z(r, z);
    if (v < best.psi) {
      best.psi = v;
      best.removed_center = j;
    }
  }
  return {best, base_cost + best.psi};
}

std::pair<SwapCandidate, double> constrained_with_center(const Dataset& data,
                                                         const CenterSet& c,
                                                         const Vector& x,
                                                         double z) {
  double base = clustering_cost(data, c, z);
  return constrained_swap_estimate(c, x, z, base);
}

}  // namespace streamkit
