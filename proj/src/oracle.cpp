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

#include "streamkit/oracle.hpp"

#include "streamkit/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace streamkit::oracle {
namespace {

constexpr double kEnumGuard = 1e6;
constexpr double kGridGuard = 1e7;

double binomial(double n, int k) {
  double v = 1.0;
  for (int i = 0; i < k; ++i) v *= (n - i) / (i + 1);
  return v;
}

// Rows of `data` deduplicated exactly; support row -> summed weight not
// needed here (costs are evaluated against the full dataset).
Matrix support_rows(const Dataset& data) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    bool dup = false;
    for (Eigen::Index j : keep) {
      if ((data.points.row(i) - data.points.row(j)).norm() == 0.0) {
        dup = true;
        break;
      }
    }
    if (!dup) keep.push_back(i);
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), data.dim());
  for (std::size_t r = 0; r < keep.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = data.points.row(keep[r]);
  return out;
}

// Calls fn(combination indices) for every size-k subset of {0..n-1}.
template <typename Fn>
void for_each_combination(Eigen::Index n, int k, Fn&& fn) {
  if (k <= 0 || k > n) return;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  while (true) {
    fn(idx);
    int pos = k - 1;
    while (pos >= 0 &&
           idx[static_cast<std::size_t>(pos)] == n - k + pos)
      --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < k; ++j)
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

// dist^z from each dataset point to each candidate row: candidates x points.
Matrix candidate_powers(const Dataset& data, const Matrix& candidates,
                        double z) {
  Matrix powers(candidates.rows(), data.size());
  for (Eigen::Index c = 0; c < candidates.rows(); ++c)
    for (Eigen::Index i = 0; i < data.size(); ++i)
      powers(c, i) = pow_dist_sq(
          (candidates.row(c) - data.points.row(i)).squaredNorm(), z);
  return powers;
}

}  // namespace

std::pair<CenterSet, double> exact_medoids_opt(const Dataset& data, int k,
                                               double z) {
  if (data.empty()) throw ContractError("exact_medoids_opt: empty dataset");
  Matrix support = support_rows(data);
  const Eigen::Index m = support.rows();
  if (k >= m) {
    CenterSet all(support);
    return {all, 0.0};
  }
  if (binomial(static_cast<double>(m), k) > kEnumGuard)
    throw ResourceError("exact_medoids_opt: instance too large");

  Matrix powers = candidate_powers(data, support, z);
  double best = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> best_idx;
  for_each_combination(m, k, [&](const std::vector<Eigen::Index>& idx) {
    double cost = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      double d = powers(idx[0], i);
      for (std::size_t j = 1; j < idx.size(); ++j)
        d = std::min(d, powers(idx[j], i));
      cost += data.weights(i) * d;
    }
    if (cost < best) {
      best = cost;
      best_idx = idx;
    }
  });
  Matrix centers(k, data.dim());
  for (int j = 0; j < k; ++j)
    centers.row(j) = support.row(best_idx[static_cast<std::size_t>(j)]);
  return {CenterSet(centers), best};
}

namespace {

// Max over candidate center tuples (sizes 1..k) of w_x d(x,C)^z / Cost(X,C),
// with zero-denominator candidates contributing w_x / W.
double sensitivity_over_candidates(const Dataset& data, Eigen::Index index,
                                   int k, const Matrix& candidates, double z) {
  const Eigen::Index m = candidates.rows();
  const double wx = data.weights(index);
  const double wtotal = data.total_weight();
  Matrix powers = candidate_powers(data, candidates, z);
  double best = 0.0;
  for (int kk = 1; kk <= std::min<int>(k, static_cast<int>(m)); ++kk) {
    for_each_combination(m, kk, [&](const std::vector<Eigen::Index>& idx) {
      double denom = 0.0;
      double num = 0.0;
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        double d = powers(idx[0], i);
        for (std::size_t j = 1; j < idx.size(); ++j)
          d = std::min(d, powers(idx[j], i));
        denom += data.weights(i) * d;
        if (i == index) num = wx * d;
      }
      double ratio = denom > 0.0 ? num / denom : wx / wtotal;
      best = std::max(best, ratio);
    });
  }
  return best;
}

}  // namespace

double exact_medoids_sensitivity(const Dataset& data, Eigen::Index index,
                                 int k, double z) {
  if (data.empty())
    throw ContractError("exact_medoids_sensitivity: empty dataset");
  if (index < 0 || index >= data.size())
    throw ContractError("exact_medoids_sensitivity: index out of range");
  Matrix support = support_rows(data);
  if (binomial(static_cast<double>(support.rows()), std::min<int>(k, 8)) >
      kEnumGuard)
    throw ResourceError("exact_medoids_sensitivity: instance too large");
  return sensitivity_over_candidates(data, index, k, support, z);
}

GridSensitivity grid_clustering_sensitivity(const Dataset& data,
                                            Eigen::Index index, int k,
                                            double z, double resolution) {
  if (data.empty())
    throw ContractError("grid_clustering_sensitivity: empty dataset");
  if (resolution <= 0.0)
    throw ContractError("grid_clustering_sensitivity: resolution must be > 0");
  const Eigen::Index d = data.dim();
  Vector lo = data.points.colwise().minCoeff().transpose();
  Vector hi = data.points.colwise().maxCoeff().transpose();
  lo.array() -= resolution;
  hi.array() += resolution;

  std::vector<Eigen::Index> steps(static_cast<std::size_t>(d));
  double total = 1.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    steps[static_cast<std::size_t>(j)] =
        static_cast<Eigen::Index>(std::floor((hi(j) - lo(j)) / resolution)) + 1;
    total *= static_cast<double>(steps[static_cast<std::size_t>(j)]);
  }
  if (total > kGridGuard ||
      binomial(total, std::min(k, 4)) > kGridGuard)
    throw ResourceError("grid_clustering_sensitivity: grid too large");

  Eigen::Index n_cells = static_cast<Eigen::Index>(total);
  Matrix candidates(n_cells, d);
  for (Eigen::Index c = 0; c < n_cells; ++c) {
    Eigen::Index rem = c;
    for (Eigen::Index j = 0; j < d; ++j) {
      Eigen::Index s = steps[static_cast<std::size_t>(j)];
      candidates(c, j) = lo(j) + resolution * static_cast<double>(rem % s);
      rem /= s;
    }
  }
  GridSensitivity out;
  out.spacing = resolution;
  out.value = sensitivity_over_candidates(data, index, k, candidates, z);
  return out;
}

LpSensitivity exact_lp_sensitivity(const Matrix& a, Eigen::Index row, double p,
                                   const LpSensitivityOptions& opts) {
  const Eigen::Index n = a.rows();
  const Eigen::Index d = a.cols();
  if (n == 0) throw ContractError("exact_lp_sensitivity: empty matrix");
  if (row < 0 || row >= n)
    throw ContractError("exact_lp_sensitivity: row out of range");
  if (p < 1.0) throw ContractError("exact_lp_sensitivity: p must be >= 1");
  if (d > 6 && p != 2.0)
    throw ResourceError("exact_lp_sensitivity: d > 6 unsupported for p != 2");

  if (a.row(row).norm() == 0.0) return {0.0, 0};

  if (p == 2.0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
    double tol = std::numeric_limits<double>::epsilon() *
                 static_cast<double>(std::max(n, d)) *
                 svd.singularValues()(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()(i) > tol) ++rank;
    return {svd.matrixU().row(row).head(rank).squaredNorm(), 0};
  }

  // Row outside the span of the remaining rows: a direction orthogonal to
  // them but not to a_row pushes the ratio to exactly 1.
  {
    Matrix rest(n - 1, d);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != row) rest.row(r++) = a.row(i);
    if (n == 1) return {1.0, 0};
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(
        rest.transpose());
    Vector proj = rest.transpose() * cod.solve(a.row(row).transpose());
    if ((a.row(row).transpose() - proj).norm() >
        1e-9 * std::max(1.0, a.row(row).norm()))
      return {1.0, 0};
  }

  auto ratio = [&](const Vector& y) -> double {
    double denom = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      denom += std::pow(std::abs(a.row(i).dot(y)), p);
    if (denom <= 0.0) return 0.0;
    return std::pow(std::abs(a.row(row).dot(y)), p) / denom;
  };

  Rng rng(opts.seed);
  Vector best_y = Vector::Zero(d);
  double best = 0.0;
  auto consider = [&](const Vector& y) {
    double v = ratio(y);
    if (v > best) {
      best = v;
      best_y = y;
    }
  };

  // Seed directions: leverage maximizer, the row itself, coordinate axes.
  {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a.transpose() *
                                                                a);
    consider(cod.pseudoInverse() * a.row(row).transpose());
    consider(a.row(row).transpose());
    for (Eigen::Index j = 0; j < d; ++j) consider(Vector::Unit(d, j));
  }
  for (int it = 0; it < opts.directions; ++it) {
    Vector y(d);
    for (Eigen::Index j = 0; j < d; ++j) y(j) = rng.gaussian();
    consider(y);
  }

  // Coordinate-descent polish around the incumbent.
  double scale = std::max(1e-12, best_y.norm());
  for (int round = 0; round < opts.polish_rounds; ++round) {
    double step = scale * std::pow(0.5, 1 + round / 4);
    bool improved = false;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (double s : {step, -step}) {
        Vector y = best_y;
        y(j) += s;
        double v = ratio(y);
        if (v > best) {
          best = v;
          best_y = y;
          improved = true;
        }
      }
    }
    if (!improved && step < 1e-10 * scale) break;
  }
  return {std::min(best, 1.0), opts.directions};
}

}  // namespace streamkit::oracle
