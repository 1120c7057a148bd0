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

#include <cmath>
#include <limits>
#include <vector>

namespace streamkit {

/// Euclidean distance between two vector expressions.
template <typename DerivedA, typename DerivedB>
double dist(const Eigen::MatrixBase<DerivedA>& a,
            const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw ContractError("dist: dimension mismatch");
  return (a.derived().template cast<double>() -
          b.derived().template cast<double>())
      .norm();
}

/// (squared distance)^(z/2), i.e. dist^z from a squared norm.
inline double pow_dist_sq(double sq, double z) {
  if (z == 2.0) return sq;
  if (z == 1.0) return std::sqrt(sq);
  return std::pow(sq, 0.5 * z);
}

inline double pow_z(double d, double z) {
  if (z == 2.0) return d * d;
  if (z == 1.0) return d;
  return std::pow(d, z);
}

/// Index of the nearest row of `centers` to `x`; ties resolve to the lowest
/// index. Returns the squared distance through `best_sq` when non-null.
template <typename DerivedX>
Eigen::Index nearest_center(const Eigen::MatrixBase<DerivedX>& x,
                            const Matrix& centers, double* best_sq = nullptr) {
  if (centers.rows() == 0) throw ContractError("nearest_center: no centers");
  if (x.size() != centers.cols())
    throw ContractError("nearest_center: dimension mismatch");
  Eigen::Index best = 0;
  double bsq = (centers.row(0).transpose() - x.derived().template cast<double>())
                   .squaredNorm();
  for (Eigen::Index j = 1; j < centers.rows(); ++j) {
    double sq =
        (centers.row(j).transpose() - x.derived().template cast<double>())
            .squaredNorm();
    if (sq < bsq) {
      bsq = sq;
      best = j;
    }
  }
  if (best_sq) *best_sq = bsq;
  return best;
}

/// Weighted (k,z)-clustering cost: sum_i w_i * min_c dist(x_i, c)^z.
inline double clustering_cost(const Dataset& data, const CenterSet& centers,
                              double z) {
  if (centers.empty()) throw ContractError("clustering_cost: no centers");
  if (!data.empty() && data.dim() != centers.dim())
    throw ContractError("clustering_cost: dimension mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double sq = 0.0;
    nearest_center(data.points.row(i).transpose(), centers.centers, &sq);
    total += data.weights(i) * pow_dist_sq(sq, z);
  }
  return total;
}

/// Nearest-center assignment, ties broken by lowest center index.
inline std::vector<Eigen::Index> assign_nearest(const Dataset& data,
                                                const CenterSet& centers) {
  if (centers.empty()) throw ContractError("assign_nearest: no centers");
  std::vector<Eigen::Index> out(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i)
    out[static_cast<std::size_t>(i)] =
        nearest_center(data.points.row(i).transpose(), centers.centers);
  return out;
}

/// Fills served weight n_c and nearest-other-center distance r_c. For a
/// singleton center set r_c is the grid diameter sqrt(d)*delta (the
/// worst-case relocation distance when the only center is removed).
inline CenterSet prepare_swap_bookkeeping(const Dataset& data,
                                          const CenterSet& centers) {
  if (centers.empty())
    throw ContractError("prepare_swap_bookkeeping: no centers");
  CenterSet out = centers;
  const Eigen::Index m = centers.size();
  Vector served = Vector::Zero(m);
  auto assign = assign_nearest(data, centers);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    served(assign[static_cast<std::size_t>(i)]) += data.weights(i);

  Vector nearest = Vector::Zero(m);
  if (m == 1) {
    nearest(0) = std::sqrt(static_cast<double>(centers.dim())) * data.delta;
  } else {
    for (Eigen::Index c = 0; c < m; ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index o = 0; o < m; ++o) {
        if (o == c) continue;
        best = std::min(best,
                        (centers.centers.row(c) - centers.centers.row(o)).norm());
      }
      nearest(c) = best;
    }
  }
  out.served_weight = std::move(served);
  out.nearest_other = std::move(nearest);
  return out;
}

}  // namespace streamkit
