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

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamkit {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IntVector = VectorX<std::int64_t>;
using IntMatrix = MatrixX<std::int64_t>;

/// Integer lattice point in {1,...,delta}^d.
using GridPoint = IntVector;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Violated precondition or malformed argument.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(what) {}
};

/// Malformed input data or artifact.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

/// Instance exceeds a guard size (oracle enumerations etc).
class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& what) : Error(what) {}
};

struct WeightedPoint {
  Vector point;
  double weight = 1.0;
};

/// Ordered weighted point set. Points are rows; the grid bound `delta`
/// records the coordinate range of the originating stream.
struct Dataset {
  Matrix points;   // n x d
  Vector weights;  // n
  double delta = 0.0;

  Dataset() = default;
  Dataset(Matrix pts, Vector w, double grid_bound)
      : points(std::move(pts)), weights(std::move(w)), delta(grid_bound) {
    if (points.rows() != weights.size())
      throw ContractError("dataset: points/weights size mismatch");
  }

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  bool empty() const { return points.rows() == 0; }
  double total_weight() const { return weights.size() ? weights.sum() : 0.0; }

  void append(const Eigen::Ref<const Vector>& p, double w) {
    if (points.rows() > 0 && p.size() != points.cols())
      throw ContractError("dataset: dimension mismatch on append");
    points.conservativeResize(points.rows() + 1, p.size());
    points.row(points.rows() - 1) = p.transpose();
    weights.conservativeResize(weights.size() + 1);
    weights(weights.size() - 1) = w;
  }
};

/// Up to k candidate centers (rows), with optional per-center bookkeeping:
/// served_weight = weight of points served by the center under nearest
/// assignment, nearest_other = distance to the closest other center.
struct CenterSet {
  Matrix centers;  // m x d, m <= k
  std::optional<Vector> served_weight;  // n_c
  std::optional<Vector> nearest_other;  // r_c

  CenterSet() = default;
  explicit CenterSet(Matrix c) : centers(std::move(c)) {}

  Eigen::Index size() const { return centers.rows(); }
  Eigen::Index dim() const { return centers.cols(); }
  bool empty() const { return centers.rows() == 0; }
  bool has_bookkeeping() const { return served_weight && nearest_other; }
};

struct ClusteringParams {
  int k = 1;
  double z = 2.0;
  double epsilon = 0.1;
  double delta = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw ContractError("params: k must be >= 1");
    if (z < 1.0) throw ContractError("params: z must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0))
      throw ContractError("params: epsilon must lie in (0,1)");
    if (!(delta > 0.0 && delta < 1.0))
      throw ContractError("params: delta must lie in (0,1)");
  }
};

enum class SensQuality { kExact, kConstantFactor, kCrude };

/// Clamped sensitivity estimate. `raw` keeps the unclamped value for
/// diagnostics; `claimed_factor` is the approximation factor the producing
/// estimator claims.
struct SensitivityEstimate {
  double value = 1.0;  // in (0, 1]
  double raw = 1.0;
  SensQuality quality = SensQuality::kExact;
  double claimed_factor = 1.0;
};

}  // namespace streamkit
