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

#include "streamkit/io.hpp"

#include "streamkit/geometry.hpp"
#include "streamkit/rng.hpp"
#include "streamkit/solvers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

namespace streamkit {
namespace {

constexpr char kSckzMagic[4] = {'S', 'C', 'K', 'Z'};

template <typename T>
void put(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) throw DataError("sckz: truncated file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

PointsFile load_csv(std::istream& is, bool weighted) {
  std::vector<std::vector<std::int64_t>> rows;
  std::vector<double> weights;
  std::string line;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> vals;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("csv: non-numeric cell '" + cell + "'");
      }
    }
    if (vals.empty()) continue;
    double w = 1.0;
    if (weighted) {
      if (vals.size() < 2) throw DataError("csv: missing weight column");
      w = vals.back();
      vals.pop_back();
      if (!(w > 0.0)) throw DataError("csv: nonpositive weight");
    }
    if (width == 0) width = vals.size();
    if (vals.size() != width) throw DataError("csv: ragged rows");
    std::vector<std::int64_t> coords(width);
    for (std::size_t j = 0; j < width; ++j) {
      double r = std::llround(vals[j]);
      if (std::abs(vals[j] - r) > 1e-9)
        throw DataError("csv: non-integer coordinate");
      coords[j] = static_cast<std::int64_t>(r);
    }
    rows.push_back(std::move(coords));
    weights.push_back(w);
  }
  PointsFile out;
  out.weighted = weighted;
  out.points.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(width));
  out.weights.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j)
      out.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    out.weights(static_cast<Eigen::Index>(i)) = weights[i];
  }
  return out;
}

}  // namespace

PointsFile load_points(const std::string& path, bool weighted) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open input file: " + path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  if (is.gcount() == 4 && std::memcmp(magic, kSckzMagic, 4) == 0) {
    std::uint32_t d = get<std::uint32_t>(is);
    std::uint64_t n = get<std::uint64_t>(is);
    PointsFile out;
    out.points.resize(static_cast<Eigen::Index>(n), d);
    for (std::uint64_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < d; ++j)
        out.points(static_cast<Eigen::Index>(i), j) = get<std::int64_t>(is);
    out.weights = Vector::Ones(static_cast<Eigen::Index>(n));
    return out;
  }
  is.clear();
  is.seekg(0);
  return load_csv(is, weighted);
}

void write_points_csv(const std::string& path, const IntMatrix& points,
                      const Vector* weights) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open output file: " + path);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (j) os << ',';
      os << points(i, j);
    }
    if (weights) os << ',' << (*weights)(i);
    os << '\n';
  }
}

void write_points_sckz(const std::string& path, const IntMatrix& points) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open output file: " + path);
  os.write(kSckzMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(points.cols()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = 0; j < points.cols(); ++j)
      put<std::int64_t>(os, points(i, j));
}

void write_centers_csv(const std::string& path, const Matrix& centers) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open output file: " + path);
  os.precision(17);
  for (Eigen::Index i = 0; i < centers.rows(); ++i) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) {
      if (j) os << ',';
      os << centers(i, j);
    }
    os << '\n';
  }
}

ClusterEvalReport eval_clustering(const Dataset& original,
                                  const Dataset& coreset, int k, double z,
                                  int random_queries, int ls_queries,
                                  std::uint64_t seed, int threads) {
  if (original.empty()) throw DataError("eval: empty dataset");
  if (!coreset.empty() && coreset.dim() != original.dim())
    throw DataError("eval: artifact/dataset dimension mismatch");

  const Eigen::Index d = original.dim();
  Vector lo = original.points.colwise().minCoeff().transpose();
  Vector hi = original.points.colwise().maxCoeff().transpose();
  double spread = std::max(1.0, (hi - lo).norm());

  Rng rng(Rng::mix(seed ^ 0xe7a1));
  std::vector<Matrix> queries;
  for (int q = 0; q < random_queries; ++q) {
    Matrix c(k, d);
    Rng qrng = rng.derive("query", static_cast<std::uint64_t>(q));
    if (q % 2 == 0) {
      for (int i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
          c(i, j) = lo(j) + qrng.uniform() * (hi(j) - lo(j));
    } else {
      for (int i = 0; i < k; ++i) {
        Eigen::Index pick = static_cast<Eigen::Index>(
            qrng.uniform_int(static_cast<std::uint64_t>(original.size())));
        for (Eigen::Index j = 0; j < d; ++j)
          c(i, j) = original.points(pick, j) +
                    qrng.gaussian() * 0.02 * spread;
      }
    }
    queries.push_back(std::move(c));
  }
  for (int q = 0; q < ls_queries; ++q) {
    Rng qrng = rng.derive("ls-query", static_cast<std::uint64_t>(q));
    Eigen::Index sub = std::min<Eigen::Index>(original.size(), 1500);
    Dataset sample;
    sample.delta = original.delta;
    sample.points.resize(sub, d);
    sample.weights = Vector::Ones(sub);
    for (Eigen::Index i = 0; i < sub; ++i) {
      Eigen::Index pick = static_cast<Eigen::Index>(
          qrng.uniform_int(static_cast<std::uint64_t>(original.size())));
      sample.points.row(i) = original.points.row(pick);
    }
    CenterSet ls = local_search_medoids(sample, k, z, 0, qrng.derive("ls"));
    queries.push_back(ls.centers);
  }

  const int total = static_cast<int>(queries.size());
  std::vector<double> rel(static_cast<std::size_t>(total), 0.0);
  auto work = [&](int begin, int end) {
    for (int q = begin; q < end; ++q) {
      CenterSet c(queries[static_cast<std::size_t>(q)]);
      double exact = clustering_cost(original, c, z);
      double approx = coreset.empty() ? 0.0 : clustering_cost(coreset, c, z);
      double err = exact > 0.0 ? std::abs(approx - exact) / exact
                               : (approx > 0.0 ? 1.0 : 0.0);
      rel[static_cast<std::size_t>(q)] = err;
    }
  };
  threads = std::max(1, threads);
  if (threads == 1) {
    work(0, total);
  } else {
    std::vector<std::thread> pool;
    int chunk = (total + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      int begin = t * chunk;
      int end = std::min(total, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  ClusterEvalReport rep;
  rep.queries = total;
  double sum = 0.0;
  for (int q = 0; q < total; ++q) {
    double e = rel[static_cast<std::size_t>(q)];
    sum += e;
    rep.max_rel_error = std::max(rep.max_rel_error, e);
    if (q < random_queries) {
      if (q % 2 == 0)
        rep.max_rel_error_random = std::max(rep.max_rel_error_random, e);
      else
        rep.max_rel_error_data = std::max(rep.max_rel_error_data, e);
    } else {
      rep.max_rel_error_local_search =
          std::max(rep.max_rel_error_local_search, e);
    }
  }
  rep.mean_rel_error = total > 0 ? sum / total : 0.0;
  return rep;
}

EmbedEvalReport eval_embedding(const Matrix& a, const Matrix& coreset_rows,
                               double p, int directions, std::uint64_t seed) {
  if (a.rows() == 0) throw DataError("eval: empty matrix");
  if (coreset_rows.rows() > 0 && coreset_rows.cols() != a.cols())
    throw DataError("eval: artifact/dataset dimension mismatch");
  EmbedEvalReport rep;
  const Eigen::Index d = a.cols();
  if (p == 2.0) {
    Matrix ga = a.transpose() * a;
    Matrix gm = coreset_rows.rows() > 0
                    ? Matrix(coreset_rows.transpose() * coreset_rows)
                    : Matrix(Matrix::Zero(d, d));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(ga);
    Vector ev = eig_a.eigenvalues();
    double floor = std::max(1e-12 * ev.maxCoeff(), 1e-300);
    Vector inv_sqrt(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      inv_sqrt(i) = ev(i) > floor ? 1.0 / std::sqrt(ev(i)) : 0.0;
    Matrix w = eig_a.eigenvectors() * inv_sqrt.asDiagonal() *
               eig_a.eigenvectors().transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w * gm * w);
    // Directions annihilated by A (zero eigenvalues of the sandwich basis)
    // are outside the row space; skip them.
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev(i) <= floor) continue;
      double v = eig.eigenvalues()(i);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    rep.min_ratio = lo;
    rep.max_ratio = hi;
    rep.directions = 0;
    return rep;
  }
  Rng rng(Rng::mix(seed ^ 0x1be7));
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (int it = 0; it < directions; ++it) {
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = rng.gaussian();
    double na = 0.0;
    Vector ya = a * x;
    for (Eigen::Index i = 0; i < ya.size(); ++i)
      na += std::pow(std::abs(ya(i)), p);
    if (na <= 0.0) continue;
    double nm = 0.0;
    if (coreset_rows.rows() > 0) {
      Vector ym = coreset_rows * x;
      for (Eigen::Index i = 0; i < ym.size(); ++i)
        nm += std::pow(std::abs(ym(i)), p);
    }
    double ratio = nm / na;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  rep.min_ratio = lo;
  rep.max_ratio = hi;
  rep.directions = directions;
  return rep;
}

}  // namespace streamkit
