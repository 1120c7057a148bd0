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

#include "streamkit/subspace.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace streamkit {
namespace {

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
  if (!is) throw DataError("lpe1: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

constexpr char kMagic[4] = {'L', 'P', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

Vector leverage_of(const Matrix& a) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
  double tol = std::numeric_limits<double>::epsilon() *
               static_cast<double>(std::max(a.rows(), a.cols())) *
               (svd.singularValues().size() ? svd.singularValues()(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tol) ++rank;
  Vector out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    out(i) = std::min(1.0, svd.matrixU().row(i).head(rank).squaredNorm());
  return out;
}

}  // namespace

Vector leverage_scores(const Matrix& a) {
  if (a.rows() == 0) throw ContractError("leverage_scores: empty matrix");
  return leverage_of(a);
}

LewisState lewis_weights(const Matrix& a, double p, double tol,
                         int max_iters) {
  if (p < 1.0) throw ContractError("lewis_weights: p must be >= 1");
  if (a.rows() == 0) throw ContractError("lewis_weights: empty matrix");
  const Eigen::Index n = a.rows();
  const double e = 0.5 - 1.0 / p;

  LewisState state;
  state.p = p;
  state.weights = Vector::Ones(n);

  auto step = [&](const Vector& w) -> Vector {
    Matrix scaled = a;
    for (Eigen::Index i = 0; i < n; ++i)
      scaled.row(i) *= std::pow(std::max(w(i), 1e-300), e);
    return leverage_of(scaled);
  };

  if (p == 2.0) {
    state.weights = leverage_of(a);
    state.residual = 0.0;
    state.converged = true;
    state.iterations = 1;
    return state;
  }

  // Contractive update w <- l^{p/2} w^{1-p/2} (same fixed point as the
  // definition; for p < 4 this is the standard convergent iteration). For
  // p >= 4 the exponent is halved as a geometric damping.
  const double theta = p < 4.0 ? p / 2.0 : p / 4.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector lev = step(state.weights);
    Vector next(n);
    for (Eigen::Index i = 0; i < n; ++i)
      next(i) = std::pow(std::max(lev(i), 1e-300), theta) *
                std::pow(std::max(state.weights(i), 1e-300), 1.0 - theta);
    double rel = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double denom = std::max(state.weights(i), 1e-300);
      rel = std::max(rel, std::abs(next(i) - state.weights(i)) / denom);
    }
    state.weights = next;
    state.iterations = it + 1;
    if (rel < tol) {
      state.converged = true;
      break;
    }
  }
  // Honest fixed-point certificate, recomputed once at exit.
  Vector fp = step(state.weights);
  double res = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    res = std::max(res, std::abs(fp(i) - state.weights(i)) /
                            std::max(state.weights(i), 1e-300));
  state.residual = res;
  if (res > tol * 10.0) state.converged = false;
  return state;
}

PreconditionResult precondition(const Matrix& m, double p,
                                std::uint64_t seed) {
  if (m.rows() == 0) throw ContractError("precondition: empty matrix");
  const Eigen::Index d = m.cols();

  Matrix work = m;
  if (p != 2.0) {
    LewisState lw = lewis_weights(m, p, 1e-8, 100);
    double e = 0.5 - 1.0 / p;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      work.row(i) *= std::pow(std::max(lw.weights(i), 1e-300), e);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(work);
  Matrix r = qr.matrixR()
                 .topLeftCorner(d, d)
                 .template triangularView<Eigen::Upper>();
  PreconditionResult out;
  double diag_max = r.diagonal().cwiseAbs().maxCoeff();
  double floor = std::max(1e-12 * diag_max, 1e-300);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (std::abs(r(j, j)) < floor) {
      r(j, j) = r(j, j) < 0 ? -floor : floor;
      out.full_rank = false;
    }
  }
  Matrix r_inv =
      r.template triangularView<Eigen::Upper>().solve(Matrix::Identity(d, d));
  Matrix perm = qr.colsPermutation();
  out.p = perm * r_inv;
  out.p_inv = r * perm.transpose();

  Matrix mp = m * out.p;
  if (p == 2.0) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(mp);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    double smax = svd.singularValues()(0);
    out.condition = smin > 0.0 ? smax / smin
                               : std::numeric_limits<double>::infinity();
  } else {
    // Direction-sampled Lp conditioning of M P.
    Rng rng(seed);
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    const int dirs = 2000;
    for (int it = 0; it < dirs; ++it) {
      Vector x(d);
      for (Eigen::Index j = 0; j < d; ++j) x(j) = rng.gaussian();
      double nx = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) nx += std::pow(std::abs(x(j)), p);
      Vector y = mp * x;
      double ny = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i)
        ny += std::pow(std::abs(y(i)), p);
      if (nx <= 0.0) continue;
      double ratio = std::pow(ny / nx, 1.0 / p);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    out.condition = lo > 0.0 ? hi / lo
                             : std::numeric_limits<double>::infinity();
  }
  out.cond_exponent =
      std::log(std::max(out.condition, 1.0)) /
      std::log(std::max(2.0, static_cast<double>(d)));
  return out;
}

EncodingSchedule row_encoding_schedule(double epsilon, double p, int d,
                                       double entry_bound, double n_bound,
                                       double c) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ContractError("row_encoding_schedule: epsilon out of range");
  constexpr std::int32_t kMaxExpClamp = 30000;
  double span = std::max(4.0, n_bound * std::max(entry_bound, 2.0));
  double eps_prime =
      std::pow(epsilon, 2.0) /
      (c * std::pow(static_cast<double>(std::max(1, d)), std::max(1.0, p / 2.0)) *
       std::log2(span));
  // Image entries after preconditioning stay within poly(n M d); clamp the
  // exponent range into the serialized i16.
  double mag = std::max(entry_bound, 2.0) * std::max(n_bound, 2.0) *
               std::max(2.0, static_cast<double>(d));
  double eps_floor = std::exp(std::log(mag * mag) / kMaxExpClamp) - 1.0;
  eps_prime = std::min(0.5, std::max(eps_prime, eps_floor));

  EncodingSchedule s;
  s.eps_prime = eps_prime;
  s.exp_clamp = static_cast<std::int32_t>(
      std::ceil(std::log(mag * mag) / std::log1p(eps_prime)));
  s.weight_exp_clamp = s.exp_clamp;  // scale exponents share the range
  return s;
}

EncodedRowSet encode_rows(const Matrix& rows, const Vector& scales,
                          const Matrix& anchor, const PreconditionResult& pre,
                          const EncodingSchedule& schedule, double p) {
  const Eigen::Index d = pre.p.rows();
  if (rows.cols() != d) throw ContractError("encode_rows: dimension mismatch");
  EncodedRowSet out;
  out.anchor = anchor;
  out.precond = pre.p;
  out.p = p;
  out.eps_prime = schedule.eps_prime;
  out.exp_clamp = schedule.exp_clamp;
  out.scale_exp_clamp = schedule.weight_exp_clamp;
  out.records.reserve(static_cast<std::size_t>(rows.rows()));

  const double log_base = std::log1p(schedule.eps_prime);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Vector image = (rows.row(i) * pre.p).transpose();
    RowCode code;
    code.entries.resize(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
      double v = image(j);
      OffsetCode oc;
      if (v != 0.0) {
        long e = std::lround(std::log(std::abs(v)) / log_base);
        if (e >= -schedule.exp_clamp) {
          oc.sign = v > 0.0 ? 1 : -1;
          oc.exponent = static_cast<std::int16_t>(
              std::clamp<long>(e, -schedule.exp_clamp, schedule.exp_clamp));
        }
      }
      code.entries[static_cast<std::size_t>(j)] = oc;
    }
    double s = scales.size() > i ? scales(i) : 1.0;
    if (!(s > 0.0)) throw ContractError("encode_rows: nonpositive scale");
    code.scale_exponent = static_cast<std::int32_t>(
        std::clamp<long>(std::lround(std::log(s) / log_base),
                         -schedule.weight_exp_clamp,
                         schedule.weight_exp_clamp));
    out.records.push_back(std::move(code));
  }
  return out;
}

Matrix decode_rows(const EncodedRowSet& encoded) {
  const Eigen::Index d = encoded.dim();
  Matrix inv = encoded.precond.inverse();
  Matrix out(static_cast<Eigen::Index>(encoded.records.size()), d);
  const double log_base = std::log1p(encoded.eps_prime);
  Vector image(d);
  for (std::size_t r = 0; r < encoded.records.size(); ++r) {
    const RowCode& code = encoded.records[r];
    if (static_cast<Eigen::Index>(code.entries.size()) != d)
      throw DataError("decode_rows: malformed record");
    for (Eigen::Index j = 0; j < d; ++j) {
      const OffsetCode& oc = code.entries[static_cast<std::size_t>(j)];
      image(j) = oc.sign == 0 ? 0.0 : oc.sign * std::exp(oc.exponent * log_base);
    }
    double scale = std::exp(code.scale_exponent * log_base);
    out.row(static_cast<Eigen::Index>(r)) = scale * (image.transpose() * inv);
  }
  return out;
}

void write_lpe1(std::ostream& os, const EncodedRowSet& encoded) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(encoded.dim()));
  put<double>(os, encoded.p);
  put<double>(os, encoded.eps_prime);
  put<std::int32_t>(os, encoded.exp_clamp);
  put<std::int32_t>(os, encoded.scale_exp_clamp);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(encoded.anchor.rows()));
  put<std::uint64_t>(os, encoded.records.size());
  for (Eigen::Index i = 0; i < encoded.anchor.rows(); ++i)
    for (Eigen::Index j = 0; j < encoded.anchor.cols(); ++j)
      put<double>(os, encoded.anchor(i, j));
  for (Eigen::Index i = 0; i < encoded.precond.rows(); ++i)
    for (Eigen::Index j = 0; j < encoded.precond.cols(); ++j)
      put<double>(os, encoded.precond(i, j));
  for (const RowCode& code : encoded.records) {
    for (const OffsetCode& oc : code.entries) {
      put<std::int8_t>(os, oc.sign);
      put<std::int16_t>(os, oc.exponent);
    }
    put<std::int32_t>(os, code.scale_exponent);
  }
}

EncodedRowSet read_lpe1(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("lpe1: bad magic");
  if (get<std::uint32_t>(is) != kVersion)
    throw DataError("lpe1: unsupported version");
  std::uint32_t d = get<std::uint32_t>(is);
  EncodedRowSet out;
  out.p = get<double>(is);
  out.eps_prime = get<double>(is);
  out.exp_clamp = get<std::int32_t>(is);
  out.scale_exp_clamp = get<std::int32_t>(is);
  std::uint64_t anchor_rows = get<std::uint64_t>(is);
  std::uint64_t records = get<std::uint64_t>(is);
  out.anchor.resize(static_cast<Eigen::Index>(anchor_rows), d);
  for (std::uint64_t i = 0; i < anchor_rows; ++i)
    for (std::uint32_t j = 0; j < d; ++j)
      out.anchor(static_cast<Eigen::Index>(i), j) = get<double>(is);
  out.precond.resize(d, d);
  for (std::uint32_t i = 0; i < d; ++i)
    for (std::uint32_t j = 0; j < d; ++j) out.precond(i, j) = get<double>(is);
  out.records.resize(records);
  for (std::uint64_t r = 0; r < records; ++r) {
    RowCode& code = out.records[r];
    code.entries.resize(d);
    for (std::uint32_t j = 0; j < d; ++j) {
      code.entries[j].sign = get<std::int8_t>(is);
      code.entries[j].exponent = get<std::int16_t>(is);
      if (code.entries[j].sign == 0 && code.entries[j].exponent != 0)
        throw DataError("lpe1: nonzero exponent under zero sentinel");
    }
    code.scale_exponent = get<std::int32_t>(is);
  }
  return out;
}

LeverageSketch make_leverage_sketch(const Matrix& z_root_inv, int trials,
                                    Rng& rng) {
  const Eigen::Index d = z_root_inv.rows();
  LeverageSketch sketch;
  sketch.rows.resize(trials, d);
  Vector g(d);
  for (int t = 0; t < trials; ++t) {
    for (Eigen::Index j = 0; j < d; ++j) g(j) = rng.gaussian();
    sketch.rows.row(t) = (g.transpose() * z_root_inv);
  }
  return sketch;
}

double crude_leverage_sketch(const LeverageSketch& sketch,
                             const Eigen::Ref<const Vector>& a) {
  if (a.squaredNorm() == 0.0) return 0.0;
  Vector vals = (sketch.rows * a).array().square();
  std::vector<double> v(vals.data(), vals.data() + vals.size());
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

double crude_lp_sensitivity(double crude_leverage, double p, double n_bound) {
  double xi = std::sqrt(std::max(0.0, crude_leverage));
  double n = std::max(2.0, n_bound);
  if (p <= 2.0) return std::min(1.0, std::pow(xi, p));
  return std::min(1.0, std::pow(xi, p) * std::pow(n, p / 2.0 - 1.0));
}

Vector online_lewis_weights(const Matrix& a, double p) {
  Vector out(a.rows());
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    LewisState state = lewis_weights(a.topRows(t + 1), p, 1e-9, 200);
    out(t) = state.weights(t);
  }
  return out;
}

std::vector<SampledRow> online_lewis_sample(
    Eigen::Index n, double p,
    const std::function<double(Eigen::Index)>& estimator, double lambda,
    Rng& rng) {
  std::vector<SampledRow> kept;
  for (Eigen::Index t = 0; t < n; ++t) {
    double pt = std::min(1.0, lambda * std::max(0.0, estimator(t)));
    if (pt <= 0.0) continue;
    if (rng.bernoulli(pt))
      kept.push_back({t, std::pow(1.0 / pt, 1.0 / p), pt});
  }
  return kept;
}

double EmbedConfig::lambda(int d) const {
  double base = static_cast<double>(d) / (epsilon * epsilon);
  return lambda_scale * base * std::log2(std::max(4.0, static_cast<double>(d))) *
         std::log2(std::max(4.0, n_bound));
}

Eigen::Index EmbedConfig::reduce_target(int d) const {
  if (block_size > 0) return block_size;
  double eps2 = epsilon / 4.0;
  double m = reduce_c * std::pow(static_cast<double>(d), std::max(1.0, p / 2.0)) *
             (std::log2(std::max(4.0, static_cast<double>(d))) +
              std::log2(1.0 / std::max(delta, 1e-12))) /
             (eps2 * eps2);
  return static_cast<Eigen::Index>(
      std::min(1e7, std::max(static_cast<double>(2 * d), std::ceil(m))));
}

EmbedPipeline::EmbedPipeline(const EmbedConfig& config)
    : config_(config), rng_(config.seed) {
  if (config_.p < 1.0) throw ContractError("embed: p must be >= 1");
  if (!(config_.epsilon > 0.0 && config_.epsilon < 1.0))
    throw ContractError("embed: epsilon must lie in (0,1)");
}

void EmbedPipeline::ensure_setup(Eigen::Index d) {
  if (dim_ > 0) {
    if (d != dim_) throw DataError("embed: dimension changed mid-stream");
    return;
  }
  dim_ = d;
  lambda_ = config_.lambda(static_cast<int>(d));
  inflation_ = config_.crude_inflation > 0.0
                   ? config_.crude_inflation
                   : std::pow(std::max(2.0, config_.n_bound),
                              2.0 * config_.alpha) *
                         static_cast<double>(d);
  batch_size_ = config_.batch_size > 0 ? config_.batch_size : d;
  block_size_ = config_.reduce_target(static_cast<int>(d));
}

Matrix EmbedPipeline::decoded_union(Vector* scales_out) const {
  std::vector<Matrix> parts;
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < buckets_.size(); ++l) {
    if (!bucket_live_[l]) continue;
    parts.push_back(decode_rows(buckets_[l]));
    total += parts.back().rows();
  }
  total += static_cast<Eigen::Index>(buffer_rows_.size());
  Matrix out(total, dim_);
  Vector scales = Vector::Ones(total);
  Eigen::Index r = 0;
  for (const Matrix& part : parts) {
    out.middleRows(r, part.rows()) = part;
    r += part.rows();
  }
  for (std::size_t i = 0; i < buffer_rows_.size(); ++i) {
    out.row(r) = buffer_rows_[i].transpose() * buffer_scales_[i];
    ++r;
  }
  if (scales_out) *scales_out = scales;
  return out;
}

void EmbedPipeline::refresh_anchor(const Matrix& decoded,
                                   const Vector& /*scales*/) {
  ++generation_;
  const Eigen::Index d = dim_;
  Eigen::Index target = config_.anchor_rows > 0
                            ? config_.anchor_rows
                            : 4 * d;
  if (decoded.rows() <= target) {
    anchor_ = decoded;
  } else {
    // Lewis-weight subsample as the constant-factor anchor embedding.
    LewisState lw = lewis_weights(decoded, config_.p, 1e-4, 40);
    double total = lw.weights.sum();
    if (!lw.converged) ++metrics_.lewis_unconverged;
    Rng arng = rng_.derive("anchor-sample", generation_);
    std::vector<Eigen::Index> kept;
    std::vector<double> scale;
    for (Eigen::Index i = 0; i < decoded.rows(); ++i) {
      double pr = std::min(
          1.0, static_cast<double>(target) * lw.weights(i) / total);
      if (pr > 0.0 && arng.bernoulli(pr)) {
        kept.push_back(i);
        scale.push_back(std::pow(1.0 / pr, 1.0 / config_.p));
      }
    }
    if (kept.empty()) {
      anchor_ = decoded;
    } else {
      anchor_.resize(static_cast<Eigen::Index>(kept.size()), d);
      for (std::size_t i = 0; i < kept.size(); ++i)
        anchor_.row(static_cast<Eigen::Index>(i)) =
            decoded.row(kept[i]) * scale[i];
    }
  }

  pre_ = precondition(anchor_, config_.p,
                      rng_.derive("precond", generation_).next_u64());
  // Z = (B^T B)^{-1/2} through a symmetric eigen-decomposition.
  Matrix gram = anchor_.transpose() * anchor_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Vector ev = eig.eigenvalues();
  double floor = std::max(1e-12 * ev.maxCoeff(), 1e-300);
  Vector inv_sqrt(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    inv_sqrt(i) = 1.0 / std::sqrt(std::max(ev(i), floor));
  Matrix z = eig.eigenvectors() * inv_sqrt.asDiagonal() *
             eig.eigenvectors().transpose();
  Rng srng = rng_.derive("sketch", generation_);
  sketch_ = make_leverage_sketch(z, config_.crude_trials, srng);
}

void EmbedPipeline::update(const Eigen::Ref<const IntVector>& row) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_setup(row.size());
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (std::abs(static_cast<double>(row(j))) > config_.entry_bound)
      throw DataError("embed: entry outside [-M, M]");

  Vector x = row.cast<double>();
  double norm_sq = x.squaredNorm();
  ++metrics_.processed;

  double crude_p = 1.0;
  if (config_.crude_filter && generation_ > 0 && norm_sq > 0.0) {
    double lev = crude_leverage_sketch(sketch_, x);
    double s = crude_lp_sensitivity(lev, config_.p, config_.n_bound);
    // Deterministic floor: leverage >= ||a||^2 / (||A||_F^2 + ||a||^2).
    double lev_floor = norm_sq / (frob_sq_ + norm_sq);
    s = std::max(s, crude_lp_sensitivity(lev_floor, config_.p,
                                         config_.n_bound) /
                        std::max(2.0, config_.n_bound));
    crude_p = std::min(1.0, lambda_ * inflation_ * s);
  }
  frob_sq_ += norm_sq;

  if (norm_sq > 0.0) {
    Rng crng = rng_.derive("embed-crude", metrics_.processed);
    if (crude_p >= 1.0 || crng.bernoulli(crude_p)) {
      ++metrics_.crude_kept;
      refined_queue_.push_back({std::move(x), crude_p});
      if (static_cast<Eigen::Index>(refined_queue_.size()) >= batch_size_)
        process_refined();
    }
  }

  auto t1 = std::chrono::steady_clock::now();
  std::uint64_t ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  metrics_.update_ns_total += ns;
  int bucket = 0;
  std::uint64_t v = ns;
  while (v > 1 &&
         bucket + 1 < static_cast<int>(metrics_.update_ns_histogram.size())) {
    v >>= 1;
    ++bucket;
  }
  ++metrics_.update_ns_histogram[static_cast<std::size_t>(bucket)];
}

void EmbedPipeline::process_refined() {
  const std::size_t nb = refined_queue_.size();
  Matrix core = decoded_union(nullptr);
  Matrix stacked(core.rows() + static_cast<Eigen::Index>(nb), dim_);
  if (core.rows() > 0) stacked.topRows(core.rows()) = core;
  for (std::size_t i = 0; i < nb; ++i)
    stacked.row(core.rows() + static_cast<Eigen::Index>(i)) =
        refined_queue_[i].row.transpose();

  LewisState lw = lewis_weights(stacked, config_.p, 1e-4, 50);
  if (!lw.converged && config_.p != 2.0) ++metrics_.lewis_unconverged;

  Rng rrng = rng_.derive("embed-refined", metrics_.processed);
  for (std::size_t i = 0; i < nb; ++i) {
    double sigma = lw.weights(core.rows() + static_cast<Eigen::Index>(i));
    double target = std::min(1.0, lambda_ * sigma);
    double pr = std::min(1.0, target / refined_queue_[i].crude_p);
    if (pr > 0.0 && rrng.bernoulli(pr)) {
      ++metrics_.refined_kept;
      double prob = refined_queue_[i].crude_p * pr;
      buffer_rows_.push_back(refined_queue_[i].row);
      buffer_scales_.push_back(std::pow(1.0 / prob, 1.0 / config_.p));
      if (static_cast<Eigen::Index>(buffer_rows_.size()) >= block_size_)
        flush_block();
    }
  }
  refined_queue_.clear();
}

void EmbedPipeline::flush_block() {
  // Collect the buffer plus all colliding buckets, reduce by Lewis-weight
  // sampling, refresh the global anchor, and encode at the next free level.
  Matrix carry(static_cast<Eigen::Index>(buffer_rows_.size()), dim_);
  for (std::size_t i = 0; i < buffer_rows_.size(); ++i)
    carry.row(static_cast<Eigen::Index>(i)) =
        buffer_rows_[i].transpose() * buffer_scales_[i];
  buffer_rows_.clear();
  buffer_scales_.clear();

  std::size_t level = 0;
  while (level < buckets_.size() && bucket_live_[level]) {
    Matrix part = decode_rows(buckets_[level]);
    Matrix merged(carry.rows() + part.rows(), dim_);
    merged.topRows(carry.rows()) = carry;
    merged.bottomRows(part.rows()) = part;
    carry = std::move(merged);
    bucket_live_[level] = false;
    buckets_[level] = EncodedRowSet{};
    ++level;
  }
  if (level >= buckets_.size()) {
    buckets_.resize(level + 1);
    bucket_live_.resize(level + 1, false);
  }

  ++metrics_.reduce_events;
  Matrix reduced = carry;
  Vector scales = Vector::Ones(carry.rows());
  if (carry.rows() > block_size_) {
    LewisState lw = lewis_weights(carry, config_.p, 1e-4, 50);
    if (!lw.converged && config_.p != 2.0) ++metrics_.lewis_unconverged;
    double total = lw.weights.sum();
    Rng srng = rng_.derive("embed-reduce", metrics_.reduce_events);
    std::vector<Eigen::Index> kept;
    std::vector<double> sc;
    for (Eigen::Index i = 0; i < carry.rows(); ++i) {
      double pr = std::min(1.0, static_cast<double>(block_size_) *
                                    lw.weights(i) / total);
      if (pr > 0.0 && srng.bernoulli(pr)) {
        kept.push_back(i);
        sc.push_back(std::pow(1.0 / pr, 1.0 / config_.p));
      }
    }
    reduced.resize(static_cast<Eigen::Index>(kept.size()), dim_);
    scales.resize(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      reduced.row(static_cast<Eigen::Index>(i)) = carry.row(kept[i]);
      scales(static_cast<Eigen::Index>(i)) = sc[i];
    }
  }

  // Scales are folded into the stored rows; the record scale exponent then
  // only carries the sampling rescale of future reductions.
  Matrix scaled_rows(reduced.rows(), dim_);
  for (Eigen::Index i = 0; i < reduced.rows(); ++i)
    scaled_rows.row(i) = reduced.row(i) * scales(i);

  Matrix full = scaled_rows;
  for (std::size_t l = 0; l < buckets_.size(); ++l) {
    if (!bucket_live_[l]) continue;
    Matrix part = decode_rows(buckets_[l]);
    Matrix merged(full.rows() + part.rows(), dim_);
    merged.topRows(full.rows()) = full;
    merged.bottomRows(part.rows()) = part;
    full = std::move(merged);
  }
  refresh_anchor(full, Vector());

  EncodingSchedule schedule =
      row_encoding_schedule(config_.epsilon, config_.p,
                            static_cast<int>(dim_), config_.entry_bound,
                            config_.n_bound, config_.encode_c);
  buckets_[level] = encode_rows(scaled_rows, Vector::Ones(scaled_rows.rows()),
                                anchor_, *pre_, schedule, config_.p);
  bucket_live_[level] = true;

  std::uint64_t bits = 0;
  std::uint64_t anchor_bits = 0;
  for (std::size_t l = 0; l < buckets_.size(); ++l) {
    if (!bucket_live_[l]) continue;
    const EncodedRowSet& b = buckets_[l];
    std::uint64_t exp_range = 2u * static_cast<std::uint64_t>(b.exp_clamp) + 1u;
    std::uint64_t per_row = static_cast<std::uint64_t>(dim_) *
                                (2u + static_cast<std::uint64_t>(std::ceil(
                                          std::log2(static_cast<double>(
                                              exp_range))))) +
                            32u;
    bits += per_row * b.records.size();
    anchor_bits += static_cast<std::uint64_t>(b.anchor.rows()) *
                       static_cast<std::uint64_t>(dim_) * 64u +
                   static_cast<std::uint64_t>(dim_) *
                       static_cast<std::uint64_t>(dim_) * 64u;
  }
  metrics_.peak_record_bits = std::max(metrics_.peak_record_bits, bits);
  metrics_.anchor_bits = anchor_bits;
}

Matrix EmbedPipeline::current_rows() const {
  Matrix decoded = decoded_union(nullptr);
  Eigen::Index extra = static_cast<Eigen::Index>(refined_queue_.size());
  if (extra == 0) return decoded;
  Matrix out(decoded.rows() + extra, dim_);
  if (decoded.rows() > 0) out.topRows(decoded.rows()) = decoded;
  for (std::size_t i = 0; i < refined_queue_.size(); ++i)
    out.row(decoded.rows() + static_cast<Eigen::Index>(i)) =
        refined_queue_[i].row.transpose() *
        std::pow(1.0 / refined_queue_[i].crude_p, 1.0 / config_.p);
  return out;
}

EncodedRowSet EmbedPipeline::current_rowset() const {
  Matrix rows = current_rows();
  EncodingSchedule schedule =
      row_encoding_schedule(config_.epsilon, config_.p, static_cast<int>(dim_),
                            config_.entry_bound, config_.n_bound,
                            config_.encode_c);
  Matrix anchor = anchor_;
  PreconditionResult pre;
  if (pre_) {
    pre = *pre_;
  } else {
    if (rows.rows() == 0) {
      EncodedRowSet empty;
      empty.precond = Matrix::Identity(dim_ > 0 ? dim_ : 1,
                                       dim_ > 0 ? dim_ : 1);
      empty.p = config_.p;
      empty.eps_prime = schedule.eps_prime;
      empty.exp_clamp = schedule.exp_clamp;
      empty.scale_exp_clamp = schedule.weight_exp_clamp;
      return empty;
    }
    anchor = rows;
    pre = precondition(rows, config_.p, Rng(config_.seed).next_u64());
  }
  return encode_rows(rows, Vector::Ones(rows.rows()), anchor, pre, schedule,
                     config_.p);
}

}  // namespace streamkit
