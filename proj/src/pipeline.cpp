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

#include "streamkit/pipeline.hpp"

#include "streamkit/geometry.hpp"
#include "streamkit/sensitivity.hpp"
#include "streamkit/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <istream>
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
  if (!is) throw DataError("pipe: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

constexpr char kMagic[4] = {'P', 'I', 'P', 'E'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

JlTransform make_jl_transform(Eigen::Index d, Eigen::Index m, Rng& rng) {
  JlTransform t;
  t.map.resize(m, d);
  double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < d; ++j) t.map(i, j) = scale * rng.gaussian();
  return t;
}

double PipelineConfig::lambda(int effective_dim) const {
  double base = static_cast<double>(effective_dim) * params.k /
                (params.epsilon * params.epsilon);
  double lg = std::log(std::max(
      4.0, n_bound * std::max(grid_delta, 2.0) / params.epsilon));
  return lambda_scale * base * lg;
}

ClusteringPipeline::ClusteringPipeline(const PipelineConfig& config)
    : config_(config), rng_(config.params.seed) {
  config_.params.validate();
  if (config_.grid_delta < 1.0)
    throw ContractError("pipeline: grid_delta must be >= 1");
  batch_size_ =
      config_.batch_size > 0 ? config_.batch_size : config_.params.k;
}

void ClusteringPipeline::ensure_stream_setup(Eigen::Index d) {
  if (dim_ > 0) {
    if (d != dim_) throw DataError("pipeline: dimension changed mid-stream");
    return;
  }
  dim_ = d;
  bool use_jl = false;
  Eigen::Index m = static_cast<Eigen::Index>(
      std::ceil(8.0 * std::log(std::max(4.0, config_.n_bound))));
  switch (config_.jl) {
    case JlMode::kOn:
      use_jl = m < d;
      break;
    case JlMode::kOff:
      use_jl = false;
      break;
    case JlMode::kAuto:
      use_jl = static_cast<double>(d) > 8.0 * std::log(std::max(
                                              4.0, config_.n_bound));
      break;
  }
  if (use_jl) {
    Rng jl_rng = rng_.derive("jl");
    jl_ = make_jl_transform(d, m, jl_rng);
    filter_dim_ = m;
    // Projected norms stay within ~1.5x of the originals; quantized filter
    // coordinates get re-centered into a positive box of this side.
    filter_delta_ = std::ceil(
        3.0 * std::sqrt(static_cast<double>(d)) * config_.grid_delta) + 2.0;
    metrics_.jl_dim = static_cast<int>(m);
  } else {
    filter_dim_ = d;
    filter_delta_ = config_.grid_delta;
    metrics_.jl_dim = 0;
  }
  lambda_ = config_.lambda(static_cast<int>(filter_dim_));
  double alpha = config_.alpha > 0.0 ? config_.alpha : config_.iota;
  inflation_ = config_.crude_inflation > 0.0
                   ? config_.crude_inflation
                   : std::pow(std::max(2.0, config_.n_bound), alpha);

  MergeReduceConfig mrc;
  mrc.k = config_.params.k;
  mrc.z = config_.params.z;
  mrc.epsilon = config_.params.epsilon;
  mrc.delta = config_.params.delta;
  mrc.grid_delta = config_.grid_delta;
  mrc.n_bound = config_.n_bound;
  mrc.block_size = config_.mr_block_size;
  mrc.reduce_c = config_.reduce_c;
  mrc.height_bound = config_.mr_height_bound;
  mrc.encode_c = config_.encode_c;
  mrc.seed = Rng::mix(config_.params.seed ^ 0x33aa55);
  mr_.emplace(mrc);

  filter_coreset_.delta = filter_delta_;
  filter_coreset_.points.resize(0, filter_dim_);
  filter_coreset_.weights.resize(0);
}

IntVector ClusteringPipeline::to_filter_space(
    const Eigen::Ref<const IntVector>& x) const {
  if (!jl_) return x;
  Vector proj = jl_->project(x.cast<double>());
  IntVector out(filter_dim_);
  std::int64_t half =
      static_cast<std::int64_t>(filter_delta_ / 2.0);
  std::int64_t hi = static_cast<std::int64_t>(filter_delta_);
  for (Eigen::Index j = 0; j < filter_dim_; ++j) {
    std::int64_t v = static_cast<std::int64_t>(std::llround(proj(j))) + half;
    out(j) = std::clamp<std::int64_t>(v, 1, hi);
  }
  return out;
}

void ClusteringPipeline::update(const Eigen::Ref<const IntVector>& x) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_stream_setup(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    if (x(j) < 1 || static_cast<double>(x(j)) > config_.grid_delta)
      throw DataError("pipeline: coordinate outside [1, grid_delta]");

  if (static_cast<double>(metrics_.processed) + 1.0 > config_.n_bound) {
    config_.n_bound *= 2.0;  // auto-doubling rebuild event
    lambda_ = config_.lambda(static_cast<int>(filter_dim_));
    double alpha = config_.alpha > 0.0 ? config_.alpha : config_.iota;
    if (config_.crude_inflation <= 0.0)
      inflation_ = std::pow(std::max(2.0, config_.n_bound), alpha);
    ++metrics_.rebuild_events;
  }

  batch_raw_.push_back(x);
  batch_filter_.push_back(to_filter_space(x));
  ++metrics_.processed;
  seen_weight_ += 1.0;
  if (static_cast<Eigen::Index>(batch_raw_.size()) >= batch_size_)
    process_batch();

  auto t1 = std::chrono::steady_clock::now();
  std::uint64_t ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  metrics_.update_ns_total += ns;
  metrics_.update_ns_max = std::max(metrics_.update_ns_max, ns);
  int bucket = 0;
  std::uint64_t v = ns;
  while (v > 1 && bucket + 1 < static_cast<int>(metrics_.update_ns_histogram.size())) {
    v >>= 1;
    ++bucket;
  }
  ++metrics_.update_ns_histogram[static_cast<std::size_t>(bucket)];
}

void ClusteringPipeline::refresh_filter_coreset() {
  // Refresh on anchor-generation bumps; before the first reduce the mirror
  // follows the raw buffer (the exact sampled prefix) at a fixed cadence so
  // the crude filter activates early.
  bool stale = mr_->anchor_generation() != filter_generation_;
  if (!stale && mr_->anchor_generation() == 0) {
    std::uint64_t inserted = mr_->metrics().inserted;
    stale = inserted >= last_refresh_inserted_ + refresh_cadence();
  }
  if (!stale) return;
  filter_generation_ = mr_->anchor_generation();
  last_refresh_inserted_ = mr_->metrics().inserted;
  ++refresh_counter_;
  Dataset decoded = mr_->query();
  filter_coreset_.delta = filter_delta_;
  filter_coreset_.points.resize(decoded.size(), filter_dim_);
  filter_coreset_.weights = decoded.weights;
  for (Eigen::Index i = 0; i < decoded.size(); ++i) {
    if (jl_) {
      Vector proj = jl_->project(decoded.points.row(i).transpose());
      std::int64_t half = static_cast<std::int64_t>(filter_delta_ / 2.0);
      for (Eigen::Index j = 0; j < filter_dim_; ++j)
        filter_coreset_.points(i, j) = static_cast<double>(std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::llround(proj(j))) + half, 1,
            static_cast<std::int64_t>(filter_delta_)));
    } else {
      filter_coreset_.points.row(i) = decoded.points.row(i);
    }
  }
  centers_valid_ = centers_generation_ == filter_generation_;
}

std::uint64_t ClusteringPipeline::refresh_cadence() const {
  return std::max<std::uint64_t>(
      16, static_cast<std::uint64_t>(2 * config_.params.k));
}

void ClusteringPipeline::process_batch() {
  refresh_filter_coreset();
  const std::size_t nb = batch_raw_.size();
  ++batch_counter_;

  std::vector<double> crude_p(nb, 1.0);
  bool rough_usable =
      config_.rough_filter && filter_coreset_.size() > 0;
  if (rough_usable) {
    Dataset batch_f;
    batch_f.delta = filter_delta_;
    batch_f.points.resize(static_cast<Eigen::Index>(nb), filter_dim_);
    batch_f.weights = Vector::Ones(static_cast<Eigen::Index>(nb));
    for (std::size_t i = 0; i < nb; ++i)
      batch_f.points.row(static_cast<Eigen::Index>(i)) =
          batch_filter_[i].transpose().cast<double>();

    RoughSensParams rp;
    rp.k = config_.params.k;
    rp.z = config_.params.z;
    rp.alpha = config_.alpha > 0.0 ? config_.alpha : config_.iota;
    rp.iota = config_.iota;
    rp.n_for_factors = config_.n_bound;
    rp.seed = rng_.derive("rough", batch_counter_).next_u64();
    auto rough = rough_sens(filter_coreset_, batch_f, rp);
    for (std::size_t i = 0; i < nb; ++i)
      crude_p[i] = std::min(1.0, lambda_ * inflation_ * rough[i].value);
  }

  Rng crng = rng_.derive("crude-keep", batch_counter_);
  for (std::size_t i = 0; i < nb; ++i) {
    if (crude_p[i] <= 0.0) continue;
    if (crng.bernoulli(crude_p[i])) {
      ++metrics_.crude_kept;
      refined_queue_.push_back(
          {std::move(batch_raw_[i]), std::move(batch_filter_[i]), crude_p[i]});
    }
  }
  batch_raw_.clear();
  batch_filter_.clear();

  while (static_cast<Eigen::Index>(refined_queue_.size()) >= batch_size_)
    process_refined();
}

void ClusteringPipeline::process_refined() {
  const std::size_t nb =
      std::min<std::size_t>(refined_queue_.size(),
                            static_cast<std::size_t>(batch_size_));
  ++refined_batch_counter_;
  refresh_filter_coreset();

  Dataset batch_f;
  batch_f.delta = filter_delta_;
  batch_f.points.resize(static_cast<Eigen::Index>(nb), filter_dim_);
  batch_f.weights = Vector::Ones(static_cast<Eigen::Index>(nb));
  for (std::size_t i = 0; i < nb; ++i)
    batch_f.points.row(static_cast<Eigen::Index>(i)) =
        refined_queue_[i].filter.transpose().cast<double>();

  BatchSensOptions opts;
  opts.k = config_.params.k;
  opts.z = config_.params.z;
  opts.seed = rng_.derive("refined-ls", refined_batch_counter_).next_u64();
  // Constant-factor solution on the filter coreset. Recomputed when the
  // anchor generation moves, or before the first reduce once the mirror has
  // grown by half; sweep count capped at estimation grade. Early batches
  // fall back to local search inside batch_sens.
  bool want_solution =
      filter_coreset_.size() > 4 * static_cast<Eigen::Index>(config_.params.k);
  bool solution_stale =
      refined_solution_gen_ != filter_generation_ ||
      (want_solution &&
       (refined_solution_.rows() == 0 ||
        filter_coreset_.size() >= 2 * refined_solution_basis_));
  if (want_solution && solution_stale) {
    refined_solution_gen_ = filter_generation_;
    refined_solution_basis_ = filter_coreset_.size();
    Rng srng = rng_.derive("refined-sol", refresh_counter_);
    int cap = 8 + 4 * static_cast<int>(std::ceil(
                      std::log2(static_cast<double>(config_.params.k) + 2)));
    refined_solution_ = local_search_medoids(filter_coreset_,
                                             config_.params.k,
                                             config_.params.z, cap, srng)
                            .centers;
  } else if (!want_solution) {
    refined_solution_.resize(0, 0);
  }
  if (refined_solution_.rows() > 0) opts.solution = refined_solution_;
  auto sens = batch_sens(filter_coreset_, batch_f, opts);

  Rng rrng = rng_.derive("refined-keep", refined_batch_counter_);
  for (std::size_t i = 0; i < nb; ++i) {
    double target = std::min(1.0, lambda_ * sens[i].value);
    double pr = std::min(1.0, target / refined_queue_[i].crude_p);
    if (pr > 0.0 && rrng.bernoulli(pr)) {
      ++metrics_.refined_kept;
      double weight = 1.0 / (refined_queue_[i].crude_p * pr);
      mr_->insert(refined_queue_[i].raw.cast<double>(), weight);
    }
  }
  refined_queue_.erase(refined_queue_.begin(),
                       refined_queue_.begin() + static_cast<long>(nb));

  metrics_.reduce_events = mr_->metrics().reduce_events;
  metrics_.peak_record_bits = mr_->metrics().peak_record_bits;
  metrics_.anchor_bits = mr_->metrics().anchor_bits;
  metrics_.header_bits = mr_->metrics().header_bits;
}

Dataset ClusteringPipeline::current_coreset() const {
  Dataset out;
  out.delta = config_.grid_delta;
  if (!mr_) return out;
  out = mr_->query();
  if (out.points.cols() == 0 && dim_ > 0) out.points.resize(0, dim_);
  Eigen::Index extra = static_cast<Eigen::Index>(refined_queue_.size() +
                                                 batch_raw_.size());
  if (extra == 0) return out;
  Eigen::Index base = out.size();
  Matrix pts(base + extra, dim_);
  Vector w(base + extra);
  if (base > 0) {
    pts.topRows(base) = out.points;
    w.head(base) = out.weights;
  }
  Eigen::Index r = base;
  for (const auto& s : refined_queue_) {
    pts.row(r) = s.raw.transpose().cast<double>();
    w(r) = 1.0 / s.crude_p;
    ++r;
  }
  for (const auto& x : batch_raw_) {
    pts.row(r) = x.transpose().cast<double>();
    w(r) = 1.0;
    ++r;
  }
  return Dataset(std::move(pts), std::move(w), config_.grid_delta);
}

const CenterSet& ClusteringPipeline::current_centers() {
  std::uint64_t gen = mr_ ? mr_->anchor_generation() : 0;
  if (!centers_valid_ || centers_generation_ != gen) {
    Dataset coreset = current_coreset();
    Rng crng = rng_.derive("centers", gen);
    centers_cache_ = local_search_medoids(coreset, config_.params.k,
                                          config_.params.z, 0, crng);
    centers_generation_ = gen;
    centers_valid_ = true;
  }
  return centers_cache_;
}

const PipelineMetrics& ClusteringPipeline::metrics() {
  if (mr_) {
    metrics_.reduce_events = mr_->metrics().reduce_events;
    metrics_.peak_record_bits = mr_->metrics().peak_record_bits;
    metrics_.anchor_bits = mr_->metrics().anchor_bits;
    metrics_.header_bits = mr_->metrics().header_bits;
  }
  return metrics_;
}

void ClusteringPipeline::save_snapshot(std::ostream& os) const {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::int32_t>(os, config_.params.k);
  put<double>(os, config_.params.z);
  put<double>(os, config_.params.epsilon);
  put<double>(os, config_.params.delta);
  put<std::uint64_t>(os, config_.params.seed);
  put<double>(os, config_.grid_delta);
  put<double>(os, config_.n_bound);
  put<double>(os, config_.iota);
  put<double>(os, config_.alpha);
  put<double>(os, config_.lambda_scale);
  put<double>(os, config_.crude_inflation);
  put<std::int64_t>(os, static_cast<std::int64_t>(config_.batch_size));
  put<std::int64_t>(os, static_cast<std::int64_t>(config_.mr_block_size));
  put<double>(os, config_.reduce_c);
  put<std::int32_t>(os, config_.mr_height_bound);
  put<double>(os, config_.encode_c);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(config_.jl));
  put<std::uint8_t>(os, config_.rough_filter ? 1 : 0);
  put<std::int64_t>(os, static_cast<std::int64_t>(dim_));
  put<std::uint64_t>(os, metrics_.processed);
  put<std::uint64_t>(os, metrics_.crude_kept);
  put<std::uint64_t>(os, metrics_.refined_kept);
  put<std::uint64_t>(os, batch_counter_);
  put<std::uint64_t>(os, refined_batch_counter_);
  // Filter-mirror bookkeeping, so a resumed run follows the exact refresh
  // schedule of an uninterrupted one.
  put<std::uint64_t>(os, filter_generation_);
  put<std::uint64_t>(os, last_refresh_inserted_);
  put<std::uint64_t>(os, refresh_counter_);
  put<std::uint64_t>(os, refined_solution_gen_);
  put<std::int64_t>(os, static_cast<std::int64_t>(refined_solution_basis_));
  put<std::int64_t>(os, static_cast<std::int64_t>(filter_coreset_.size()));
  put<std::int64_t>(os, static_cast<std::int64_t>(filter_coreset_.dim()));
  for (Eigen::Index i = 0; i < filter_coreset_.size(); ++i) {
    for (Eigen::Index j = 0; j < filter_coreset_.dim(); ++j)
      put<double>(os, filter_coreset_.points(i, j));
    put<double>(os, filter_coreset_.weights(i));
  }
  put<std::int64_t>(os, static_cast<std::int64_t>(refined_solution_.rows()));
  put<std::int64_t>(os, static_cast<std::int64_t>(refined_solution_.cols()));
  for (Eigen::Index i = 0; i < refined_solution_.rows(); ++i)
    for (Eigen::Index j = 0; j < refined_solution_.cols(); ++j)
      put<double>(os, refined_solution_(i, j));
  put<std::uint8_t>(os, mr_ ? 1 : 0);
  if (mr_) mr_->serialize(os);
  put<std::uint64_t>(os, refined_queue_.size());
  for (const auto& s : refined_queue_) {
    for (Eigen::Index j = 0; j < dim_; ++j) put<std::int64_t>(os, s.raw(j));
    put<double>(os, s.crude_p);
  }
  put<std::uint64_t>(os, batch_raw_.size());
  for (const auto& x : batch_raw_)
    for (Eigen::Index j = 0; j < dim_; ++j) put<std::int64_t>(os, x(j));
}

ClusteringPipeline ClusteringPipeline::load_snapshot(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("pipe: bad magic");
  if (get<std::uint32_t>(is) != kVersion)
    throw DataError("pipe: unsupported version");
  PipelineConfig cfg;
  cfg.params.k = get<std::int32_t>(is);
  cfg.params.z = get<double>(is);
  cfg.params.epsilon = get<double>(is);
  cfg.params.delta = get<double>(is);
  cfg.params.seed = get<std::uint64_t>(is);
  cfg.grid_delta = get<double>(is);
  cfg.n_bound = get<double>(is);
  cfg.iota = get<double>(is);
  cfg.alpha = get<double>(is);
  cfg.lambda_scale = get<double>(is);
  cfg.crude_inflation = get<double>(is);
  cfg.batch_size = static_cast<Eigen::Index>(get<std::int64_t>(is));
  cfg.mr_block_size = static_cast<Eigen::Index>(get<std::int64_t>(is));
  cfg.reduce_c = get<double>(is);
  cfg.mr_height_bound = get<std::int32_t>(is);
  cfg.encode_c = get<double>(is);
  cfg.jl = static_cast<JlMode>(get<std::uint8_t>(is));
  cfg.rough_filter = get<std::uint8_t>(is) != 0;

  ClusteringPipeline p(cfg);
  Eigen::Index dim = static_cast<Eigen::Index>(get<std::int64_t>(is));
  std::uint64_t processed = get<std::uint64_t>(is);
  std::uint64_t crude_kept = get<std::uint64_t>(is);
  std::uint64_t refined_kept = get<std::uint64_t>(is);
  std::uint64_t batches = get<std::uint64_t>(is);
  std::uint64_t rbatches = get<std::uint64_t>(is);
  std::uint64_t filter_gen = get<std::uint64_t>(is);
  std::uint64_t last_refresh = get<std::uint64_t>(is);
  std::uint64_t refresh_counter = get<std::uint64_t>(is);
  std::uint64_t solution_gen = get<std::uint64_t>(is);
  Eigen::Index solution_basis =
      static_cast<Eigen::Index>(get<std::int64_t>(is));
  Eigen::Index fc_n = static_cast<Eigen::Index>(get<std::int64_t>(is));
  Eigen::Index fc_d = static_cast<Eigen::Index>(get<std::int64_t>(is));
  Matrix fc_pts(fc_n, fc_d);
  Vector fc_w(fc_n);
  for (Eigen::Index i = 0; i < fc_n; ++i) {
    for (Eigen::Index j = 0; j < fc_d; ++j) fc_pts(i, j) = get<double>(is);
    fc_w(i) = get<double>(is);
  }
  Eigen::Index rs_n = static_cast<Eigen::Index>(get<std::int64_t>(is));
  Eigen::Index rs_d = static_cast<Eigen::Index>(get<std::int64_t>(is));
  Matrix rs(rs_n, rs_d);
  for (Eigen::Index i = 0; i < rs_n; ++i)
    for (Eigen::Index j = 0; j < rs_d; ++j) rs(i, j) = get<double>(is);
  std::uint8_t has_mr = get<std::uint8_t>(is);
  if (dim > 0) p.ensure_stream_setup(dim);
  if (has_mr) {
    MergeReduceConfig mrc;
    mrc.k = cfg.params.k;
    mrc.z = cfg.params.z;
    mrc.epsilon = cfg.params.epsilon;
    mrc.delta = cfg.params.delta;
    mrc.grid_delta = cfg.grid_delta;
    mrc.n_bound = cfg.n_bound;
    mrc.block_size = cfg.mr_block_size;
    mrc.reduce_c = cfg.reduce_c;
    mrc.height_bound = cfg.mr_height_bound;
    mrc.encode_c = cfg.encode_c;
    mrc.seed = Rng::mix(cfg.params.seed ^ 0x33aa55);
    p.mr_.emplace(MergeReduceState::deserialize(is, mrc));
  }
  p.metrics_.processed = processed;
  p.metrics_.crude_kept = crude_kept;
  p.metrics_.refined_kept = refined_kept;
  p.batch_counter_ = batches;
  p.refined_batch_counter_ = rbatches;
  p.seen_weight_ = static_cast<double>(processed);
  p.filter_generation_ = filter_gen;
  p.last_refresh_inserted_ = last_refresh;
  p.refresh_counter_ = refresh_counter;
  p.refined_solution_gen_ = solution_gen;
  p.refined_solution_basis_ = solution_basis;
  if (dim > 0) {
    p.filter_coreset_.points = fc_pts;
    p.filter_coreset_.weights = fc_w;
    p.filter_coreset_.delta = p.filter_delta_;
  }
  p.refined_solution_ = rs;

  std::uint64_t nq = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < nq; ++i) {
    Survivor s;
    s.raw.resize(dim);
    for (Eigen::Index j = 0; j < dim; ++j) s.raw(j) = get<std::int64_t>(is);
    s.crude_p = get<double>(is);
    s.filter = p.to_filter_space(s.raw);
    p.refined_queue_.push_back(std::move(s));
  }
  std::uint64_t nbatch = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < nbatch; ++i) {
    IntVector x(dim);
    for (Eigen::Index j = 0; j < dim; ++j) x(j) = get<std::int64_t>(is);
    p.batch_filter_.push_back(p.to_filter_space(x));
    p.batch_raw_.push_back(std::move(x));
  }
  return p;
}

CenterSet offline_cluster(const IntMatrix& points,
                          const PipelineConfig& config) {
  ClusteringPipeline pipeline(config);
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    pipeline.update(points.row(i).transpose());
  return pipeline.current_centers();
}

}  // namespace streamkit
