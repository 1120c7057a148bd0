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

#include "streamkit/merge_reduce.hpp"

#include "streamkit/geometry.hpp"
#include "streamkit/sensitivity.hpp"
#include "streamkit/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace streamkit {
namespace {

constexpr char kMagic[4] = {'M', 'R', 'S', 'T'};
constexpr std::uint32_t kVersion = 1;

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  Dataset out;
  out.delta = std::max(a.delta, b.delta);
  out.points.resize(a.size() + b.size(), a.dim());
  out.points.topRows(a.size()) = a.points;
  out.points.bottomRows(b.size()) = b.points;
  out.weights.resize(a.size() + b.size());
  out.weights.head(a.size()) = a.weights;
  out.weights.tail(b.size()) = b.weights;
  return out;
}

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
  if (!is) throw DataError("mrst: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

double MergeReduceConfig::delta_level() const {
  double lg = std::log2(std::max(4.0, n_bound * std::max(grid_delta, 2.0)));
  return delta * epsilon * epsilon / (lg * lg);
}

Eigen::Index reduce_target_size(int k, int d, double eps2, double delta2,
                                double c) {
  double m = c * (static_cast<double>(k) / (eps2 * eps2)) *
             (d + std::log2(1.0 / std::max(delta2, 1e-12))) *
             std::max(1.0, std::log2(static_cast<double>(k)));
  return static_cast<Eigen::Index>(
      std::min(1e8, std::max(static_cast<double>(k) + 1.0, std::ceil(m))));
}

Dataset reduce_coreset(const Dataset& data, int k, double z, double eps2,
                       double delta2, Rng& rng, Eigen::Index target_override,
                       double c) {
  Eigen::Index target =
      target_override > 0
          ? target_override
          : reduce_target_size(k, static_cast<int>(data.dim()), eps2, delta2,
                               c);
  if (data.size() <= target) return data;

  // Degenerate support collapses to one point carrying the total weight.
  {
    bool all_same = true;
    for (Eigen::Index i = 1; i < data.size() && all_same; ++i)
      if (data.points.row(i) != data.points.row(0)) all_same = false;
    if (all_same) {
      Dataset out;
      out.delta = data.delta;
      out.points = data.points.topRows(1);
      out.weights = Vector::Constant(1, data.total_weight());
      return out;
    }
  }

  int solver_cap = 8 + 4 * static_cast<int>(std::ceil(
                           std::log2(static_cast<double>(k) + 2)));
  CenterSet sol =
      local_search_medoids(data, k, z, solver_cap, rng.derive("reduce-ls"));
  BatchSensOptions opts;
  opts.k = k;
  opts.z = z;
  opts.solution = sol.centers;
  Dataset empty;
  empty.points.resize(0, data.dim());
  empty.weights.resize(0);
  empty.delta = data.delta;
  auto sens = batch_sens(empty, data, opts);

  double total_s = 0.0;
  for (const auto& s : sens) total_s += s.value;
  Dataset out;
  out.delta = data.delta;
  out.points.resize(0, data.dim());
  out.weights.resize(0);
  std::vector<Eigen::Index> kept;
  std::vector<double> w;
  Rng srng = rng.derive("reduce-sample");
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double p = std::min(1.0, static_cast<double>(target) *
                                 sens[static_cast<std::size_t>(i)].value /
                                 total_s);
    if (p <= 0.0) continue;
    if (srng.bernoulli(p)) {
      kept.push_back(i);
      w.push_back(data.weights(i) / p);
    }
  }
  out.points.resize(static_cast<Eigen::Index>(kept.size()), data.dim());
  out.weights.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    out.points.row(static_cast<Eigen::Index>(r)) = data.points.row(kept[r]);
    out.weights(static_cast<Eigen::Index>(r)) = w[r];
  }
  return out;
}

MergeReduceState::MergeReduceState(const MergeReduceConfig& config)
    : config_(config), rng_(config.seed) {
  schedule_ = encoding_schedule(config_.epsilon, config_.z, config_.k,
                                1, config_.grid_delta, config_.n_bound,
                                config_.encode_c);
  block_size_ =
      config_.block_size > 0
          ? config_.block_size
          : reduce_target_size(config_.k, 2, config_.eps_level(),
                               config_.delta_level(), config_.reduce_c);
}

Dataset MergeReduceState::buffer_dataset() const {
  Dataset out;
  out.delta = config_.grid_delta;
  const Eigen::Index n = static_cast<Eigen::Index>(buffer_points_.size());
  if (n == 0) return out;
  out.points.resize(n, buffer_points_[0].size());
  out.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.points.row(i) = buffer_points_[static_cast<std::size_t>(i)].transpose();
    out.weights(i) = buffer_weights_[static_cast<std::size_t>(i)];
  }
  return out;
}

void MergeReduceState::insert(const Eigen::Ref<const Vector>& point,
                              double weight) {
  if (buffer_points_.empty() && buckets_.empty()) {
    // Schedule depends on the dimension; fix it on first insert.
    schedule_ = encoding_schedule(config_.epsilon, config_.z, config_.k,
                                  static_cast<int>(point.size()),
                                  config_.grid_delta, config_.n_bound,
                                  config_.encode_c);
  }
  buffer_points_.push_back(point);
  buffer_weights_.push_back(weight);
  ++metrics_.inserted;
  metrics_.peak_buffer_points =
      std::max(metrics_.peak_buffer_points,
               static_cast<std::uint64_t>(buffer_points_.size()));
  if (static_cast<Eigen::Index>(buffer_points_.size()) >= block_size_)
    flush_buffer();
}

void MergeReduceState::flush_buffer() {
  Dataset carry = buffer_dataset();
  buffer_points_.clear();
  buffer_weights_.clear();

  std::size_t level = 0;
  while (level < buckets_.size() && buckets_[level]) {
    carry = concat(carry, decode(*buckets_[level]));
    buckets_[level].reset();
    ++level;
  }
  if (level >= buckets_.size()) buckets_.resize(level + 1);

  ++metrics_.reduce_events;
  Rng rrng = rng_.derive("mr-reduce", metrics_.reduce_events);
  Dataset reduced =
      reduce_coreset(carry, config_.k, config_.z, config_.eps_level(),
                     config_.delta_level(), rrng, block_size_, config_.reduce_c);

  // Global anchors from the full decoded state as of this event.
  Dataset full = reduced;
  for (const auto& bucket : buckets_)
    if (bucket) full = concat(full, decode(*bucket));
  Rng arng = rng_.derive("mr-anchors", metrics_.reduce_events);
  int anchor_cap = 8 + 4 * static_cast<int>(std::ceil(
                           std::log2(static_cast<double>(config_.k) + 2)));
  CenterSet anchors =
      local_search_medoids(full, config_.k, config_.z, anchor_cap, arng);
  // Anchors live on the input grid: the serialized format stores them as
  // integers, and a sub-unit snap keeps a constant-factor solution one.
  for (Eigen::Index i = 0; i < anchors.size(); ++i)
    for (Eigen::Index j = 0; j < anchors.dim(); ++j)
      anchors.centers(i, j) = std::round(anchors.centers(i, j));
  anchors_ = anchors;
  ++generation_;

  buckets_[level] = encode(reduced, anchors, schedule_);
  refresh_metrics();
}

void MergeReduceState::refresh_metrics() {
  std::uint64_t record_bits = 0;
  std::uint64_t anchor_bits = 0;
  std::uint64_t header_bits = 0;
  for (const auto& bucket : buckets_) {
    if (!bucket) continue;
    BitReport rep = measure_bits(*bucket);
    record_bits += rep.record_bits_total;
    anchor_bits += rep.anchor_bits;
    header_bits += rep.header_bits;
  }
  metrics_.current_record_bits = record_bits;
  metrics_.peak_record_bits =
      std::max(metrics_.peak_record_bits, record_bits);
  metrics_.anchor_bits = anchor_bits;
  metrics_.header_bits = header_bits;
}

Dataset MergeReduceState::query() const {
  Dataset out;
  out.delta = config_.grid_delta;
  bool first = true;
  for (const auto& bucket : buckets_) {
    if (!bucket) continue;
    Dataset d = decode(*bucket);
    out = first ? d : concat(out, d);
    first = false;
  }
  if (!buffer_points_.empty()) {
    Dataset buf = buffer_dataset();
    out = first ? buf : concat(out, buf);
  }
  return out;
}

void MergeReduceState::serialize(std::ostream& os) const {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(block_size_));
  put<std::uint64_t>(os, generation_);
  put<std::uint64_t>(os, metrics_.inserted);
  put<std::uint64_t>(os, metrics_.reduce_events);
  put<std::uint64_t>(os, metrics_.peak_record_bits);
  put<std::uint64_t>(os, metrics_.peak_buffer_points);
  put<std::uint8_t>(os, anchors_ ? 1 : 0);
  if (anchors_) {
    put<std::int64_t>(os, static_cast<std::int64_t>(anchors_->size()));
    put<std::int64_t>(os, static_cast<std::int64_t>(anchors_->dim()));
    for (Eigen::Index i = 0; i < anchors_->size(); ++i)
      for (Eigen::Index j = 0; j < anchors_->dim(); ++j)
        put<double>(os, anchors_->centers(i, j));
  }
  std::uint64_t bitmap = 0;
  for (std::size_t l = 0; l < buckets_.size(); ++l)
    if (buckets_[l]) bitmap |= (1ULL << l);
  put<std::uint64_t>(os, bitmap);
  // The level-0 buffer is raw (pre-encoding) state; it is stored exactly
  // so resumed runs are bit-identical to uninterrupted ones.
  put<std::uint64_t>(os, buffer_points_.size());
  put<std::int64_t>(os, buffer_points_.empty()
                            ? 0
                            : static_cast<std::int64_t>(
                                  buffer_points_.front().size()));
  for (std::size_t i = 0; i < buffer_points_.size(); ++i) {
    for (Eigen::Index j = 0; j < buffer_points_[i].size(); ++j)
      put<double>(os, buffer_points_[i](j));
    put<double>(os, buffer_weights_[i]);
  }
  for (const auto& bucket : buckets_)
    if (bucket) write_kzc1(os, *bucket);
}

MergeReduceState MergeReduceState::deserialize(std::istream& is,
                                               const MergeReduceConfig& config) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("mrst: bad magic");
  if (get<std::uint32_t>(is) != kVersion)
    throw DataError("mrst: unsupported version");
  std::uint64_t block = get<std::uint64_t>(is);
  std::uint64_t generation = get<std::uint64_t>(is);
  std::uint64_t inserted = get<std::uint64_t>(is);
  std::uint64_t reduce_events = get<std::uint64_t>(is);
  std::uint64_t peak_bits = get<std::uint64_t>(is);
  std::uint64_t peak_buffer = get<std::uint64_t>(is);
  std::uint8_t has_anchors = get<std::uint8_t>(is);
  std::optional<CenterSet> anchors;
  if (has_anchors) {
    Eigen::Index ar = static_cast<Eigen::Index>(get<std::int64_t>(is));
    Eigen::Index ad = static_cast<Eigen::Index>(get<std::int64_t>(is));
    Matrix c(ar, ad);
    for (Eigen::Index i = 0; i < ar; ++i)
      for (Eigen::Index j = 0; j < ad; ++j) c(i, j) = get<double>(is);
    anchors = CenterSet(c);
  }
  std::uint64_t bitmap = get<std::uint64_t>(is);
  std::uint64_t buffer_count = get<std::uint64_t>(is);
  Eigen::Index buffer_dim = static_cast<Eigen::Index>(get<std::int64_t>(is));

  MergeReduceState state(config);
  state.block_size_ = static_cast<Eigen::Index>(block);
  state.generation_ = generation;
  state.metrics_.inserted = inserted;
  state.metrics_.reduce_events = reduce_events;
  state.metrics_.peak_record_bits = peak_bits;
  state.metrics_.peak_buffer_points = peak_buffer;
  state.anchors_ = std::move(anchors);
  for (std::uint64_t i = 0; i < buffer_count; ++i) {
    Vector p(buffer_dim);
    for (Eigen::Index j = 0; j < buffer_dim; ++j) p(j) = get<double>(is);
    double w = get<double>(is);
    state.buffer_points_.push_back(std::move(p));
    state.buffer_weights_.push_back(w);
  }
  for (std::size_t l = 0; l < 64; ++l) {
    if (!(bitmap & (1ULL << l))) continue;
    if (state.buckets_.size() <= l) state.buckets_.resize(l + 1);
    state.buckets_[l] = read_kzc1(is);
  }
  // The schedule is fixed lazily on the first insert; restore it from the
  // snapshot's dimension instead.
  Eigen::Index dim = buffer_dim;
  for (const auto& bucket : state.buckets_)
    if (bucket) dim = bucket->dim();
  if (dim > 0)
    state.schedule_ = encoding_schedule(config.epsilon, config.z, config.k,
                                        static_cast<int>(dim),
                                        config.grid_delta, config.n_bound,
                                        config.encode_c);
  state.refresh_metrics();
  return state;
}

}  // namespace streamkit
