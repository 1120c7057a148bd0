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

#include "streamkit/encoding.hpp"
#include "streamkit/rng.hpp"
#include "streamkit/types.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace streamkit {

/// Leverage scores a_i^T (A^T A)^+ a_i, computed through a thin SVD.
/// Values lie in [0,1] and sum to rank(A).
Vector leverage_scores(const Matrix& a);

struct LewisState {
  Vector weights;
  double p = 2.0;
  double residual = 0.0;  // max_i |w_i - l_i(W^{1/2-1/p} A)| / w_i at exit
  bool converged = false;
  int iterations = 0;
};

/// Lp Lewis weights through the fixed-point iteration
/// w <- l(W^{1/2-1/p} A), damped geometrically for p >= 4. For p = 2 the
/// exponent vanishes and the result equals the leverage scores.
LewisState lewis_weights(const Matrix& a, double p, double tol = 1e-10,
                         int max_iters = 200);

struct PreconditionResult {
  Matrix p;      // d x d right preconditioner
  Matrix p_inv;  // its inverse on the retained range
  bool full_rank = true;
  double condition = 1.0;      // measured conditioning of M * P
  double cond_exponent = 0.0;  // c with condition <= d^c
};

/// Right preconditioner P with M P well-conditioned in the Lp sense:
/// QR for p = 2, QR of the Lewis-rescaled matrix otherwise. The measured
/// conditioning (exact singular values for p = 2, direction-sampled for
/// p != 2) is reported rather than assumed.
PreconditionResult precondition(const Matrix& m, double p,
                                std::uint64_t seed = 0xc09d16);

struct RowCode {
  std::vector<OffsetCode> entries;
  std::int32_t scale_exponent = 0;
};

/// Lp-embedding coreset: sampled/rescaled rows stored as exponent-rounded
/// images under the preconditioner, plus the anchor embedding and P.
struct EncodedRowSet {
  Matrix anchor;   // constant-factor embedding rows, full precision
  Matrix precond;  // P
  double p = 2.0;
  double eps_prime = 1e-4;
  std::int32_t exp_clamp = 0;
  std::int32_t scale_exp_clamp = 0;
  std::vector<RowCode> records;

  Eigen::Index dim() const { return precond.rows(); }
};

EncodingSchedule row_encoding_schedule(double epsilon, double p, int d,
                                       double entry_bound, double n_bound,
                                       double c = 100.0);

/// Rounds each image row a*P entry-wise to sign + power of (1+eps'); `scales`
/// multiply decoded rows (sampling rescale factors, 1 when absent).
EncodedRowSet encode_rows(const Matrix& rows, const Vector& scales,
                          const Matrix& anchor,
                          const PreconditionResult& pre,
                          const EncodingSchedule& schedule, double p);

/// Decoded rows: scale_i * (b'_i P^{-1}).
Matrix decode_rows(const EncodedRowSet& encoded);

// "LPE1" binary format, little-endian: magic, u32 version, u32 d, f64 p,
// f64 eps_prime, i32 exp_clamp, i32 scale_exp_clamp, u64 anchor rows,
// u64 records, anchor f64 row-major, P f64 row-major, then per record
// d x (sign byte, i16 exponent) + i32 scale exponent.
void write_lpe1(std::ostream& os, const EncodedRowSet& encoded);
EncodedRowSet read_lpe1(std::istream& is);

/// Gaussian sketch rows g_i^T Z, precomputed once per anchor generation.
struct LeverageSketch {
  Matrix rows;  // trials x d
};

LeverageSketch make_leverage_sketch(const Matrix& z_root_inv, int trials,
                                    Rng& rng);

/// Median over trials of <g_i Z, a>^2: a crude leverage estimate (the
/// median of chi^2_1 biases it by ~0.455, well inside the claimed factor).
double crude_leverage_sketch(const LeverageSketch& sketch,
                             const Eigen::Ref<const Vector>& a);

/// Root-score transfer from a crude leverage estimate to a crude Lp
/// sensitivity, using the configured stream-length bound.
double crude_lp_sensitivity(double crude_leverage, double p, double n_bound);

/// Exact online Lewis weights: row t against the prefix A_t.
Vector online_lewis_weights(const Matrix& a, double p);

struct SampledRow {
  Eigen::Index index = -1;
  double scale = 1.0;        // (1/p_t)^{1/p}
  double probability = 1.0;  // p_t used
};

/// Online Lewis sampling: row t kept with probability
/// min(1, lambda * estimator(t)) and rescaled by (1/p_t)^{1/p} so that
/// ||.||_p^p is preserved in expectation.
std::vector<SampledRow> online_lewis_sample(
    Eigen::Index n, double p,
    const std::function<double(Eigen::Index)>& estimator, double lambda,
    Rng& rng);

struct EmbedConfig {
  double p = 2.0;
  double epsilon = 0.1;
  double delta = 0.01;
  std::uint64_t seed = 1;
  double n_bound = 1e5;
  double entry_bound = 1 << 20;  // M
  double alpha = 0.1;            // crude-factor exponent
  double lambda_scale = 1.0;     // scales lambda = (d/eps^2) log d log n
  double crude_inflation = 0.0;  // 0 -> n_bound^{2 alpha} * d
  int crude_trials = 21;
  Eigen::Index batch_size = 0;   // 0 -> d
  Eigen::Index block_size = 0;   // 0 -> formula
  double reduce_c = 1.0;
  Eigen::Index anchor_rows = 0;  // 0 -> 4d
  double encode_c = 100.0;
  bool crude_filter = true;

  double lambda(int d) const;
  Eigen::Index reduce_target(int d) const;
};

struct EmbedMetrics {
  std::uint64_t processed = 0;
  std::uint64_t crude_kept = 0;
  std::uint64_t refined_kept = 0;  // retained rows |S'|
  std::uint64_t reduce_events = 0;
  std::uint64_t peak_record_bits = 0;
  std::uint64_t anchor_bits = 0;
  std::uint64_t lewis_unconverged = 0;
  std::array<std::uint64_t, 40> update_ns_histogram{};
  std::uint64_t update_ns_total = 0;
};

/// Streaming Lp subspace embedding: crude sketch filter per row, online
/// Lewis refinement of the survivors in batches, and merge-and-reduce over
/// encoded row sets with a global anchor embedding and preconditioner.
class EmbedPipeline {
 public:
  explicit EmbedPipeline(const EmbedConfig& config);

  void update(const Eigen::Ref<const IntVector>& row);

  /// Decoded coreset rows (scales applied) for everything inserted,
  /// including in-flight rows.
  Matrix current_rows() const;
  /// The full current state as one encoded row set against the current
  /// anchor generation.
  EncodedRowSet current_rowset() const;

  const EmbedMetrics& metrics() const { return metrics_; }
  const EmbedConfig& config() const { return config_; }

 private:
  void ensure_setup(Eigen::Index d);
  void process_refined();
  void flush_block();
  void refresh_anchor(const Matrix& decoded, const Vector& scales);
  Matrix decoded_union(Vector* scales_out) const;

  EmbedConfig config_;
  Rng rng_;
  Eigen::Index dim_ = 0;
  double lambda_ = 1.0;
  double inflation_ = 1.0;
  Eigen::Index batch_size_ = 1;
  Eigen::Index block_size_ = 1;

  // Anchor generation: constant-factor embedding B, Z=(B^T B)^{-1/2},
  // sketch rows, preconditioner.
  Matrix anchor_;
  std::optional<PreconditionResult> pre_;
  LeverageSketch sketch_;
  std::uint64_t generation_ = 0;

  double frob_sq_ = 0.0;  // running ||A||_F^2 for the crude floor

  struct PendingRow {
    Vector row;
    double crude_p = 1.0;
  };
  std::vector<PendingRow> refined_queue_;
  // Block buffer of accepted (scaled) rows awaiting encoding.
  std::vector<Vector> buffer_rows_;
  std::vector<double> buffer_scales_;
  std::vector<EncodedRowSet> buckets_;  // one per level, empty() marks free
  std::vector<bool> bucket_live_;

  EmbedMetrics metrics_;
};

}  // namespace streamkit
