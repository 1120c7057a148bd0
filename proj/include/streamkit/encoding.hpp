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

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace streamkit {

/// One coordinate offset: sign in {-1,0,+1}; decoded magnitude is
/// (1+eps')^exponent, zero when sign is 0.
struct OffsetCode {
  std::int8_t sign = 0;
  std::int16_t exponent = 0;
  bool operator==(const OffsetCode&) const = default;
};

struct CoresetRecord {
  std::uint32_t anchor = 0;
  std::vector<OffsetCode> offsets;  // one per coordinate
  std::int32_t weight_exponent = 0;
  bool operator==(const CoresetRecord&) const = default;
};

/// Space-optimal coreset representation: full-precision anchors plus
/// per-point exponent-rounded offsets and weights.
struct EncodedCoreset {
  Matrix anchors;  // k' x d
  double eps_prime = 1e-3;
  std::int32_t exp_clamp = 0;         // offset exponents live in [-E,E]
  std::int32_t weight_exp_clamp = 0;  // weight exponent magnitude bound
  double grid_delta = 0.0;
  std::vector<CoresetRecord> records;

  Eigen::Index dim() const { return anchors.cols(); }
  Eigen::Index anchor_count() const { return anchors.rows(); }
};

/// eps' schedule: eps^{max(z,2)} / (c * k * (d + log2(n_bound * delta))),
/// floored so the offset exponent range fits the serialized i16 field.
struct EncodingSchedule {
  double eps_prime = 1e-3;
  std::int32_t exp_clamp = 0;
  std::int32_t weight_exp_clamp = 0;
};

EncodingSchedule encoding_schedule(double epsilon, double z, int k, int d,
                                   double delta, double n_bound,
                                   double c = 100.0);

/// Encodes each point's offset from its nearest anchor coordinate-wise to
/// the nearest power of (1+eps') in ratio (exact zeros keep the sentinel);
/// weights round likewise. Magnitudes below (1+eps')^{-E} snap to zero.
EncodedCoreset encode(const Dataset& data, const CenterSet& anchors,
                      const EncodingSchedule& schedule);

Dataset decode(const EncodedCoreset& encoded);

/// Encodes every part against one shared anchor set (the global-anchor
/// path): per-part error becomes additive in the full cost rather than
/// multiplicative in the part's own cost.
std::vector<EncodedCoreset> encode_against_global(
    const std::vector<Dataset>& parts, const CenterSet& global_anchors,
    const EncodingSchedule& schedule);

struct BitReport {
  std::uint64_t anchor_bits = 0;       // full-precision anchors
  std::uint64_t header_bits = 0;       // magic, version, dims, schedule
  std::uint64_t bits_per_record = 0;   // closed form, packed
  std::uint64_t record_bits_total = 0;
  std::uint64_t records = 0;
};

/// Packed-bit accounting: per record
/// ceil(log2 k) + d * (2 + ceil(log2 exponent_range)) + weight bits.
BitReport measure_bits(const EncodedCoreset& encoded);

// "KZC1" binary format, little-endian: magic, u32 version, u32 d, u32 k,
// f64 eps_prime, i32 exp_clamp, i32 weight_exp_clamp, f64 grid_delta,
// u64 record count, i64 anchor coordinates row-major, then per record
// (u32 anchor id, d x (sign byte, i16 exponent), i32 weight exponent).
void write_kzc1(std::ostream& os, const EncodedCoreset& encoded);
EncodedCoreset read_kzc1(std::istream& is);

}  // namespace streamkit
