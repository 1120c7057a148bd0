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

#include "streamkit/encoding.hpp"

#include "streamkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace streamkit {
namespace {

constexpr char kMagic[4] = {'K', 'Z', 'C', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::int32_t kMaxExpClamp = 30000;  // stays inside i16

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
  if (!is) throw DataError("kzc1: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

std::uint64_t ceil_log2(std::uint64_t v) {
  std::uint64_t bits = 0;
  std::uint64_t x = 1;
  while (x < v) {
    x <<= 1;
    ++bits;
  }
  return bits;
}

}  // namespace

EncodingSchedule encoding_schedule(double epsilon, double z, int k, int d,
                                   double delta, double n_bound, double c) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ContractError("encoding_schedule: epsilon must lie in (0,1)");
  double span = std::max(4.0, n_bound * std::max(delta, 1.0));
  double eps_prime = std::pow(epsilon, std::max(z, 2.0)) /
                     (c * std::max(1, k) *
                      (d + std::log2(span)));
  // Largest magnitude an offset or weight must reach: sqrt(d)*delta*n_bound.
  double mag = std::sqrt(static_cast<double>(std::max(1, d))) *
               std::max(delta, 2.0) * std::max(n_bound, 2.0);
  double eps_floor = std::exp(std::log(mag) / kMaxExpClamp) - 1.0;
  eps_prime = std::min(0.5, std::max(eps_prime, eps_floor));

  EncodingSchedule s;
  s.eps_prime = eps_prime;
  s.exp_clamp = static_cast<std::int32_t>(
      std::ceil(std::log(mag) / std::log1p(eps_prime)));
  double w_bound = std::pow(std::max(n_bound, 2.0) * std::max(delta, 2.0) *
                                std::max(d, 2),
                            2.0);
  s.weight_exp_clamp = static_cast<std::int32_t>(
      std::ceil(std::log(w_bound) / std::log1p(eps_prime)));
  return s;
}

EncodedCoreset encode(const Dataset& data, const CenterSet& anchors,
                      const EncodingSchedule& schedule) {
  if (anchors.empty()) throw ContractError("encode: no anchors");
  if (!(schedule.eps_prime > 0.0 && schedule.eps_prime < 1.0))
    throw ContractError("encode: eps_prime must lie in (0,1)");

  EncodedCoreset out;
  out.anchors = anchors.centers;
  out.eps_prime = schedule.eps_prime;
  out.exp_clamp = schedule.exp_clamp;
  out.weight_exp_clamp = schedule.weight_exp_clamp;
  out.grid_delta = data.delta;
  out.records.reserve(static_cast<std::size_t>(data.size()));

  const double log_base = std::log1p(schedule.eps_prime);
  const Eigen::Index d = anchors.dim();
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (!(data.weights(i) > 0.0))
      throw ContractError("encode: nonpositive weight");
    CoresetRecord rec;
    rec.anchor = static_cast<std::uint32_t>(
        nearest_center(data.points.row(i).transpose(), anchors.centers));
    rec.offsets.resize(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
      double v = data.points(i, j) - out.anchors(rec.anchor, j);
      OffsetCode code;
      if (v != 0.0) {
        long e = std::lround(std::log(std::abs(v)) / log_base);
        if (e >= -schedule.exp_clamp) {
          code.sign = v > 0.0 ? 1 : -1;
          code.exponent = static_cast<std::int16_t>(
              std::clamp<long>(e, -schedule.exp_clamp, schedule.exp_clamp));
        }
      }
      rec.offsets[static_cast<std::size_t>(j)] = code;
    }
    long we = std::lround(std::log(data.weights(i)) / log_base);
    rec.weight_exponent = static_cast<std::int32_t>(std::clamp<long>(
        we, -schedule.weight_exp_clamp, schedule.weight_exp_clamp));
    out.records.push_back(std::move(rec));
  }
  return out;
}

Dataset decode(const EncodedCoreset& encoded) {
  const Eigen::Index d = encoded.dim();
  Dataset out;
  out.delta = encoded.grid_delta;
  out.points.resize(static_cast<Eigen::Index>(encoded.records.size()), d);
  out.weights.resize(static_cast<Eigen::Index>(encoded.records.size()));
  const double log_base = std::log1p(encoded.eps_prime);
  for (std::size_t r = 0; r < encoded.records.size(); ++r) {
    const CoresetRecord& rec = encoded.records[r];
    if (rec.anchor >= encoded.anchor_count() ||
        static_cast<Eigen::Index>(rec.offsets.size()) != d)
      throw DataError("decode: malformed record");
    for (Eigen::Index j = 0; j < d; ++j) {
      const OffsetCode& code = rec.offsets[static_cast<std::size_t>(j)];
      double off = code.sign == 0
                       ? 0.0
                       : code.sign * std::exp(code.exponent * log_base);
      out.points(static_cast<Eigen::Index>(r), j) =
          encoded.anchors(rec.anchor, j) + off;
    }
    out.weights(static_cast<Eigen::Index>(r)) =
        std::exp(rec.weight_exponent * log_base);
  }
  return out;
}

std::vector<EncodedCoreset> encode_against_global(
    const std::vector<Dataset>& parts, const CenterSet& global_anchors,
    const EncodingSchedule& schedule) {
  std::vector<EncodedCoreset> out;
  out.reserve(parts.size());
  for (const Dataset& part : parts)
    out.push_back(encode(part, global_anchors, schedule));
  return out;
}

BitReport measure_bits(const EncodedCoreset& encoded) {
  BitReport rep;
  rep.records = encoded.records.size();
  rep.anchor_bits = static_cast<std::uint64_t>(encoded.anchor_count()) *
                    static_cast<std::uint64_t>(encoded.dim()) * 64u;
  rep.header_bits = (4 + 4 + 4 + 4 + 8 + 4 + 4 + 8 + 8) * 8u;
  std::uint64_t anchor_id_bits =
      ceil_log2(static_cast<std::uint64_t>(std::max<Eigen::Index>(
          1, encoded.anchor_count())));
  std::uint64_t exp_range =
      2u * static_cast<std::uint64_t>(encoded.exp_clamp) + 1u;
  std::uint64_t weight_bits =
      ceil_log2(2u * static_cast<std::uint64_t>(encoded.weight_exp_clamp) + 1u);
  rep.bits_per_record =
      anchor_id_bits +
      static_cast<std::uint64_t>(encoded.dim()) * (2u + ceil_log2(exp_range)) +
      weight_bits;
  rep.record_bits_total = rep.bits_per_record * rep.records;
  return rep;
}

void write_kzc1(std::ostream& os, const EncodedCoreset& encoded) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(encoded.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(encoded.anchor_count()));
  put<double>(os, encoded.eps_prime);
  put<std::int32_t>(os, encoded.exp_clamp);
  put<std::int32_t>(os, encoded.weight_exp_clamp);
  put<double>(os, encoded.grid_delta);
  put<std::uint64_t>(os, encoded.records.size());
  for (Eigen::Index i = 0; i < encoded.anchor_count(); ++i)
    for (Eigen::Index j = 0; j < encoded.dim(); ++j)
      put<std::int64_t>(os, std::llround(encoded.anchors(i, j)));
  for (const CoresetRecord& rec : encoded.records) {
    put<std::uint32_t>(os, rec.anchor);
    for (const OffsetCode& code : rec.offsets) {
      put<std::int8_t>(os, code.sign);
      put<std::int16_t>(os, code.exponent);
    }
    put<std::int32_t>(os, rec.weight_exponent);
  }
}

EncodedCoreset read_kzc1(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("kzc1: bad magic");
  std::uint32_t version = get<std::uint32_t>(is);
  if (version != kVersion) throw DataError("kzc1: unsupported version");
  std::uint32_t d = get<std::uint32_t>(is);
  std::uint32_t k = get<std::uint32_t>(is);
  EncodedCoreset out;
  out.eps_prime = get<double>(is);
  out.exp_clamp = get<std::int32_t>(is);
  out.weight_exp_clamp = get<std::int32_t>(is);
  out.grid_delta = get<double>(is);
  std::uint64_t n = get<std::uint64_t>(is);
  out.anchors.resize(k, d);
  for (std::uint32_t i = 0; i < k; ++i)
    for (std::uint32_t j = 0; j < d; ++j)
      out.anchors(i, j) = static_cast<double>(get<std::int64_t>(is));
  out.records.resize(n);
  for (std::uint64_t r = 0; r < n; ++r) {
    CoresetRecord& rec = out.records[r];
    rec.anchor = get<std::uint32_t>(is);
    if (rec.anchor >= k) throw DataError("kzc1: anchor id out of range");
    rec.offsets.resize(d);
    for (std::uint32_t j = 0; j < d; ++j) {
      rec.offsets[j].sign = get<std::int8_t>(is);
      rec.offsets[j].exponent = get<std::int16_t>(is);
      if (rec.offsets[j].sign == 0 && rec.offsets[j].exponent != 0)
        throw DataError("kzc1: nonzero exponent under zero sentinel");
    }
    rec.weight_exponent = get<std::int32_t>(is);
  }
  return out;
}

}  // namespace streamkit
