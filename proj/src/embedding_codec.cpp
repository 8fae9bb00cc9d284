// Copyright 2026 The cimrag Authors
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

#include "cimrag/embedding_codec.hpp"

#include <string>

namespace cimrag {

QuantSpec::QuantSpec(int precision_bits) : bits_(precision_bits) {
  if (precision_bits < 2 || precision_bits > 16) {
    throw ConfigError("precision_bits must be in [2, 16]");
  }
}

int QuantSpec::slices_for(const DeviceProfile& profile) const {
  if (bits_ % profile.bits_per_cell != 0) {
    throw ConfigError("precision " + std::to_string(bits_) +
                      " is not divisible by " +
                      std::to_string(profile.bits_per_cell) + " bits per cell");
  }
  return bits_ / profile.bits_per_cell;
}

SlicedVector bit_slice(const Eigen::Ref<const Eigen::VectorXi>& u,
                       const DeviceProfile& profile, const QuantSpec& spec,
                       DocId doc_id) {
  const int n_slices = spec.slices_for(profile);
  const int bits = profile.bits_per_cell;
  const std::uint32_t mask = static_cast<std::uint32_t>(profile.levels() - 1);
  SlicedVector out;
  out.doc_id = doc_id;
  out.slices.resize(u.size(), n_slices);
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    if (u[j] < 0 || u[j] > spec.max_unsigned()) {
      throw DomainError("bit_slice: value " + std::to_string(u[j]) +
                        " outside the unsigned range");
    }
    const auto value = static_cast<std::uint32_t>(u[j]);
    for (int s = 0; s < n_slices; ++s) {
      out.slices(j, s) = static_cast<std::uint8_t>((value >> (s * bits)) & mask);
    }
  }
  return out;
}

RowMatrix<float> project_rows(const ProjectionHead& head,
                              const EmbeddingMatrix& base) {
  if (base.dim() != head.din()) {
    throw ConfigError("project_rows: embedding dim " +
                      std::to_string(base.dim()) + " != head din " +
                      std::to_string(head.din()));
  }
  Matrix<double> z = base.rows.cast<double>() * head.w;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double n = z.row(i).norm();
    if (!(n > 0.0)) {
      throw DomainError("project_rows: zero-norm projection for row " +
                        std::to_string(i));
    }
    z.row(i) /= n;
  }
  return z.cast<float>();
}

void to_json(nlohmann::json& j, const ProjectionHead& head) {
  std::vector<double> flat(static_cast<std::size_t>(head.w.size()));
  Eigen::Map<RowMatrix<double>>(flat.data(), head.w.rows(), head.w.cols()) =
      head.w;
  j = nlohmann::json{
      {"din", head.din()}, {"d_out", head.d_out()}, {"w_row_major", flat}};
}

void from_json(const nlohmann::json& j, ProjectionHead& head) {
  Eigen::Index din = 0, d_out = 0;
  std::vector<double> flat;
  try {
    din = j.at("din").get<Eigen::Index>();
    d_out = j.at("d_out").get<Eigen::Index>();
    flat = j.at("w_row_major").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("projection head: ") + e.what());
  }
  if (din < 1 || d_out < 1 ||
      flat.size() != static_cast<std::size_t>(din * d_out)) {
    throw FormatError("projection head: weight count does not match shape");
  }
  head.w = Eigen::Map<const RowMatrix<double>>(flat.data(), din, d_out);
  if (!head.all_finite()) throw FormatError("projection head: non-finite weight");
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

}  // namespace

Eigen::VectorXf hash_embed(std::string_view text, int din, std::uint64_t seed) {
  if (din < 8) throw ConfigError("hash_embed: din must be >= 8");
  if (text.empty()) throw DomainError("hash_embed: text yields zero trigrams");
  std::string padded;
  padded.reserve(text.size() + 2);
  padded.push_back('\x02');
  padded.append(text);
  padded.push_back('\x03');

  const std::uint64_t salt = mix64(seed ^ 0x7472696772616d73ULL);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(din);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t h = kFnvOffset;
    for (std::size_t k = 0; k < 3; ++k) {
      h ^= static_cast<unsigned char>(padded[i + k]);
      h *= kFnvPrime;
    }
    h = mix64(h ^ salt);
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(din));
    acc[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  const double n = acc.norm();
  // Sign collisions can cancel every bucket on tiny inputs.
  if (!(n > 0.0)) throw DomainError("hash_embed: trigram features cancel out");
  return (acc / n).cast<float>();
}

}  // namespace cimrag
