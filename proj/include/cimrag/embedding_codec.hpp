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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cimrag/device_model.hpp"
#include "cimrag/rng.hpp"
#include "cimrag/types.hpp"

namespace cimrag {

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

/// Symmetric fixed-point format for unit-norm embeddings. A coordinate v is
/// stored as round(v / scale) in [-(2^(p-1)-1), 2^(p-1)-1], then shifted by
/// `offset` so that single-polarity cells can hold it.
class QuantSpec {
 public:
  explicit QuantSpec(int precision_bits = 8);

  int precision_bits() const { return bits_; }
  int max_code() const { return (1 << (bits_ - 1)) - 1; }
  std::int32_t offset() const { return 1 << (bits_ - 1); }
  double scale() const { return 1.0 / max_code(); }
  std::int32_t max_unsigned() const { return (1 << bits_) - 1; }

  /// Number of cells per coordinate on `profile`; throws ConfigError when the
  /// precision is not a multiple of the cell width.
  int slices_for(const DeviceProfile& profile) const;

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;

 private:
  int bits_;
};

template <typename Derived>
Eigen::VectorXi quantize(const Eigen::MatrixBase<Derived>& vec,
                         const QuantSpec& spec) {
  const double inv_scale = spec.max_code();
  const int hi = spec.max_code();
  Eigen::VectorXi q(vec.size());
  for (Eigen::Index i = 0; i < vec.size(); ++i) {
    const double v = static_cast<double>(vec[i]);
    if (!std::isfinite(v)) throw DomainError("quantize: non-finite input");
    // lround rounds half away from zero, which keeps quantize odd-symmetric.
    const long r = std::lround(v * inv_scale);
    q[i] = static_cast<int>(std::clamp<long>(r, -hi, hi));
  }
  return q;
}

template <typename Scalar = double, typename Derived>
Vector<Scalar> dequantize(const Eigen::MatrixBase<Derived>& q,
                          const QuantSpec& spec) {
  return q.template cast<Scalar>() * static_cast<Scalar>(spec.scale());
}

template <typename Derived>
Eigen::VectorXi offset_encode(const Eigen::MatrixBase<Derived>& q,
                              const QuantSpec& spec) {
  return q.array() + spec.offset();
}

/// A document coordinate-by-slice: slices(j, s) holds digit s of the
/// offset-encoded coordinate j in base L, least significant first.
struct SlicedVector {
  DocId doc_id = 0;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> slices;
};

SlicedVector bit_slice(const Eigen::Ref<const Eigen::VectorXi>& u,
                       const DeviceProfile& profile, const QuantSpec& spec,
                       DocId doc_id = 0);

/// Shift-and-add: sum_s slices[s] * L^s. Accepts integer digits or noisy
/// real-valued cell reads.
template <typename Derived>
typename Derived::Scalar recombine(const Eigen::DenseBase<Derived>& slices,
                                   int levels) {
  using Scalar = typename Derived::Scalar;
  Scalar acc = 0;
  Scalar weight = 1;
  for (Eigen::Index s = 0; s < slices.size(); ++s) {
    acc += slices.derived().coeff(s) * weight;
    weight *= static_cast<Scalar>(levels);
  }
  return acc;
}

template <typename Derived>
typename Derived::Scalar recombine(const Eigen::DenseBase<Derived>& slices,
                                   const DeviceProfile& profile) {
  return recombine(slices, profile.levels());
}

// ---------------------------------------------------------------------------
// Projection head
// ---------------------------------------------------------------------------

/// Linear reshape map from the base embedding space (din) to the crossbar
/// dimension (d_out); outputs are L2-normalized.
template <typename Scalar>
struct BasicProjectionHead {
  Matrix<Scalar> w;  // din x d_out

  Eigen::Index din() const { return w.rows(); }
  Eigen::Index d_out() const { return w.cols(); }

  /// Seeded Gaussian draws followed by modified Gram-Schmidt. When
  /// d_out > din only the first din columns can be orthogonal; the rest are
  /// merely unit-norm.
  static BasicProjectionHead random_orthonormal(Eigen::Index din,
                                                Eigen::Index d_out,
                                                std::uint64_t seed) {
    if (din < 1 || d_out < 1) {
      throw ConfigError("projection head dimensions must be positive");
    }
    BasicProjectionHead head;
    head.w.resize(din, d_out);
    CounterRng rng = CounterRng::stream(seed, {0x68656164ULL});
    for (Eigen::Index c = 0; c < d_out; ++c) {
      for (Eigen::Index r = 0; r < din; ++r) {
        head.w(r, c) = static_cast<Scalar>(rng.normal());
      }
    }
    for (Eigen::Index c = 0; c < d_out; ++c) {
      auto col = head.w.col(c);
      const Eigen::Index basis = std::min(c, din);
      for (Eigen::Index prev = 0; prev < basis; ++prev) {
        col -= head.w.col(prev).dot(col) * head.w.col(prev);
      }
      col.normalize();
    }
    return head;
  }

  template <typename Other>
  BasicProjectionHead<Other> cast() const {
    return {w.template cast<Other>()};
  }

  bool all_finite() const { return w.allFinite(); }
};

using ProjectionHead = BasicProjectionHead<double>;

/// normalize(w^T base). Throws ConfigError on a dimension mismatch and
/// DomainError when the projection vanishes.
template <typename Scalar, typename Derived>
Vector<Scalar> project(const BasicProjectionHead<Scalar>& head,
                       const Eigen::MatrixBase<Derived>& base) {
  if (base.size() != head.din()) {
    throw ConfigError("project: base dimension " + std::to_string(base.size()) +
                      " != head din " + std::to_string(head.din()));
  }
  Vector<Scalar> z = head.w.transpose() * base.template cast<Scalar>();
  const Scalar n = z.norm();
  if (!(n > Scalar(0))) throw DomainError("project: zero-norm projection");
  return z / n;
}

/// Projects every row; returns a row-major (count x d_out) fp32 matrix of
/// unit-norm rows.
RowMatrix<float> project_rows(const ProjectionHead& head,
                              const EmbeddingMatrix& base);

void to_json(nlohmann::json& j, const ProjectionHead& head);
void from_json(const nlohmann::json& j, ProjectionHead& head);

// ---------------------------------------------------------------------------
// Synthetic text embedding
// ---------------------------------------------------------------------------

/// Deterministic stand-in for a sentence encoder: signed feature hashing of
/// byte trigrams (with begin/end markers) into `din` buckets, L2-normalized.
/// Throws ConfigError if din < 8 and DomainError for empty text.
Eigen::VectorXf hash_embed(std::string_view text, int din, std::uint64_t seed);

}  // namespace cimrag
