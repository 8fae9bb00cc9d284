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

#include <cmath>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "cimrag/embedding_codec.hpp"

namespace cimrag {
namespace {

TEST(Quantize, RoundsAndClamps) {
  const QuantSpec spec(8);
  EXPECT_EQ(spec.max_code(), 127);
  EXPECT_EQ(spec.offset(), 128);
  Eigen::VectorXd v(6);
  v << 0.0, 1.0, -1.0, 2.0, -3.0, 0.5;
  const Eigen::VectorXi q = quantize(v, spec);
  EXPECT_EQ(q, (Eigen::VectorXi(6) << 0, 127, -127, 127, -127, 64).finished());
}

TEST(Quantize, OddSymmetry) {
  const QuantSpec spec(8);
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(2001, -1.2, 1.2);
  EXPECT_EQ(quantize(Eigen::VectorXd(-v), spec), Eigen::VectorXi(-quantize(v, spec)));
}

TEST(Quantize, NonFiniteRejected) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
  v[1] = std::nan("");
  EXPECT_THROW(quantize(v, QuantSpec(8)), DomainError);
  v[1] = INFINITY;
  EXPECT_THROW(quantize(v, QuantSpec(8)), DomainError);
}

TEST(Quantize, ErrorBoundedByHalfStep) {
  const QuantSpec spec(8);
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(999, -1, 1);
  const Eigen::VectorXd back = dequantize<double>(quantize(v, spec), spec);
  EXPECT_LE((back - v).cwiseAbs().maxCoeff(), 0.5 * spec.scale() + 1e-12);
}

TEST(Quantize, OffsetIdentity) {
  const QuantSpec spec(8);
  const Eigen::VectorXi q = Eigen::VectorXi::LinSpaced(255, -127, 127);
  const Eigen::VectorXi u = offset_encode(q, spec);
  EXPECT_EQ(u.minCoeff(), 1);
  EXPECT_EQ(u.maxCoeff(), 255);
  EXPECT_EQ(Eigen::VectorXi(u.array() - spec.offset()), q);
}

TEST(QuantSpecTest, PrecisionMustDivide) {
  EXPECT_THROW(QuantSpec(1), ConfigError);
  EXPECT_THROW(QuantSpec(17), ConfigError);
  EXPECT_EQ(QuantSpec(8).slices_for(find_device("Device-1")), 8);
  EXPECT_EQ(QuantSpec(8).slices_for(find_device("Device-2")), 4);
  EXPECT_THROW(QuantSpec(7).slices_for(find_device("Device-2")), ConfigError);
}

TEST(BitSlice, KnownDigits) {
  // 181 = 0b10110101, two bits per cell, least significant first.
  const Eigen::VectorXi u = (Eigen::VectorXi(1) << 181).finished();
  const SlicedVector s = bit_slice(u, find_device("Device-2"), QuantSpec(8), 5);
  EXPECT_EQ(s.doc_id, 5);
  ASSERT_EQ(s.slices.rows(), 1);
  ASSERT_EQ(s.slices.cols(), 4);
  EXPECT_EQ(s.slices(0, 0), 1);
  EXPECT_EQ(s.slices(0, 1), 1);
  EXPECT_EQ(s.slices(0, 2), 3);
  EXPECT_EQ(s.slices(0, 3), 2);

  const SlicedVector b = bit_slice(u, find_device("Device-1"), QuantSpec(8), 0);
  const int bits[8] = {1, 0, 1, 0, 1, 1, 0, 1};
  for (int i = 0; i < 8; ++i) EXPECT_EQ(b.slices(0, i), bits[i]);
}

TEST(BitSlice, ExhaustiveBijection) {
  const QuantSpec spec(8);
  for (const auto& dev : builtin_devices()) {
    std::set<std::string> seen;
    const Eigen::VectorXi u = Eigen::VectorXi::LinSpaced(256, 0, 255);
    const SlicedVector s = bit_slice(u, dev, spec, 0);
    for (int i = 0; i < 256; ++i) {
      const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic> row = s.slices.row(i);
      EXPECT_EQ(recombine(row.cast<int>(), dev.levels()), i);
      EXPECT_LT(row.maxCoeff(), dev.levels());
      seen.emplace(row.data(), row.data() + row.size());
    }
    EXPECT_EQ(seen.size(), 256u) << dev.name;
  }
}

TEST(BitSlice, OutOfRangeRejected) {
  const Eigen::VectorXi u = (Eigen::VectorXi(2) << 3, 256).finished();
  EXPECT_THROW(bit_slice(u, find_device("Device-1"), QuantSpec(8), 0), DomainError);
  const Eigen::VectorXi neg = (Eigen::VectorXi(1) << -1).finished();
  EXPECT_THROW(bit_slice(neg, find_device("Device-1"), QuantSpec(8), 0), DomainError);
}

TEST(ProjectionHeadTest, OrthonormalAndSeeded) {
  const auto h = ProjectionHead::random_orthonormal(96, 32, 11);
  const Eigen::MatrixXd gram = h.w.transpose() * h.w;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(32, 32)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(ProjectionHead::random_orthonormal(96, 32, 11).w, h.w);
  EXPECT_NE(ProjectionHead::random_orthonormal(96, 32, 12).w, h.w);
}

TEST(ProjectionHeadTest, ProjectNormalizesAndChecks) {
  const auto h = ProjectionHead::random_orthonormal(16, 4, 0);
  const Eigen::VectorXf b = Eigen::VectorXf::LinSpaced(16, 0.f, 1.f);
  EXPECT_NEAR(project(h, b).norm(), 1.0, 1e-12);
  EXPECT_THROW(project(h, Eigen::VectorXf::Ones(15)), ConfigError);
  EXPECT_THROW(project(h, Eigen::VectorXf::Zero(16)), DomainError);
}

TEST(ProjectionHeadTest, JsonRoundTrip) {
  const auto h = ProjectionHead::random_orthonormal(12, 5, 3);
  const auto back = nlohmann::json(h).get<ProjectionHead>();
  EXPECT_EQ(back.w, h.w);
}

TEST(ProjectionHeadTest, PreservesPairwiseOrdering) {
  // Pairwise similarity order survives a random 384 -> 64 projection more
  // often than chance.
  const int din = 384, n = 200;
  CounterRng rng = CounterRng::stream(5, {});
  Eigen::MatrixXf base(din, n);
  for (int i = 0; i < base.size(); ++i) base.data()[i] = static_cast<float>(rng.normal());
  base.colwise().normalize();
  const auto h = ProjectionHead::random_orthonormal(din, 64, 9);
  int agree = 0, total = 0;
  for (int i = 0; i + 2 < n; i += 3) {
    const double dx = base.col(i).dot(base.col(i + 1)) - base.col(i).dot(base.col(i + 2));
    const auto a = project(h, Eigen::VectorXf(base.col(i)));
    const auto b = project(h, Eigen::VectorXf(base.col(i + 1)));
    const auto c = project(h, Eigen::VectorXf(base.col(i + 2)));
    const double dy = a.dot(b) - a.dot(c);
    agree += (dx > 0) == (dy > 0);
    ++total;
  }
  EXPECT_GE(static_cast<double>(agree) / total, 0.6);
}

TEST(HashEmbed, UnitNormDeterministicAndSpread) {
  const auto a = hash_embed("the quick brown fox", 384, 1);
  EXPECT_NEAR(a.norm(), 1.0, 1e-5);
  EXPECT_EQ(hash_embed("the quick brown fox", 384, 1), a);
  EXPECT_NE(hash_embed("the quick brown fox", 384, 2), a);
  CounterRng rng = CounterRng::stream(0, {});
  double total = 0;
  const int pairs = 200;
  for (int i = 0; i < pairs; ++i) {
    std::string s, t;
    for (int c = 0; c < 30; ++c) {
      s += static_cast<char>('a' + rng.below(26));
      t += static_cast<char>('a' + rng.below(26));
    }
    total += std::abs(hash_embed(s, 384, 1).dot(hash_embed(t, 384, 1)));
  }
  EXPECT_LT(total / pairs, 0.3);
}

TEST(HashEmbed, RejectsBadInput) {
  EXPECT_THROW(hash_embed("", 384, 0), DomainError);
  EXPECT_THROW(hash_embed("abc", 4, 0), ConfigError);
}

}  // namespace
}  // namespace cimrag
