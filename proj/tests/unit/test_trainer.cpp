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

#include <gtest/gtest.h>

#include "cimrag/cim_index.hpp"
#include "cimrag/dataset.hpp"
#include "cimrag/trainer.hpp"

namespace cimrag {
namespace {

Eigen::VectorXf unit_random(int n, CounterRng& rng) {
  Eigen::VectorXf v(n);
  for (int i = 0; i < n; ++i) v[i] = static_cast<float>(rng.normal());
  return v.normalized();
}

std::vector<DocumentRecord> tiny_dataset() {
  return {{1, "apples are red", "fruit"}, {2, "the sky is blue", "weather"},
          {3, "engines burn fuel", "cars"}};
}

TEST(Dropout, RateZeroIsIdentity) {
  CounterRng rng = CounterRng::stream(0, {});
  const Eigen::VectorXf v = unit_random(32, rng);
  EXPECT_EQ(dropout_embed(v, 0.0, rng), v);
  EXPECT_THROW(dropout_embed(v, 1.0, rng), ConfigError);
}

TEST(Dropout, DroppedFraction) {
  CounterRng rng = CounterRng::stream(1, {});
  const Eigen::VectorXf v = Eigen::VectorXf::Ones(10000);
  for (double rate : {0.1, 0.9}) {
    const Eigen::VectorXf d = dropout_embed(v, rate, rng);
    const double dropped = static_cast<double>((d.array() == 0.0f).count()) / 10000.0;
    EXPECT_GE(dropped, rate - 0.01);
    EXPECT_LE(dropped, rate + 0.01);
    EXPECT_NEAR(d.norm(), 1.0f, 1e-5f);
  }
}

TEST(Dropout, AllDroppedTwiceIsAnError) {
  CounterRng rng = CounterRng::stream(2, {});
  const Eigen::VectorXf v = (Eigen::VectorXf(1) << 1.0f).finished();
  int errors = 0;
  for (int i = 0; i < 2000; ++i) {
    try {
      dropout_embed(v, 0.9, rng);
    } catch (const DomainError&) {
      ++errors;
    }
  }
  // P(error) = 0.81 for a single coordinate.
  EXPECT_NEAR(errors / 2000.0, 0.81, 0.03);
}

TEST(Cde, ShapeAndLabelIntegrity) {
  const auto emb = hash_embedder(128, 3);
  const auto set = construct_cde(tiny_dataset(), 2, 0.1, emb, 0);
  ASSERT_EQ(set.size(), 6u);
  EXPECT_FALSE(set.sampled_with_replacement);
  const auto data = tiny_dataset();
  for (const auto& t : set.triplets) {
    const auto& rec = *std::find_if(data.begin(), data.end(),
                                    [&](const auto& r) { return r.id == t.source_id; });
    EXPECT_NE(t.negative_label, *rec.label);
    EXPECT_EQ(t.anchor, emb(concat_content_label(rec.content, *rec.label)));
    EXPECT_EQ(t.negative, emb(concat_content_label(rec.content, t.negative_label)));
    EXPECT_EQ(t.provenance, Provenance::CDE);
  }
  // K = 2 equals the number of foreign labels: both appear once per anchor.
  for (int i = 0; i < 3; ++i) {
    EXPECT_NE(set.triplets[2 * i].negative_label, set.triplets[2 * i + 1].negative_label);
  }
}

TEST(Cde, ExcessKSamplesWithReplacement) {
  const auto set = construct_cde(tiny_dataset(), 5, 0.1, hash_embedder(64, 0), 0);
  EXPECT_EQ(set.size(), 15u);
  EXPECT_TRUE(set.sampled_with_replacement);
}

TEST(Cde, Errors) {
  auto data = tiny_dataset();
  const auto emb = hash_embedder(64, 0);
  EXPECT_THROW(construct_cde({{1, "a", "x"}, {2, "b", "x"}}, 1, 0.1, emb, 0), ConfigError);
  data[1].label.reset();
  EXPECT_THROW(construct_cde(data, 1, 0.1, emb, 0), ConfigError);
  EXPECT_THROW(construct_cde(tiny_dataset(), 0, 0.1, emb, 0), ConfigError);
  EXPECT_THROW(construct_cde(tiny_dataset(), 1, 0.5, emb, 0), ConfigError);
}

TEST(Cde, ZeroDropoutPositivesEqualAnchors) {
  const auto set = construct_cde(tiny_dataset(), 2, 0.0, hash_embedder(128, 1), 0);
  for (const auto& t : set.triplets) {
    EXPECT_EQ(t.positive, t.anchor);
    // cos(a, p) = 1, so the hinge reduces to max(0, cos(a, n) - 1 + m) <= m.
    const double cos_an = t.anchor.dot(t.negative) / (t.anchor.norm() * t.negative.norm());
    EXPECT_NEAR(triplet_loss(t.anchor, t.positive, t.negative, 0.5),
                std::max(0.0, cos_an - 1.0 + 0.5), 1e-6);
    EXPECT_LE(triplet_loss(t.anchor, t.positive, t.negative, 0.5), 0.5f + 1e-6f);
  }
}

TEST(Cdi, DropoutRatesAndDeterminism) {
  const auto corpus = make_clustered_corpus({.n_docs = 50, .n_queries = 1, .din = 384});
  const auto set = construct_cdi(corpus.docs, 3, 0.1, 7);
  ASSERT_EQ(set.size(), 150u);
  std::size_t pos_zero = 0, neg_zero = 0;
  double cos_p = 0, cos_n = 0;
  for (const auto& t : set.triplets) {
    pos_zero += static_cast<std::size_t>((t.positive.array() == 0.0f).count());
    neg_zero += static_cast<std::size_t>((t.negative.array() == 0.0f).count());
    cos_p += t.anchor.dot(t.positive);
    cos_n += t.anchor.dot(t.negative);
  }
  const double total = 150.0 * 384.0;
  EXPECT_NEAR(pos_zero / total, 0.1, 0.01);
  EXPECT_NEAR(neg_zero / total, 0.9, 0.01);
  EXPECT_GT(cos_p, cos_n);
  const auto again = construct_cdi(corpus.docs, 3, 0.1, 7);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(again.triplets[i].negative, set.triplets[i].negative);
  }
  EXPECT_THROW(construct_cdi(corpus.docs, 3, 0.0, 7), ConfigError);
  EXPECT_THROW(construct_cdi(corpus.docs, 3, 0.25, 7), ConfigError);
}

TEST(Cdi, FromRecordsUsesContentOnly) {
  const auto emb = hash_embedder(64, 2);
  const auto set = construct_cdi(tiny_dataset(), 2, 0.2, emb, 0);
  ASSERT_EQ(set.size(), 6u);
  EXPECT_EQ(set.triplets[0].anchor, emb("apples are red"));
  EXPECT_EQ(set.triplets[0].provenance, Provenance::CDI);
}

TEST(TripletLoss, EdgeCases) {
  const Eigen::VectorXd a = Eigen::VectorXd::Unit(4, 0);
  EXPECT_DOUBLE_EQ(triplet_loss(a, a, a, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(triplet_loss(a, a, Eigen::VectorXd(-a), 0.5), 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(a, a, a, 0.5, Similarity::Euclidean), 0.5);
  // Hinge inactive: exactly zero gradient.
  const Eigen::VectorXd p = (Eigen::VectorXd(4) << 1, 0.1, 0, 0).finished();
  const Eigen::VectorXd n = Eigen::VectorXd::Unit(4, 1);
  const auto g = triplet_loss_grad(a, p, n, 0.5);
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_TRUE(g.anchor.isZero(0.0) && g.positive.isZero(0.0) && g.negative.isZero(0.0));
  // Active: cos(a,n) - cos(a,p) + m.
  const Eigen::VectorXd n2 = (Eigen::VectorXd(4) << 1, 1, 0, 0).finished();
  EXPECT_NEAR(triplet_loss(a, n, n2, 0.5), std::sqrt(0.5) - 0.0 + 0.5, 1e-12);
}

TEST(TripletLoss, NonNegativeOnRandomTriplets) {
  CounterRng rng = CounterRng::stream(3, {});
  for (int i = 0; i < 500; ++i) {
    const auto a = unit_random(8, rng), p = unit_random(8, rng), n = unit_random(8, rng);
    EXPECT_GE(triplet_loss(a, p, n, 0.5), 0.0f);
    EXPECT_GE(triplet_loss(a, p, n, 0.5, Similarity::Euclidean), 0.0f);
  }
}

TEST(TripletLoss, BatchLossDividesByK) {
  TripletSet set;
  set.K = 2;
  Triplet t;
  t.anchor = t.positive = t.negative = Eigen::VectorXf::Unit(3, 0);
  set.triplets = {t, t, t, t};
  EXPECT_DOUBLE_EQ(batch_triplet_loss(set, 0.5), 1.0);
}

double head_loss(const ProjectionHead& h, const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                 const Eigen::VectorXd& n, Similarity sim) {
  return triplet_head_grad(h, a, p, n, 0.5, sim).loss;
}

TEST(Gradients, HeadGradientMatchesFiniteDifferences) {
  CounterRng rng = CounterRng::stream(4, {});
  for (Similarity sim : {Similarity::Cosine, Similarity::Euclidean}) {
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
      ProjectionHead h = ProjectionHead::random_orthonormal(12, 6, 100 + trial);
      const Eigen::VectorXd a = unit_random(12, rng).cast<double>();
      const Eigen::VectorXd p = unit_random(12, rng).cast<double>();
      const Eigen::VectorXd n = unit_random(12, rng).cast<double>();
      const auto g = triplet_head_grad(h, a, p, n, 0.5, sim);
      if (g.loss <= 1e-3) continue;
      Eigen::MatrixXd fd(12, 6);
      const double eps = 1e-6;
      for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 6; ++j) {
          ProjectionHead hp = h, hm = h;
          hp.w(i, j) += eps;
          hm.w(i, j) -= eps;
          fd(i, j) = (head_loss(hp, a, p, n, sim) - head_loss(hm, a, p, n, sim)) / (2 * eps);
        }
      }
      EXPECT_LT((fd - g.grad_w).norm() / g.grad_w.norm(), 1e-4);
      ++checked;
    }
    EXPECT_GT(checked, 5);
  }
}

TEST(Gradients, LossGradientMatchesFiniteDifferences) {
  CounterRng rng = CounterRng::stream(5, {});
  const Eigen::VectorXd a = unit_random(6, rng).cast<double>();
  const Eigen::VectorXd p = unit_random(6, rng).cast<double>();
  const Eigen::VectorXd n = (a + 0.2 * unit_random(6, rng).cast<double>()).eval();
  const auto g = triplet_loss_grad(a, p, n, 0.5);
  ASSERT_GT(g.loss, 0.0);
  const double eps = 1e-6;
  for (int which = 0; which < 3; ++which) {
    Eigen::VectorXd fd(6);
    for (int i = 0; i < 6; ++i) {
      Eigen::VectorXd v[2][3] = {{a, p, n}, {a, p, n}};
      v[0][which][i] += eps;
      v[1][which][i] -= eps;
      fd[i] = (triplet_loss(v[0][0], v[0][1], v[0][2], 0.5) -
               triplet_loss(v[1][0], v[1][1], v[1][2], 0.5)) /
              (2 * eps);
    }
    const Eigen::VectorXd& an = which == 0 ? g.anchor : which == 1 ? g.positive : g.negative;
    EXPECT_LT((fd - an).norm() / an.norm(), 1e-6);
  }
}

TrainConfig quiet_config() {
  TrainConfig cfg;
  cfg.device = find_device("Device-1");
  cfg.noise.sigma_scale = 0.1;
  return cfg;
}

TEST(NoisyForward, NoQuantNoNoiseEqualsProject) {
  const auto h = ProjectionHead::random_orthonormal(32, 8, 1);
  CounterRng rng = CounterRng::stream(0, {});
  const Eigen::VectorXf b = unit_random(32, rng);
  TrainConfig cfg = quiet_config();
  cfg.noise.sigma_scale = 0.0;
  cfg.quantize_forward = false;
  EXPECT_EQ(noisy_forward(h, b, cfg, rng), project(h, b));
  cfg.quantize_forward = true;
  const Eigen::VectorXd y = project(h, b);
  const Eigen::VectorXd q = dequantize<double>(quantize(y, cfg.quant), cfg.quant);
  EXPECT_LT((noisy_forward(h, b, cfg, rng) - q.normalized()).norm(), 1e-12);
}

// Predicted read-back std of one coordinate in code units: each slice s at
// level l contributes (L - 1) * sigma(l) * L^s.
double predicted_code_std(int code, const DeviceProfile& dev, const NoiseConfig& noise,
                          const QuantSpec& quant) {
  const int u = code + quant.offset();
  const int S = quant.slices_for(dev);
  const int L = dev.levels();
  double var = 0, weight = 1;
  for (int s = 0; s < S; ++s) {
    const int level = (u >> (s * dev.bits_per_cell)) & (L - 1);
    const double sd = (L - 1) * noise.effective_sigma(dev, level) * weight;
    var += sd * sd;
    weight *= L;
  }
  return std::sqrt(var);
}

TEST(NoisyForward, InjectedNoiseMatchesAnalyticStd) {
  for (const char* name : {"Device-1", "Device-3"}) {
    TrainConfig cfg = quiet_config();
    cfg.device = find_device(name);
    CounterRng rng = CounterRng::stream(6, {});
    const Eigen::VectorXd y = unit_random(64, rng).cast<double>();
    const Eigen::VectorXi codes = quantize(y, cfg.quant);
    const Eigen::VectorXd yq = dequantize<double>(codes, cfg.quant);
    // Compare against the un-normalized readout: undo the final renormalization
    // using the known clean projection onto yq.
    double emp = 0, pred = 0;
    const int draws = 4000;
    for (int t = 0; t < draws; ++t) {
      const Eigen::VectorXd out = inject_device_noise(y, cfg, rng);
      const double scale = out.dot(yq) / yq.squaredNorm();
      const Eigen::VectorXd delta = out / scale - yq;
      emp += delta.squaredNorm();
    }
    for (int j = 0; j < 64; ++j) {
      const double sd = predicted_code_std(codes[j], cfg.device, cfg.noise, cfg.quant) *
                        cfg.quant.scale();
      pred += sd * sd;
    }
    // The projection onto yq removes one of 64 degrees of freedom.
    const double ratio = std::sqrt(emp / draws / (pred * 63.0 / 64.0));
    EXPECT_NEAR(ratio, 1.0, 0.05) << name;
  }
}

TEST(Train, LearningRateZeroLeavesHeadUnchanged) {
  const auto corpus = make_clustered_corpus({.n_docs = 40, .n_queries = 1, .din = 96});
  const auto set = construct_cdi(corpus.docs, 2, 0.1, 1);
  const auto head = ProjectionHead::random_orthonormal(96, 16, 2);
  TrainConfig cfg = quiet_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  const auto report = train(head, set, cfg);
  EXPECT_EQ(report.head.w, head.w);
  EXPECT_EQ(report.epoch_loss.size(), 2u);
}

TEST(Train, DeterministicAndLossDecreases) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto corpus =
        make_clustered_corpus({.n_docs = 200, .n_queries = 1, .din = 128, .seed = seed});
    const auto set = construct_cdi(corpus.docs, 5, 0.1, seed);
    const auto head = ProjectionHead::random_orthonormal(128, 64, seed);
    TrainConfig cfg = quiet_config();
    cfg.seed = seed;
    cfg.noise.seed = seed;
    const auto report = train(head, set, cfg);
    ASSERT_EQ(report.epoch_loss.size(), 20u);
    EXPECT_LT(report.epoch_loss.back(), report.epoch_loss.front()) << "seed " << seed;
    if (seed == 0) {
      const auto again = train(head, set, cfg);
      EXPECT_EQ(again.head.w, report.head.w);
      EXPECT_EQ(again.epoch_loss, report.epoch_loss);
    }
  }
}

TEST(Train, RejectsBadInput) {
  const auto head = ProjectionHead::random_orthonormal(16, 4, 0);
  EXPECT_THROW(train(head, TripletSet{}, quiet_config()), ConfigError);
  TripletSet set;
  Triplet t;
  t.anchor = t.positive = t.negative = Eigen::VectorXf::Ones(8);
  set.triplets.push_back(t);
  EXPECT_THROW(train(head, set, quiet_config()), ConfigError);
  TrainConfig cfg = quiet_config();
  cfg.margin = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainJson, ConfigRoundTrip) {
  TrainConfig cfg = quiet_config();
  cfg.margin = 0.3;
  cfg.similarity = Similarity::Euclidean;
  cfg.device = find_device("Device-4");
  const auto back = nlohmann::json(cfg).get<TrainConfig>();
  EXPECT_EQ(back.margin, 0.3);
  EXPECT_EQ(back.similarity, Similarity::Euclidean);
  EXPECT_EQ(back.device, cfg.device);
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(cfg));
}

}  // namespace
}  // namespace cimrag
