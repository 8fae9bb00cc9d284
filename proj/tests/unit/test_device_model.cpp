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
#include <vector>

#include <gtest/gtest.h>

#include "cimrag/device_model.hpp"
#include "cimrag/rng.hpp"

namespace cimrag {
namespace {

TEST(DeviceTable, BuiltinValues) {
  const auto& devs = builtin_devices();
  ASSERT_EQ(devs.size(), 5u);
  EXPECT_EQ(devs[0].bits_per_cell, 1);
  EXPECT_EQ(devs[0].sigma_per_level, (std::vector<double>{0.01, 0.01}));
  EXPECT_EQ(devs[1].sigma_per_level, (std::vector<double>{0.0067, 0.0135, 0.0135, 0.0067}));
  EXPECT_EQ(devs[2].sigma_per_level, (std::vector<double>{0.0049, 0.0146, 0.0146, 0.0049}));
  EXPECT_EQ(devs[3].sigma_per_level, (std::vector<double>{0.0038, 0.0151, 0.0151, 0.0038}));
  EXPECT_EQ(devs[4].sigma_per_level, (std::vector<double>{0.0026, 0.0155, 0.0155, 0.0026}));
  for (std::size_t i = 1; i < devs.size(); ++i) EXPECT_EQ(devs[i].levels(), 4);
}

TEST(DeviceTable, LookupByNameAndAlias) {
  EXPECT_EQ(find_device("Device-3").name, "Device-3");
  EXPECT_EQ(find_device("fefet_3").name, "Device-3");
  EXPECT_EQ(find_device("RRAM_1").name, "Device-1");
  EXPECT_EQ(find_device("rram_4").name, "Device-4");
  EXPECT_THROW(find_device("Device-9"), ConfigError);
}

TEST(DeviceTable, ValidateRejectsMalformedProfiles) {
  DeviceProfile p{"x", 2, {0.1, 0.1, 0.1}};
  EXPECT_THROW(p.validate(), ConfigError);
  p.sigma_per_level = {0.1, -0.1, 0.1, 0.1};
  EXPECT_THROW(p.validate(), ConfigError);
  p.sigma_per_level = {0.1, 0.1, 0.1, 0.1};
  EXPECT_NO_THROW(p.validate());
}

TEST(EffectiveSigma, ScalesLinearly) {
  const auto& dev = find_device("Device-2");
  NoiseConfig cfg;
  cfg.sigma_scale = 0.1;
  EXPECT_DOUBLE_EQ(cfg.effective_sigma(dev, 1), 0.0135);
  cfg.sigma_scale = 0.2;
  EXPECT_DOUBLE_EQ(cfg.effective_sigma(dev, 0), 2 * 0.0067);
  cfg.sigma_scale = 0.0;
  EXPECT_EQ(cfg.effective_sigma(dev, 3), 0.0);
  EXPECT_THROW(cfg.effective_sigma(dev, 4), DomainError);
  EXPECT_THROW(cfg.effective_sigma(dev, -1), DomainError);
}

TEST(EffectiveSigma, NegativeScaleRejected) {
  NoiseConfig cfg;
  cfg.sigma_scale = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(CellNoise, ZeroScaleIsExactlyZero) {
  NoiseConfig cfg;
  cfg.sigma_scale = 0.0;
  CounterRng rng = CounterRng::stream(1, {2});
  for (const auto& dev : builtin_devices()) {
    for (int l = 0; l < dev.levels(); ++l) {
      for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_cell_noise(dev, l, cfg, rng), 0.0);
    }
  }
}

TEST(CellNoise, MomentsMatchTable) {
  const auto& dev = find_device("Device-5");
  NoiseConfig cfg;
  CounterRng rng = CounterRng::stream(42, {1});
  const int n = 50000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_cell_noise(dev, 1, cfg, rng);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 4 * 0.0155 / std::sqrt(n));
  EXPECT_NEAR(sd / 0.0155, 1.0, 0.02);
}

TEST(Rng, StreamsAreDeterministicAndDistinct) {
  CounterRng a = CounterRng::stream(7, {1, 2, 3});
  CounterRng b = CounterRng::stream(7, {1, 2, 3});
  CounterRng c = CounterRng::stream(7, {1, 2, 4});
  CounterRng d = CounterRng::stream(8, {1, 2, 3});
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    differs_c |= x != c();
    differs_d |= x != d();
  }
  EXPECT_TRUE(differs_c);
  EXPECT_TRUE(differs_d);
}

TEST(Rng, NeighbouringStreamsUncorrelated) {
  const int n = 20000;
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    CounterRng a = CounterRng::stream(3, {static_cast<std::uint64_t>(i), 0});
    CounterRng b = CounterRng::stream(3, {static_cast<std::uint64_t>(i), 1});
    const double x = a.normal(), y = b.normal();
    sxy += x * y;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double r = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_LT(std::abs(r), 4.0 / std::sqrt(n));
}

TEST(Rng, UniformAndBelowRanges) {
  CounterRng rng = CounterRng::stream(0, {});
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(NaiveNoise, ZeroSigmaIdentity) {
  Eigen::VectorXf v = Eigen::VectorXf::LinSpaced(8, -1, 1);
  CounterRng rng = CounterRng::stream(0, {});
  EXPECT_EQ(perturb_embedding_naive(v, 0.0, rng), v);
  const Eigen::VectorXf w = perturb_embedding_naive(v, 0.5, rng);
  EXPECT_NE(w, v);
}

TEST(DeviceJson, RoundTrip) {
  for (const auto& dev : builtin_devices()) {
    EXPECT_EQ(nlohmann::json(dev).get<DeviceProfile>(), dev);
  }
  NoiseConfig c;
  c.sigma_scale = 0.3;
  c.mode = NoiseMode::NaiveGaussian;
  c.naive_sigma = 0.05;
  c.seed = 99;
  const auto back = nlohmann::json(c).get<NoiseConfig>();
  EXPECT_EQ(back.sigma_scale, 0.3);
  EXPECT_EQ(back.mode, NoiseMode::NaiveGaussian);
  EXPECT_EQ(back.naive_sigma, 0.05);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_THROW(noise_mode_from_string("bogus"), ConfigError);
}

}  // namespace
}  // namespace cimrag
