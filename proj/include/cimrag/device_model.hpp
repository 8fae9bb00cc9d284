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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cimrag/rng.hpp"
#include "cimrag/types.hpp"

namespace cimrag {

/// A multi-level NVM cell technology. Variation is expressed per programmed
/// level as a standard deviation in normalized conductance, where the full
/// conductance range is 1 and level l sits at l / (L - 1).
struct DeviceProfile {
  std::string name;
  int bits_per_cell = 1;
  std::vector<double> sigma_per_level;

  int levels() const { return 1 << bits_per_cell; }

  // Throws ConfigError unless L >= 2 and there is one non-negative sigma per
  // level.
  void validate() const;

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

enum class NoiseMode { DeviceTable, NaiveGaussian };

struct NoiseConfig {
  /// Table sigmas are reproduced exactly at this global scale.
  static constexpr double kSigmaRef = 0.1;

  double sigma_scale = 0.1;
  NoiseMode mode = NoiseMode::DeviceTable;
  double naive_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Standard deviation, in normalized conductance, for a cell at `level`.
  double effective_sigma(const DeviceProfile& profile, int level) const;

  void validate() const;
};

/// The five characterized devices, in order Device-1 .. Device-5.
const std::vector<DeviceProfile>& builtin_devices();

/// Finds a builtin by its display name ("Device-2") or its technology alias
/// ("FeFET_2"), case-insensitively. Throws ConfigError when unknown.
const DeviceProfile& find_device(std::string_view name);

/// One zero-mean Gaussian draw of the programming deviation for a cell
/// targeted at `level`, in normalized conductance units.
double sample_cell_noise(const DeviceProfile& profile, int level,
                         const NoiseConfig& cfg, CounterRng& rng);

/// Adds i.i.d. N(0, sigma) to every coordinate; no renormalization.
template <typename Derived>
Vector<typename Derived::Scalar> perturb_embedding_naive(
    const Eigen::MatrixBase<Derived>& vec, double naive_sigma,
    CounterRng& rng) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out = vec;
  if (naive_sigma == 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] += static_cast<Scalar>(naive_sigma * rng.normal());
  }
  return out;
}

void to_json(nlohmann::json& j, const DeviceProfile& p);
void from_json(const nlohmann::json& j, DeviceProfile& p);

void to_json(nlohmann::json& j, const NoiseConfig& c);
void from_json(const nlohmann::json& j, NoiseConfig& c);

std::string_view to_string(NoiseMode mode);
NoiseMode noise_mode_from_string(std::string_view s);

}  // namespace cimrag
