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

#include "cimrag/device_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace cimrag {

namespace {

struct BuiltinEntry {
  std::string_view alias;
  DeviceProfile profile;
};

// RRAM_1 is listed as a single-level device; a one-level cell stores nothing,
// so it is modeled as 1 bit per cell with the same sigma on both levels.
const std::vector<BuiltinEntry>& builtin_table() {
  static const std::vector<BuiltinEntry> table = {
      {"RRAM_1", {"Device-1", 1, {0.0100, 0.0100}}},
      {"FeFET_2", {"Device-2", 2, {0.0067, 0.0135, 0.0135, 0.0067}}},
      {"FeFET_3", {"Device-3", 2, {0.0049, 0.0146, 0.0146, 0.0049}}},
      {"RRAM_4", {"Device-4", 2, {0.0038, 0.0151, 0.0151, 0.0038}}},
      {"FeFET_6", {"Device-5", 2, {0.0026, 0.0155, 0.0155, 0.0026}}},
  };
  return table;
}

bool iequals(std::string_view a, std::string_view b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](char x, char y) {
    return std::tolower(static_cast<unsigned char>(x)) ==
           std::tolower(static_cast<unsigned char>(y));
  });
}

}  // namespace

void DeviceProfile::validate() const {
  if (bits_per_cell < 1 || bits_per_cell > 8) {
    throw ConfigError("device '" + name + "': bits_per_cell must be in [1, 8]");
  }
  if (sigma_per_level.size() != static_cast<std::size_t>(levels())) {
    throw ConfigError("device '" + name + "': expected " +
                      std::to_string(levels()) + " sigma values, got " +
                      std::to_string(sigma_per_level.size()));
  }
  for (double s : sigma_per_level) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ConfigError("device '" + name + "': sigma must be finite and >= 0");
    }
  }
}

double NoiseConfig::effective_sigma(const DeviceProfile& profile,
                                    int level) const {
  if (level < 0 || level >= profile.levels()) {
    throw DomainError("level " + std::to_string(level) + " out of range for " +
                      profile.name);
  }
  return profile.sigma_per_level[static_cast<std::size_t>(level)] *
         (sigma_scale / kSigmaRef);
}

void NoiseConfig::validate() const {
  if (!(sigma_scale >= 0.0) || !std::isfinite(sigma_scale)) {
    throw ConfigError("sigma_scale must be finite and >= 0");
  }
  if (!(naive_sigma >= 0.0) || !std::isfinite(naive_sigma)) {
    throw ConfigError("naive_sigma must be finite and >= 0");
  }
}

const std::vector<DeviceProfile>& builtin_devices() {
  static const std::vector<DeviceProfile> devices = [] {
    std::vector<DeviceProfile> out;
    for (const auto& e : builtin_table()) out.push_back(e.profile);
    return out;
  }();
  return devices;
}

const DeviceProfile& find_device(std::string_view name) {
  const auto& table = builtin_table();
  const auto& devices = builtin_devices();
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (iequals(name, table[i].alias) || iequals(name, devices[i].name)) {
      return devices[i];
    }
  }
  throw ConfigError("unknown device '" + std::string(name) + "'");
}

double sample_cell_noise(const DeviceProfile& profile, int level,
                         const NoiseConfig& cfg, CounterRng& rng) {
  const double sigma = cfg.effective_sigma(profile, level);
  if (sigma == 0.0) return 0.0;
  return sigma * rng.normal();
}

void to_json(nlohmann::json& j, const DeviceProfile& p) {
  j = nlohmann::json{{"name", p.name},
                     {"bits_per_cell", p.bits_per_cell},
                     {"sigma_per_level", p.sigma_per_level}};
}

void from_json(const nlohmann::json& j, DeviceProfile& p) {
  try {
    j.at("name").get_to(p.name);
    j.at("bits_per_cell").get_to(p.bits_per_cell);
    j.at("sigma_per_level").get_to(p.sigma_per_level);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("device profile: ") + e.what());
  }
  p.validate();
}

std::string_view to_string(NoiseMode mode) {
  return mode == NoiseMode::DeviceTable ? "device_table" : "naive_gaussian";
}

NoiseMode noise_mode_from_string(std::string_view s) {
  if (iequals(s, "device_table")) return NoiseMode::DeviceTable;
  if (iequals(s, "naive_gaussian")) return NoiseMode::NaiveGaussian;
  throw ConfigError("unknown noise mode '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const NoiseConfig& c) {
  j = nlohmann::json{{"sigma_scale", c.sigma_scale},
                     {"sigma_ref", NoiseConfig::kSigmaRef},
                     {"mode", to_string(c.mode)},
                     {"naive_sigma", c.naive_sigma},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, NoiseConfig& c) {
  c = NoiseConfig{};
  c.sigma_scale = j.value("sigma_scale", c.sigma_scale);
  c.mode = noise_mode_from_string(j.value("mode", std::string("device_table")));
  c.naive_sigma = j.value("naive_sigma", c.naive_sigma);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

}  // namespace cimrag
