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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cimrag/cim_index.hpp"
#include "cimrag/device_model.hpp"
#include "cimrag/trainer.hpp"

namespace cimrag {

enum class EmbeddingSource { HashEmbed, Emb1File };
enum class ConstructMode { None, CDE, CDI };

/// Everything a subcommand needs. Paths left empty default to well-known
/// names inside output_dir, so the subcommands chain without extra flags:
///
///   embed -> docs.emb1, queries.emb1
///   construct -> triplets.trp1
///   train -> head.json, train_report.json
///   program -> index.json (+ index.cells.f32)
///   query -> results.json
///   eval -> eval_report.json
///   sweep -> sweep.csv
///   compare -> compare.csv
struct ExperimentConfig {
  std::filesystem::path dataset;            // JSONL documents
  std::filesystem::path queries;            // JSONL queries
  EmbeddingSource embedding_source = EmbeddingSource::HashEmbed;
  std::filesystem::path embeddings;         // EMB1 docs
  std::filesystem::path query_embeddings;   // EMB1 queries
  std::string query_text;                   // single hash-embedded query
  int din = 384;
  std::uint64_t hash_seed = 7;

  std::string device = "Device-1";
  int precision_bits = 8;
  int d_out = 64;
  int array_size = 64;
  double sigma_scale = 0.1;
  NoiseMode noise_mode = NoiseMode::DeviceTable;
  std::optional<WriteVerifyConfig> write_verify;

  ConstructMode mode = ConstructMode::CDI;
  TrainConfig train;  // device/quant/noise/seed are filled from the fields above
  int k = 5;
  bool fp32_reference = false;  // rank against fp32 cosine instead of a zero-noise crossbar
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<double> sigma_list = {0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15};
  std::vector<std::string> devices;         // compare; empty = all builtins

  std::filesystem::path triplets;
  std::filesystem::path head;
  std::filesystem::path index;
  std::map<std::string, std::filesystem::path> heads;  // compare: method -> head

  // Synthetic text corpus (synth subcommand).
  int synth_docs = 2000;
  int synth_queries = 200;
  int synth_topics = 8;
  bool synth_numeric_labels = false;

  std::filesystem::path output_dir = "out";

  /// Default output directory: $CIMRAG_OUTPUT_DIR when set, else "out".
  static std::filesystem::path default_output_dir();

  /// Effective training config (device, quantization and noise applied).
  TrainConfig train_config() const;
  NoiseConfig noise_config(std::uint64_t noise_seed) const;
  QuantSpec quant() const { return QuantSpec(precision_bits); }

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Hash of the config parameters. Paths are left out: identical experiments
/// over identical inputs hash the same wherever they live. Manifests record
/// each input path with a content hash alongside.
std::string config_hash(const ExperimentConfig& c);

inline constexpr std::string_view kCommands[] = {
    "synth", "embed", "construct", "train", "program", "query", "eval", "sweep", "compare"};

/// Runs one subcommand and writes its artifacts plus manifest_<command>.json
/// into output_dir. Returns 0 on success; on failure prints the reason to
/// `err` and returns nonzero.
int run(std::string_view command, const ExperimentConfig& config, std::ostream& log,
        std::ostream& err);

}  // namespace cimrag
