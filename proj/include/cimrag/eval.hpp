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
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cimrag/cim_index.hpp"
#include "cimrag/device_model.hpp"
#include "cimrag/embedding_codec.hpp"
#include "cimrag/types.hpp"

namespace cimrag {

struct MipsAccuracyReport {
  double top1_match_rate = 0.0;
  double topk_overlap = 0.0;
  int k = 0;
  int n_queries = 0;
  double sigma_scale = 0.0;
  std::string device;
  std::vector<std::uint64_t> seeds;
};

/// Pairs results by query_id. Throws ConfigError on unpaired ids or
/// mismatched k.
MipsAccuracyReport mips_accuracy(const std::vector<RetrievalResult>& noisy,
                                 const std::vector<RetrievalResult>& clean);

enum class TaskKind { Classification, Regression };

struct ProxyMetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> mae;
  std::optional<double> rmse;
  TaskKind task = TaskKind::Classification;
};

using LabelMap = std::unordered_map<DocId, std::string>;

/// Majority label among each query's top `vote_k` documents, ties going to
/// the best-ranked tied label. Macro-F1 averages over every label that occurs
/// as truth or prediction. Regression also reports MAE/RMSE on the numeric
/// label values.
ProxyMetricsReport proxy_metrics(const std::vector<RetrievalResult>& results,
                                 const LabelMap& doc_labels,
                                 const LabelMap& query_labels, TaskKind task,
                                 int vote_k = 1);

/// true for queries whose clean top-2 gap exceeds `min_gap`.
std::vector<bool> gap_mask(const std::vector<RetrievalResult>& clean, double min_gap);

/// Top-1 match rate restricted to masked-in queries (NaN when none remain).
double masked_top1_rate(const std::vector<RetrievalResult>& noisy,
                        const std::vector<RetrievalResult>& clean,
                        const std::vector<bool>& mask);

struct EvalOptions {
  int k = 5;
  QuantSpec quant{8};
  int array_size = 64;
  std::optional<WriteVerifyConfig> write_verify;
  NoiseMode mode = NoiseMode::DeviceTable;
  double sigma_scale = 0.1;      // used by compare_devices
  bool fp32_reference = false;   // default reference: zero-noise crossbar
  double gap_lsb = 2.0;          // near-tie filter, in quantization steps
  int vote_k = 1;
};

struct SweepRow {
  double sigma = 0.0;
  std::string device;
  double top1_mean = 0.0;
  double top1_std = 0.0;
  double top1_filtered_mean = 0.0;
  double topk_overlap_mean = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_filtered = 0;
  int seed_count = 0;
};

/// One index per (sigma, seed), scored against the zero-noise reference.
/// sigma is sigma_scale in DeviceTable mode and naive_sigma otherwise. All
/// sigmas for a seed share the same noise stream.
std::vector<SweepRow> sweep_sigma(const EmbeddingMatrix& corpus,
                                  const EmbeddingMatrix& queries,
                                  const ProjectionHead& head,
                                  const DeviceProfile& device,
                                  const std::vector<double>& sigma_list,
                                  const std::vector<std::uint64_t>& seeds,
                                  const EvalOptions& opts = {});

struct CompareRow {
  std::string device;
  std::string method;
  double sigma = 0.0;
  double top1_mean = 0.0;
  double top1_std = 0.0;
  double top1_filtered_mean = 0.0;
  double topk_overlap_mean = 0.0;
  std::optional<ProxyMetricsReport> proxy;  // mean over seeds
  std::size_t n_queries = 0;
  int seed_count = 0;
};

struct LabelContext {
  LabelMap doc_labels;
  LabelMap query_labels;
  TaskKind task = TaskKind::Classification;
};

/// Evaluates every (device, method) at opts.sigma_scale. `heads` must contain
/// "untrained", "cde" and "cdi".
std::vector<CompareRow> compare_devices(
    const EmbeddingMatrix& corpus, const EmbeddingMatrix& queries,
    const std::map<std::string, ProjectionHead>& heads,
    const std::vector<DeviceProfile>& devices,
    const std::vector<std::uint64_t>& seeds, const EvalOptions& opts = {},
    const LabelContext* labels = nullptr);

/// Column order shared by every CSV table.
inline constexpr const char* kCsvHeader =
    "sigma_scale,device,method,top1_match_rate,topk_overlap,accuracy,macro_f1,"
    "mae,rmse,seed_count,top1_match_rate_std,top1_match_rate_filtered,"
    "n_queries,n_queries_filtered";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows,
                     const std::string& method);
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);

void to_json(nlohmann::json& j, const MipsAccuracyReport& r);
void to_json(nlohmann::json& j, const ProxyMetricsReport& r);

}  // namespace cimrag
