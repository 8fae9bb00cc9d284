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
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cimrag/device_model.hpp"
#include "cimrag/embedding_codec.hpp"
#include "cimrag/types.hpp"

namespace cimrag {

struct WriteVerifyConfig {
  double tolerance = 0.005;  // normalized conductance
  int max_iterations = 10;

  void validate() const;
};

/// Which document and slice a crossbar column holds; doc_index < 0 when the
/// column is unused.
struct ColumnSlot {
  std::int32_t doc_index = -1;
  std::int32_t slice = -1;
};

/// One array_size x array_size crossbar. Rows carry embedding coordinates and
/// every document occupies S consecutive columns, one per slice. Cell values
/// are in level units: target + (L - 1) * deviation.
struct CrossbarTile {
  int rows = 0;
  int cols = 0;
  Matrix<float> cells;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> target_levels;
  std::vector<ColumnSlot> occupancy;
};

struct ProgrammingStats {
  std::int64_t cells = 0;
  std::int64_t writes = 0;
  std::int64_t unconverged = 0;     // write-verify hit max_iterations
  double mean_abs_error = 0.0;      // normalized conductance, over cells
};

struct ScoredDoc {
  DocId doc_id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Top-k documents, scores non-increasing, ties by ascending doc_id.
struct RetrievalResult {
  DocId query_id = 0;
  std::vector<ScoredDoc> ranked;
  int k = 0;
  bool k_clamped = false;

  /// Score difference between ranks 1 and 2 (infinity with < 2 results).
  double top2_gap() const;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

struct ProgramOptions {
  int array_size = 64;
  std::int64_t program_epoch = 0;
};

/// Documents programmed onto crossbar tiles. Immutable: the deviation field
/// is frozen at programming time and every query reads the same cells.
class ProgrammedIndex {
 public:
  const std::vector<CrossbarTile>& tiles() const { return tiles_; }
  const DeviceProfile& device() const { return device_; }
  const QuantSpec& quant() const { return quant_; }
  const NoiseConfig& noise() const { return noise_; }
  const std::optional<WriteVerifyConfig>& write_verify() const { return wv_; }
  const std::vector<DocId>& doc_ids() const { return doc_ids_; }
  const ProgrammingStats& stats() const { return stats_; }
  std::int64_t program_epoch() const { return epoch_; }
  int array_size() const { return array_size_; }
  int dim() const { return dim_; }
  int slices() const { return slices_; }
  int docs_per_tile() const { return array_size_ / slices_; }
  std::size_t size() const { return doc_ids_.size(); }

  /// Crossbar MIPS in integer code units for a quantized (signed) query:
  /// per column analog dot products, digital shift-add across slices with
  /// weights L^s, then offset correction. One score per document.
  Eigen::VectorXd raw_scores(const Eigen::Ref<const Eigen::VectorXi>& query_codes) const;

  /// Top-k over raw_scores; reported scores are rescaled by scale^2 to match
  /// cosine units.
  RetrievalResult search_codes(const Eigen::Ref<const Eigen::VectorXi>& query_codes,
                               int k, DocId query_id = 0) const;

  /// Device, quantization, noise, seed, counts and programming stats.
  nlohmann::json metadata() const;

 private:
  ProgrammedIndex() : quant_(8) {}

  std::vector<CrossbarTile> tiles_;
  DeviceProfile device_;
  QuantSpec quant_;
  NoiseConfig noise_;
  std::optional<WriteVerifyConfig> wv_;
  std::vector<DocId> doc_ids_;
  ProgrammingStats stats_;
  std::int64_t epoch_ = 0;
  int array_size_ = 64;
  int dim_ = 0;
  int slices_ = 0;

  friend ProgrammedIndex program_projected(const RowMatrix<float>&,
                                           const std::vector<DocId>&,
                                           const DeviceProfile&,
                                           const QuantSpec&, const NoiseConfig&,
                                           const std::optional<WriteVerifyConfig>&,
                                           const ProgramOptions&);
  friend ProgrammedIndex reprogram(const ProgrammedIndex&);
  friend ProgrammedIndex load_index(const std::filesystem::path&);
};

/// Programs already projected, unit-norm rows. In NaiveGaussian mode the
/// fp32 rows are perturbed before quantization and cells are written exactly.
ProgrammedIndex program_projected(const RowMatrix<float>& projected,
                                  const std::vector<DocId>& ids,
                                  const DeviceProfile& device,
                                  const QuantSpec& quant,
                                  const NoiseConfig& noise,
                                  const std::optional<WriteVerifyConfig>& wv = {},
                                  const ProgramOptions& opts = {});

ProgrammedIndex program(const EmbeddingMatrix& embeddings,
                        const ProjectionHead& head, const DeviceProfile& device,
                        const QuantSpec& quant, const NoiseConfig& noise,
                        const std::optional<WriteVerifyConfig>& wv = {},
                        const ProgramOptions& opts = {});

/// Rewrites every cell from its stored target with a fresh deviation field
/// (program_epoch + 1).
ProgrammedIndex reprogram(const ProgrammedIndex& index);

RetrievalResult mips(const ProgrammedIndex& index, const ProjectionHead& head,
                     const Eigen::Ref<const Eigen::VectorXf>& query_base, int k,
                     DocId query_id = 0);

std::vector<RetrievalResult> mips_batch(const ProgrammedIndex& index,
                                        const ProjectionHead& head,
                                        const EmbeddingMatrix& queries, int k);

/// fp32 cosine reference over projected embeddings.
RetrievalResult mips_exact(const EmbeddingMatrix& embeddings,
                           const ProjectionHead& head,
                           const Eigen::Ref<const Eigen::VectorXf>& query_base,
                           int k, DocId query_id = 0);

std::vector<RetrievalResult> mips_exact_batch(const EmbeddingMatrix& embeddings,
                                              const ProjectionHead& head,
                                              const EmbeddingMatrix& queries,
                                              int k);

/// Ranks `scores` (aligned with `ids`) descending with ascending-id ties.
RetrievalResult rank_top_k(const Eigen::Ref<const Eigen::VectorXd>& scores,
                           const std::vector<DocId>& ids, int k,
                           DocId query_id);

/// Writes <prefix>.json (metadata + layout) and <prefix>.cells.f32 (per tile:
/// cell plane then target plane, row-major fp32).
void save_index(const ProgrammedIndex& index, const std::filesystem::path& prefix);
ProgrammedIndex load_index(const std::filesystem::path& sidecar);

void to_json(nlohmann::json& j, const WriteVerifyConfig& c);
void from_json(const nlohmann::json& j, WriteVerifyConfig& c);
void to_json(nlohmann::json& j, const RetrievalResult& r);

}  // namespace cimrag
