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

#include "cimrag/cim_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "cimrag/formats.hpp"
#include "cimrag/rng.hpp"

namespace cimrag {

namespace {

constexpr std::uint64_t kNaiveTag = 0x6e61697665ULL;

// Writes one cell, re-drawing under write-verify. Returns the final value in
// level units and the number of writes spent.
std::pair<float, int> write_cell(int target, const DeviceProfile& device,
                                 const NoiseConfig& noise,
                                 const std::optional<WriteVerifyConfig>& wv,
                                 CounterRng& rng) {
  const double span = device.levels() - 1;
  double deviation = sample_cell_noise(device, target, noise, rng);
  int writes = 1;
  if (wv) {
    while (std::abs(deviation) > wv->tolerance && writes < wv->max_iterations) {
      deviation = sample_cell_noise(device, target, noise, rng);
      ++writes;
    }
  }
  return {static_cast<float>(target + span * deviation), writes};
}

void fill_cells(std::vector<CrossbarTile>& tiles, const DeviceProfile& device,
                const NoiseConfig& noise,
                const std::optional<WriteVerifyConfig>& wv, int dim,
                std::int64_t epoch, ProgrammingStats& stats) {
  const bool device_noise = noise.mode == NoiseMode::DeviceTable;
  const double span = device.levels() - 1;
  NoiseConfig exact = noise;
  exact.sigma_scale = 0.0;
  const NoiseConfig& cell_noise = device_noise ? noise : exact;

  stats = {};
  double err_sum = 0.0;
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    CrossbarTile& tile = tiles[t];
    tile.cells.setZero(tile.rows, tile.cols);
    for (int c = 0; c < tile.cols; ++c) {
      if (tile.occupancy[static_cast<std::size_t>(c)].doc_index < 0) continue;
      for (int r = 0; r < dim; ++r) {
        CounterRng rng = CounterRng::stream(
            noise.seed, {t, static_cast<std::uint64_t>(r),
                         static_cast<std::uint64_t>(c),
                         static_cast<std::uint64_t>(epoch)});
        const int target = tile.target_levels(r, c);
        const auto [value, writes] = write_cell(target, device, cell_noise, wv, rng);
        tile.cells(r, c) = value;
        const double err = std::abs(value - target) / span;
        err_sum += err;
        ++stats.cells;
        stats.writes += writes;
        if (wv && err > wv->tolerance) ++stats.unconverged;
      }
    }
  }
  stats.mean_abs_error = stats.cells ? err_sum / static_cast<double>(stats.cells) : 0.0;
}

}  // namespace

void WriteVerifyConfig::validate() const {
  if (!(tolerance > 0.0)) throw ConfigError("write-verify tolerance must be > 0");
  if (max_iterations < 1) throw ConfigError("write-verify max_iterations must be >= 1");
}

double RetrievalResult::top2_gap() const {
  if (ranked.size() < 2) return std::numeric_limits<double>::infinity();
  return ranked[0].score - ranked[1].score;
}

RetrievalResult rank_top_k(const Eigen::Ref<const Eigen::VectorXd>& scores,
                           const std::vector<DocId>& ids, int k,
                           DocId query_id) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (ids.empty()) throw ConfigError("cannot rank an empty corpus");
  RetrievalResult result;
  result.query_id = query_id;
  result.k = k;
  if (static_cast<std::size_t>(k) > ids.size()) {
    result.k = static_cast<int>(ids.size());
    result.k_clamped = true;
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[static_cast<Eigen::Index>(a)] != scores[static_cast<Eigen::Index>(b)]) {
      return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
    }
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + result.k, order.end(), better);
  result.ranked.reserve(static_cast<std::size_t>(result.k));
  for (int i = 0; i < result.k; ++i) {
    const std::size_t idx = order[static_cast<std::size_t>(i)];
    result.ranked.push_back({ids[idx], scores[static_cast<Eigen::Index>(idx)]});
  }
  return result;
}

ProgrammedIndex program_projected(const RowMatrix<float>& projected,
                                  const std::vector<DocId>& ids,
                                  const DeviceProfile& device,
                                  const QuantSpec& quant,
                                  const NoiseConfig& noise,
                                  const std::optional<WriteVerifyConfig>& wv,
                                  const ProgramOptions& opts) {
  device.validate();
  noise.validate();
  if (wv) wv->validate();
  if (projected.rows() == 0) throw ConfigError("program: empty corpus");
  if (static_cast<std::size_t>(projected.rows()) != ids.size()) {
    throw ConfigError("program: ids do not match rows");
  }
  if (opts.array_size < 1) throw ConfigError("program: array_size must be >= 1");
  if (projected.cols() > opts.array_size) {
    throw ConfigError("program: embedding dimension " +
                      std::to_string(projected.cols()) + " exceeds array size " +
                      std::to_string(opts.array_size));
  }
  const int n_slices = quant.slices_for(device);
  if (n_slices > opts.array_size) {
    throw ConfigError("program: a document needs more columns than a tile has");
  }

  ProgrammedIndex index;
  index.device_ = device;
  index.quant_ = quant;
  index.noise_ = noise;
  index.wv_ = wv;
  index.doc_ids_ = ids;
  index.epoch_ = opts.program_epoch;
  index.array_size_ = opts.array_size;
  index.dim_ = static_cast<int>(projected.cols());
  index.slices_ = n_slices;
  {
    EmbeddingMatrix check;
    check.rows.resize(static_cast<Eigen::Index>(ids.size()), 0);
    check.ids = ids;
    check.validate();
  }

  const int per_tile = index.docs_per_tile();
  const std::size_t n_docs = ids.size();
  const std::size_t n_tiles = (n_docs + static_cast<std::size_t>(per_tile) - 1) /
                              static_cast<std::size_t>(per_tile);
  index.tiles_.resize(n_tiles);
  for (auto& tile : index.tiles_) {
    tile.rows = opts.array_size;
    tile.cols = opts.array_size;
    tile.target_levels.setZero(tile.rows, tile.cols);
    tile.occupancy.assign(static_cast<std::size_t>(tile.cols), ColumnSlot{});
  }

  for (std::size_t i = 0; i < n_docs; ++i) {
    Eigen::VectorXf row = projected.row(static_cast<Eigen::Index>(i)).transpose();
    if (noise.mode == NoiseMode::NaiveGaussian) {
      CounterRng rng = CounterRng::stream(
          noise.seed, {kNaiveTag, i, static_cast<std::uint64_t>(opts.program_epoch)});
      row = perturb_embedding_naive(row, noise.naive_sigma, rng);
    }
    const Eigen::VectorXi u = offset_encode(quantize(row, quant), quant);
    const SlicedVector sliced = bit_slice(u, device, quant, ids[i]);
    CrossbarTile& tile = index.tiles_[i / static_cast<std::size_t>(per_tile)];
    const int first_col = static_cast<int>(i % static_cast<std::size_t>(per_tile)) * n_slices;
    for (int s = 0; s < n_slices; ++s) {
      tile.occupancy[static_cast<std::size_t>(first_col + s)] = {
          static_cast<std::int32_t>(i), s};
      tile.target_levels.col(first_col + s).head(index.dim_) = sliced.slices.col(s);
    }
  }
  fill_cells(index.tiles_, device, noise, wv, index.dim_, index.epoch_, index.stats_);
  return index;
}

ProgrammedIndex program(const EmbeddingMatrix& embeddings,
                        const ProjectionHead& head, const DeviceProfile& device,
                        const QuantSpec& quant, const NoiseConfig& noise,
                        const std::optional<WriteVerifyConfig>& wv,
                        const ProgramOptions& opts) {
  if (embeddings.count() == 0) throw ConfigError("program: empty corpus");
  if (head.d_out() > opts.array_size) {
    throw ConfigError("program: d_out exceeds array size");
  }
  return program_projected(project_rows(head, embeddings), embeddings.ids,
                           device, quant, noise, wv, opts);
}

ProgrammedIndex reprogram(const ProgrammedIndex& index) {
  ProgrammedIndex next = index;
  ++next.epoch_;
  fill_cells(next.tiles_, next.device_, next.noise_, next.wv_, next.dim_,
             next.epoch_, next.stats_);
  return next;
}

Eigen::VectorXd ProgrammedIndex::raw_scores(
    const Eigen::Ref<const Eigen::VectorXi>& query_codes) const {
  if (query_codes.size() != dim_) {
    throw ConfigError("query dimension " + std::to_string(query_codes.size()) +
                      " != index dimension " + std::to_string(dim_));
  }
  const Eigen::VectorXf q = query_codes.cast<float>();
  const double correction =
      static_cast<double>(quant_.offset()) * static_cast<double>(query_codes.sum());
  const double levels = device_.levels();
  const int per_tile = docs_per_tile();

  Eigen::VectorXd scores(static_cast<Eigen::Index>(doc_ids_.size()));
  Eigen::VectorXf column_sums(array_size_);
  for (std::size_t t = 0; t < tiles_.size(); ++t) {
    const CrossbarTile& tile = tiles_[t];
    column_sums.noalias() = tile.cells.topRows(dim_).transpose() * q;
    for (int slot = 0; slot < per_tile; ++slot) {
      const std::size_t doc = t * static_cast<std::size_t>(per_tile) +
                              static_cast<std::size_t>(slot);
      if (doc >= doc_ids_.size()) break;
      const auto digits = column_sums.segment(slot * slices_, slices_).cast<double>();
      scores[static_cast<Eigen::Index>(doc)] = recombine(digits, levels) - correction;
    }
  }
  return scores;
}

RetrievalResult ProgrammedIndex::search_codes(
    const Eigen::Ref<const Eigen::VectorXi>& query_codes, int k,
    DocId query_id) const {
  const double s2 = quant_.scale() * quant_.scale();
  return rank_top_k(raw_scores(query_codes) * s2, doc_ids_, k, query_id);
}

nlohmann::json ProgrammedIndex::metadata() const {
  nlohmann::json j;
  j["device"] = device_;
  j["quant"] = {{"precision_bits", quant_.precision_bits()},
                {"scale", quant_.scale()},
                {"offset", quant_.offset()}};
  j["noise"] = noise_;
  j["seed"] = noise_.seed;
  j["doc_count"] = doc_ids_.size();
  j["tile_count"] = tiles_.size();
  j["array_size"] = array_size_;
  j["dim"] = dim_;
  j["slices"] = slices_;
  j["program_epoch"] = epoch_;
  j["write_verify"] = wv_ ? nlohmann::json(*wv_) : nlohmann::json(nullptr);
  j["stats"] = {{"cells", stats_.cells},
                {"writes", stats_.writes},
                {"unconverged", stats_.unconverged},
                {"mean_abs_error", stats_.mean_abs_error}};
  return j;
}

RetrievalResult mips(const ProgrammedIndex& index, const ProjectionHead& head,
                     const Eigen::Ref<const Eigen::VectorXf>& query_base, int k,
                     DocId query_id) {
  const Eigen::VectorXi codes = quantize(project(head, query_base), index.quant());
  return index.search_codes(codes, k, query_id);
}

std::vector<RetrievalResult> mips_batch(const ProgrammedIndex& index,
                                        const ProjectionHead& head,
                                        const EmbeddingMatrix& queries, int k) {
  const RowMatrix<float> projected = project_rows(head, queries);
  std::vector<RetrievalResult> out;
  out.reserve(static_cast<std::size_t>(queries.count()));
  for (Eigen::Index i = 0; i < queries.count(); ++i) {
    const Eigen::VectorXi codes = quantize(projected.row(i).transpose(), index.quant());
    out.push_back(index.search_codes(codes, k, queries.ids[static_cast<std::size_t>(i)]));
  }
  return out;
}

RetrievalResult mips_exact(const EmbeddingMatrix& embeddings,
                           const ProjectionHead& head,
                           const Eigen::Ref<const Eigen::VectorXf>& query_base,
                           int k, DocId query_id) {
  const RowMatrix<float> docs = project_rows(head, embeddings);
  const Eigen::VectorXf q = project(head, query_base).cast<float>();
  const Eigen::VectorXd scores = (docs * q).cast<double>();
  return rank_top_k(scores, embeddings.ids, k, query_id);
}

std::vector<RetrievalResult> mips_exact_batch(const EmbeddingMatrix& embeddings,
                                              const ProjectionHead& head,
                                              const EmbeddingMatrix& queries,
                                              int k) {
  const RowMatrix<float> docs = project_rows(head, embeddings);
  const RowMatrix<float> qs = project_rows(head, queries);
  std::vector<RetrievalResult> out;
  out.reserve(static_cast<std::size_t>(queries.count()));
  for (Eigen::Index i = 0; i < qs.rows(); ++i) {
    const Eigen::VectorXd scores = (docs * qs.row(i).transpose()).cast<double>();
    out.push_back(rank_top_k(scores, embeddings.ids, k,
                             queries.ids[static_cast<std::size_t>(i)]));
  }
  return out;
}

void save_index(const ProgrammedIndex& index, const std::filesystem::path& prefix) {
  const std::filesystem::path blob = prefix.string() + ".cells.f32";
  const std::filesystem::path sidecar = prefix.string() + ".json";
  nlohmann::json j = index.metadata();
  j["doc_ids"] = index.doc_ids();
  j["blob"] = blob.filename().string();
  j["planes"] = {"cells", "target_levels"};
  {
    std::ofstream out(sidecar, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + sidecar.string());
    out << j.dump(2) << '\n';
  }
  std::ofstream out(blob, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + blob.string());
  for (const CrossbarTile& tile : index.tiles()) {
    const RowMatrix<float> cells = tile.cells;
    const RowMatrix<float> targets = tile.target_levels.cast<float>();
    io::write_f32_array(out, {cells.data(), static_cast<std::size_t>(cells.size())});
    io::write_f32_array(out, {targets.data(), static_cast<std::size_t>(targets.size())});
  }
}

ProgrammedIndex load_index(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw FormatError("cannot open " + sidecar.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  ProgrammedIndex index;
  try {
    index.device_ = j.at("device").get<DeviceProfile>();
    index.quant_ = QuantSpec(j.at("quant").at("precision_bits").get<int>());
    index.noise_ = j.at("noise").get<NoiseConfig>();
    if (!j.at("write_verify").is_null()) {
      index.wv_ = j.at("write_verify").get<WriteVerifyConfig>();
    }
    index.doc_ids_ = j.at("doc_ids").get<std::vector<DocId>>();
    index.epoch_ = j.at("program_epoch").get<std::int64_t>();
    index.array_size_ = j.at("array_size").get<int>();
    index.dim_ = j.at("dim").get<int>();
    index.slices_ = j.at("slices").get<int>();
    const auto& st = j.at("stats");
    index.stats_ = {st.at("cells").get<std::int64_t>(), st.at("writes").get<std::int64_t>(),
                    st.at("unconverged").get<std::int64_t>(),
                    st.at("mean_abs_error").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  if (index.slices_ != index.quant_.slices_for(index.device_) ||
      index.dim_ < 1 || index.dim_ > index.array_size_) {
    throw FormatError(sidecar.string() + ": inconsistent layout");
  }
  const std::size_t n_tiles = j.at("tile_count").get<std::size_t>();
  const std::size_t per_tile = static_cast<std::size_t>(index.docs_per_tile());
  if (n_tiles != (index.doc_ids_.size() + per_tile - 1) / per_tile) {
    throw FormatError(sidecar.string() + ": tile count does not match documents");
  }
  const std::filesystem::path blob = sidecar.parent_path() / j.at("blob").get<std::string>();
  const auto plane = static_cast<std::size_t>(index.array_size_) *
                     static_cast<std::size_t>(index.array_size_);
  if (!std::filesystem::exists(blob) ||
      std::filesystem::file_size(blob) != n_tiles * plane * 2 * sizeof(float)) {
    throw FormatError(blob.string() + ": missing or wrong size");
  }
  std::ifstream bin(blob, std::ios::binary);
  index.tiles_.resize(n_tiles);
  RowMatrix<float> buf(index.array_size_, index.array_size_);
  for (std::size_t t = 0; t < n_tiles; ++t) {
    CrossbarTile& tile = index.tiles_[t];
    tile.rows = tile.cols = index.array_size_;
    io::read_f32_array(bin, {buf.data(), plane});
    tile.cells = buf;
    io::read_f32_array(bin, {buf.data(), plane});
    tile.target_levels = buf.cast<std::uint8_t>();
    tile.occupancy.assign(static_cast<std::size_t>(tile.cols), ColumnSlot{});
    for (std::size_t slot = 0; slot < per_tile; ++slot) {
      const std::size_t doc = t * per_tile + slot;
      if (doc >= index.doc_ids_.size()) break;
      for (int s = 0; s < index.slices_; ++s) {
        tile.occupancy[slot * static_cast<std::size_t>(index.slices_) +
                       static_cast<std::size_t>(s)] = {static_cast<std::int32_t>(doc), s};
      }
    }
  }
  return index;
}

void to_json(nlohmann::json& j, const WriteVerifyConfig& c) {
  j = nlohmann::json{{"tolerance", c.tolerance}, {"max_iterations", c.max_iterations}};
}

void from_json(const nlohmann::json& j, WriteVerifyConfig& c) {
  c = WriteVerifyConfig{};
  c.tolerance = j.value("tolerance", c.tolerance);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.validate();
}

void to_json(nlohmann::json& j, const RetrievalResult& r) {
  nlohmann::json ranked = nlohmann::json::array();
  for (const auto& d : r.ranked) ranked.push_back({{"doc_id", d.doc_id}, {"score", d.score}});
  j = nlohmann::json{{"query_id", r.query_id}, {"k", r.k}, {"k_clamped", r.k_clamped},
                     {"ranked", ranked}};
}

}  // namespace cimrag
