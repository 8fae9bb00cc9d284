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

#include "cimrag/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "cimrag/formats.hpp"

namespace cimrag {

namespace {

enum StreamTag : std::uint64_t {
  kCdePositive = 0x1001,
  kCdeNegativeLabels = 0x1002,
  kCdiPositive = 0x2001,
  kCdiNegative = 0x2002,
  kShuffle = 0x3001,
  kStepNoise = 0x3002,
};

void check_rate(double r) {
  if (!(r > 0.0 && r <= 0.2)) {
    throw ConfigError("dropout rate must satisfy 0 < r <= 0.2, got " + std::to_string(r));
  }
}

}  // namespace

Embedder hash_embedder(int din, std::uint64_t seed) {
  return [din, seed](std::string_view text) { return hash_embed(text, din, seed); };
}

std::string concat_content_label(std::string_view content, std::string_view label) {
  std::string out;
  out.reserve(content.size() + kLabelSeparator.size() + label.size());
  out.append(content).append(kLabelSeparator).append(label);
  return out;
}

Eigen::VectorXf dropout_embed(const Eigen::Ref<const Eigen::VectorXf>& base,
                              double rate, CounterRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  if (rate == 0.0) return base;
  const auto keep_scale = static_cast<float>(1.0 / (1.0 - rate));
  for (int attempt = 0; attempt < 2; ++attempt) {
    Eigen::VectorXf out(base.size());
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      out[i] = rng.uniform() < rate ? 0.0f : base[i] * keep_scale;
    }
    const float n = out.norm();
    if (n > 0.0f) return out / n;
  }
  throw DomainError("dropout_embed: every coordinate dropped twice");
}

TripletSet construct_cde(const std::vector<DocumentRecord>& dataset, int K,
                         double r, const Embedder& embedder, std::uint64_t seed) {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (!(r >= 0.0 && r <= 0.2)) throw ConfigError("dropout rate must be in [0, 0.2]");
  std::set<std::string> labels;
  for (const auto& rec : dataset) {
    if (!rec.label) {
      throw ConfigError("construct_cde: record " + std::to_string(rec.id) + " has no label");
    }
    labels.insert(*rec.label);
  }
  if (labels.size() < 2) throw ConfigError("construct_cde: needs at least 2 distinct labels");

  TripletSet set;
  set.K = K;
  set.triplets.reserve(dataset.size() * static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const DocumentRecord& rec = dataset[i];
    const Eigen::VectorXf anchor = embedder(concat_content_label(rec.content, *rec.label));

    std::vector<std::string> foreign;
    for (const auto& l : labels) {
      if (l != *rec.label) foreign.push_back(l);
    }
    CounterRng label_rng = CounterRng::stream(seed, {kCdeNegativeLabels, i});
    std::vector<std::string> chosen;
    if (static_cast<std::size_t>(K) <= foreign.size()) {
      // Partial Fisher-Yates: K distinct foreign labels.
      for (int k = 0; k < K; ++k) {
        const std::size_t j = static_cast<std::size_t>(k) +
                              label_rng.below(foreign.size() - static_cast<std::size_t>(k));
        std::swap(foreign[static_cast<std::size_t>(k)], foreign[j]);
        chosen.push_back(foreign[static_cast<std::size_t>(k)]);
      }
    } else {
      set.sampled_with_replacement = true;
      for (int k = 0; k < K; ++k) chosen.push_back(foreign[label_rng.below(foreign.size())]);
    }

    CounterRng pos_rng = CounterRng::stream(seed, {kCdePositive, i});
    for (int k = 0; k < K; ++k) {
      Triplet t;
      t.anchor = anchor;
      t.positive = dropout_embed(anchor, r, pos_rng);
      t.negative = embedder(concat_content_label(rec.content, chosen[static_cast<std::size_t>(k)]));
      t.provenance = Provenance::CDE;
      t.k_index = k;
      t.source_id = rec.id;
      t.negative_label = chosen[static_cast<std::size_t>(k)];
      set.triplets.push_back(std::move(t));
    }
  }
  return set;
}

TripletSet construct_cdi(const EmbeddingMatrix& base, int K, double r,
                         std::uint64_t seed) {
  if (K < 1) throw ConfigError("K must be >= 1");
  check_rate(r);
  base.validate();
  TripletSet set;
  set.K = K;
  set.triplets.reserve(static_cast<std::size_t>(base.count()) * static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < base.count(); ++i) {
    Eigen::VectorXf anchor = base.rows.row(i).transpose();
    const float n = anchor.norm();
    if (!(n > 0.0f)) throw DomainError("construct_cdi: zero base embedding");
    anchor /= n;
    const auto idx = static_cast<std::uint64_t>(i);
    CounterRng pos_rng = CounterRng::stream(seed, {kCdiPositive, idx});
    CounterRng neg_rng = CounterRng::stream(seed, {kCdiNegative, idx});
    for (int k = 0; k < K; ++k) {
      Triplet t;
      t.anchor = anchor;
      t.positive = dropout_embed(anchor, r, pos_rng);
      t.negative = dropout_embed(anchor, 1.0 - r, neg_rng);
      t.provenance = Provenance::CDI;
      t.k_index = k;
      t.source_id = base.ids[static_cast<std::size_t>(i)];
      set.triplets.push_back(std::move(t));
    }
  }
  return set;
}

TripletSet construct_cdi(const std::vector<DocumentRecord>& dataset, int K,
                         double r, const Embedder& embedder, std::uint64_t seed) {
  check_rate(r);
  if (dataset.empty()) throw ConfigError("construct_cdi: empty dataset");
  EmbeddingMatrix base;
  const Eigen::VectorXf first = embedder(dataset.front().content);
  base.rows.resize(static_cast<Eigen::Index>(dataset.size()), first.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    base.rows.row(static_cast<Eigen::Index>(i)) =
        (i == 0 ? first : embedder(dataset[i].content)).transpose();
    base.ids.push_back(dataset[i].id);
  }
  return construct_cdi(base, K, r, seed);
}

double batch_triplet_loss(const TripletSet& set, double margin, Similarity similarity) {
  double total = 0.0;
  for (const auto& t : set.triplets) {
    total += static_cast<double>(
        triplet_loss(t.anchor, t.positive, t.negative, margin, similarity));
  }
  return total / static_cast<double>(set.K);
}

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
  if (K < 1) throw ConfigError("K must be >= 1");
  check_rate(dropout);
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  noise.validate();
  device.validate();
  quant.slices_for(device);
}

Eigen::VectorXd inject_device_noise(const Eigen::Ref<const Eigen::VectorXd>& y,
                                    const TrainConfig& cfg, CounterRng& rng) {
  const QuantSpec& quant = cfg.quant;
  const Eigen::VectorXi codes = quantize(y, quant);
  Eigen::VectorXd out(y.size());

  if (cfg.noise.mode == NoiseMode::NaiveGaussian) {
    out = cfg.quantize_forward ? dequantize(codes, quant) : Eigen::VectorXd(y);
    out = perturb_embedding_naive(out, cfg.noise.naive_sigma, rng);
  } else {
    const DeviceProfile& device = cfg.device;
    const int n_slices = quant.slices_for(device);
    const int bits = device.bits_per_cell;
    const int mask = device.levels() - 1;
    const double span = device.levels() - 1;
    const bool noisy = cfg.noise.sigma_scale > 0.0;
    const Eigen::VectorXi u = offset_encode(codes, quant);
    Eigen::VectorXd digits(n_slices);
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      double code_value = cfg.quantize_forward ? codes[j] : y[j] / quant.scale();
      if (noisy) {
        // Read back every slice with its deviation, then undo the offset.
        for (int s = 0; s < n_slices; ++s) {
          const int level = (u[j] >> (s * bits)) & mask;
          digits[s] = level + span * sample_cell_noise(device, level, cfg.noise, rng);
        }
        code_value += recombine(digits, device.levels()) - u[j];
      }
      out[j] = code_value * quant.scale();
    }
  }
  const double n = out.norm();
  return n > 0.0 ? Eigen::VectorXd(out / n) : Eigen::VectorXd(y);
}

Eigen::VectorXd noisy_forward(const ProjectionHead& head,
                              const Eigen::Ref<const Eigen::VectorXf>& base,
                              const TrainConfig& cfg, CounterRng& rng) {
  const Eigen::VectorXd y = project(head, base);
  if (!cfg.quantize_forward && cfg.noise.mode == NoiseMode::DeviceTable &&
      cfg.noise.sigma_scale == 0.0) {
    return y;
  }
  return inject_device_noise(y, cfg, rng);
}

HeadLossGrad triplet_head_grad(const ProjectionHead& head,
                               const Eigen::Ref<const Eigen::VectorXd>& anchor,
                               const Eigen::Ref<const Eigen::VectorXd>& positive,
                               const Eigen::Ref<const Eigen::VectorXd>& negative,
                               double margin, Similarity similarity) {
  const Eigen::VectorXd bases[3] = {anchor, positive, negative};
  Eigen::VectorXd z[3], y[3];
  double norms[3];
  for (int b = 0; b < 3; ++b) {
    z[b] = head.w.transpose() * bases[b];
    norms[b] = z[b].norm();
    if (!(norms[b] > 0.0)) throw DomainError("triplet_head_grad: zero projection");
    y[b] = z[b] / norms[b];
  }
  const auto g = triplet_loss_grad(y[0], y[1], y[2], margin, similarity);
  const Eigen::VectorXd* gy[3] = {&g.anchor, &g.positive, &g.negative};
  HeadLossGrad out;
  out.loss = g.loss;
  out.grad_w = Matrix<double>::Zero(head.din(), head.d_out());
  for (int b = 0; b < 3; ++b) {
    const Eigen::VectorXd gz = (*gy[b] - gy[b]->dot(y[b]) * y[b]) / norms[b];
    out.grad_w.noalias() += bases[b] * gz.transpose();
  }
  return out;
}

TrainReport train(const ProjectionHead& head, const TripletSet& triplets,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (triplets.triplets.empty()) throw ConfigError("train: empty triplet set");
  const Eigen::Index din = head.din();
  const Eigen::Index d = head.d_out();
  if (triplets.dim() != din) {
    throw ConfigError("train: triplet dim " + std::to_string(triplets.dim()) +
                      " != head din " + std::to_string(din));
  }

  TrainReport report;
  report.head = head;
  Matrix<double>& w = report.head.w;
  Matrix<double> m1 = Matrix<double>::Zero(din, d);
  Matrix<double> m2 = Matrix<double>::Zero(din, d);
  Matrix<double> grad(din, d);

  const std::size_t n = triplets.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const auto batch_cap = static_cast<Eigen::Index>(std::min<std::size_t>(
      n, static_cast<std::size_t>(cfg.batch_size)));
  Matrix<double> base[3] = {Matrix<double>(din, batch_cap), Matrix<double>(din, batch_cap),
                            Matrix<double>(din, batch_cap)};
  Matrix<double> y[3] = {Matrix<double>(d, batch_cap), Matrix<double>(d, batch_cap),
                         Matrix<double>(d, batch_cap)};
  Matrix<double> noisy[3] = {Matrix<double>(d, batch_cap), Matrix<double>(d, batch_cap),
                             Matrix<double>(d, batch_cap)};
  Matrix<double> gz[3] = {Matrix<double>(d, batch_cap), Matrix<double>(d, batch_cap),
                          Matrix<double>(d, batch_cap)};
  Eigen::VectorXd norms[3] = {Eigen::VectorXd(batch_cap), Eigen::VectorXd(batch_cap),
                              Eigen::VectorXd(batch_cap)};

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng shuffle_rng = CounterRng::stream(
        cfg.seed, {kShuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto bsz = static_cast<Eigen::Index>(
          std::min(n - start, static_cast<std::size_t>(cfg.batch_size)));
      for (Eigen::Index c = 0; c < bsz; ++c) {
        const Triplet& t = triplets.triplets[order[start + static_cast<std::size_t>(c)]];
        base[0].col(c) = t.anchor.cast<double>();
        base[1].col(c) = t.positive.cast<double>();
        base[2].col(c) = t.negative.cast<double>();
      }
      for (int b = 0; b < 3; ++b) {
        y[b].leftCols(bsz).noalias() = w.transpose() * base[b].leftCols(bsz);
        for (Eigen::Index c = 0; c < bsz; ++c) {
          norms[b][c] = y[b].col(c).norm();
          if (!(norms[b][c] > 0.0)) {
            throw TrainingError("train: zero projection at epoch " + std::to_string(epoch));
          }
          y[b].col(c) /= norms[b][c];
          const std::size_t global = order[start + static_cast<std::size_t>(c)];
          CounterRng rng = CounterRng::stream(
              cfg.seed, {kStepNoise, static_cast<std::uint64_t>(step), global,
                         static_cast<std::uint64_t>(b)});
          noisy[b].col(c) = inject_device_noise(y[b].col(c), cfg, rng);
        }
      }

      double batch_loss = 0.0;
      for (Eigen::Index c = 0; c < bsz; ++c) {
        const auto g = triplet_loss_grad(noisy[0].col(c), noisy[1].col(c), noisy[2].col(c),
                                         cfg.margin, cfg.similarity);
        batch_loss += g.loss;
        // Straight-through: gradients at the noisy outputs flow to the clean
        // unit projections, then through the normalization.
        const Eigen::VectorXd* gy[3] = {&g.anchor, &g.positive, &g.negative};
        for (int b = 0; b < 3; ++b) {
          const auto yc = y[b].col(c);
          gz[b].col(c) = (*gy[b] - gy[b]->dot(yc) * yc) / norms[b][c];
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
      }
      epoch_loss += batch_loss;

      grad.setZero();
      for (int b = 0; b < 3; ++b) {
        grad.noalias() += base[b].leftCols(bsz) * gz[b].leftCols(bsz).transpose();
      }
      grad /= static_cast<double>(triplets.K);

      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      w.array() -= cfg.learning_rate * (m1.array() / c1) /
                   ((m2.array() / c2).sqrt() + cfg.epsilon);
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  report.steps = step;
  if (!report.head.all_finite()) throw TrainingError("train: non-finite weights");
  return report;
}

void write_trp1(const std::filesystem::path& path, const TripletSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const auto dim = static_cast<std::uint32_t>(set.dim());
  io::write_header(out, "TRP1", static_cast<std::uint32_t>(set.size()), dim);
  for (const auto& t : set.triplets) {
    for (const Eigen::VectorXf* v : {&t.anchor, &t.positive, &t.negative}) {
      if (v->size() != static_cast<Eigen::Index>(dim)) {
        throw FormatError("write_trp1: ragged triplet dimensions");
      }
      io::write_f32_array(out, {v->data(), dim});
    }
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

TripletSet read_trp1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto [count, dim] = io::read_header(in, "TRP1", path);
  if (std::filesystem::file_size(path) != 12 + 12ULL * count * dim) {
    throw FormatError(path.string() + ": size does not match header");
  }
  if (dim == 0) throw FormatError(path.string() + ": zero dimension");
  TripletSet set;
  set.triplets.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Triplet& t = set.triplets[i];
    for (Eigen::VectorXf* v : {&t.anchor, &t.positive, &t.negative}) {
      v->resize(dim);
      io::read_f32_array(in, {v->data(), dim});
      if (!v->allFinite()) throw FormatError(path.string() + ": non-finite value");
    }
    t.k_index = 0;
    t.source_id = i;
  }
  return set;
}

std::string_view to_string(Similarity s) {
  return s == Similarity::Cosine ? "cosine" : "euclidean";
}

Similarity similarity_from_string(std::string_view s) {
  if (s == "cosine") return Similarity::Cosine;
  if (s == "euclidean") return Similarity::Euclidean;
  throw ConfigError("unknown similarity '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"margin", c.margin},
                     {"K", c.K},
                     {"dropout", c.dropout},
                     {"learning_rate", c.learning_rate},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"noise", c.noise},
                     {"device", c.device},
                     {"precision_bits", c.quant.precision_bits()},
                     {"seed", c.seed},
                     {"similarity", to_string(c.similarity)},
                     {"quantize_forward", c.quantize_forward},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.margin = j.value("margin", c.margin);
  c.K = j.value("K", c.K);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("noise")) c.noise = j.at("noise").get<NoiseConfig>();
  if (j.contains("device")) {
    c.device = j.at("device").is_string() ? find_device(j.at("device").get<std::string>())
                                          : j.at("device").get<DeviceProfile>();
  }
  c.quant = QuantSpec(j.value("precision_bits", 8));
  c.seed = j.value("seed", c.seed);
  c.similarity = similarity_from_string(j.value("similarity", std::string("cosine")));
  c.quantize_forward = j.value("quantize_forward", c.quantize_forward);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.validate();
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  j = nlohmann::json{{"epoch_loss", r.epoch_loss},
                     {"steps", r.steps},
                     {"head_hash", io::hex64(io::fnv1a(nlohmann::json(r.head).dump()))}};
}

}  // namespace cimrag
