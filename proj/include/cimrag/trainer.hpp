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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cimrag/device_model.hpp"
#include "cimrag/embedding_codec.hpp"
#include "cimrag/rng.hpp"
#include "cimrag/types.hpp"

namespace cimrag {

struct DocumentRecord {
  DocId id = 0;
  std::string content;
  std::optional<std::string> label;
};

enum class Provenance { CDE, CDI };

struct Triplet {
  Eigen::VectorXf anchor;
  Eigen::VectorXf positive;
  Eigen::VectorXf negative;
  Provenance provenance = Provenance::CDI;
  int k_index = 0;
  DocId source_id = 0;
  std::string negative_label;  // CDE only
};

struct TripletSet {
  std::vector<Triplet> triplets;
  int K = 1;
  // CDE fell back to sampling foreign labels with replacement for some record.
  bool sampled_with_replacement = false;

  std::size_t size() const { return triplets.size(); }
  Eigen::Index dim() const { return triplets.empty() ? 0 : triplets.front().anchor.size(); }
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Embedder = std::function<Eigen::VectorXf(std::string_view)>;

Embedder hash_embedder(int din, std::uint64_t seed);

/// Content and label joined for explicit-label construction.
inline constexpr std::string_view kLabelSeparator = " | ";
std::string concat_content_label(std::string_view content, std::string_view label);

/// Inverted dropout on a base embedding, renormalized to unit length. A draw
/// that drops every coordinate is retried once before DomainError.
Eigen::VectorXf dropout_embed(const Eigen::Ref<const Eigen::VectorXf>& base,
                              double rate, CounterRng& rng);

/// Explicit labels: anchor = emb(c_i | l_i), negatives = emb(c_i | l_j) for
/// K foreign labels l_j != l_i, positives = dropout(anchor, r). n*K triplets.
TripletSet construct_cde(const std::vector<DocumentRecord>& dataset, int K,
                         double r, const Embedder& embedder, std::uint64_t seed);

/// Implicit labels: anchor = emb(c_i), positives = dropout(anchor, r),
/// negatives = dropout(anchor, 1 - r). n*K triplets. Requires 0 < r <= 0.2.
TripletSet construct_cdi(const std::vector<DocumentRecord>& dataset, int K,
                         double r, const Embedder& embedder, std::uint64_t seed);

/// Same as above when the base embeddings are already available.
TripletSet construct_cdi(const EmbeddingMatrix& base, int K, double r,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Cosine: max(0, cos(a, n) - cos(a, p) + m).
/// Euclidean: max(0, |a - p| - |a - n| + m).
enum class Similarity { Cosine, Euclidean };

template <typename Scalar>
struct TripletLossGrad {
  Scalar loss = 0;
  Vector<Scalar> anchor;
  Vector<Scalar> positive;
  Vector<Scalar> negative;
};

namespace detail {

// cos(a, b) and its gradient with respect to a.
template <typename Scalar>
Scalar cosine_with_grad(const Vector<Scalar>& a, const Vector<Scalar>& b,
                        Vector<Scalar>* grad_a) {
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  const Scalar c = a.dot(b) / (na * nb);
  if (grad_a) *grad_a = b / (na * nb) - c * a / (na * na);
  return c;
}

template <typename Scalar>
Scalar distance_with_grad(const Vector<Scalar>& a, const Vector<Scalar>& b,
                          Vector<Scalar>* grad_a) {
  const Vector<Scalar> diff = a - b;
  const Scalar d = diff.norm();
  if (grad_a) {
    *grad_a = d > Scalar(0) ? Vector<Scalar>(diff / d)
                            : Vector<Scalar>(Vector<Scalar>::Zero(a.size()));
  }
  return d;
}

}  // namespace detail

template <typename DA, typename DP, typename DN>
TripletLossGrad<typename DA::Scalar> triplet_loss_grad(
    const Eigen::MatrixBase<DA>& anchor, const Eigen::MatrixBase<DP>& positive,
    const Eigen::MatrixBase<DN>& negative, double margin,
    Similarity similarity = Similarity::Cosine) {
  using Scalar = typename DA::Scalar;
  const Vector<Scalar> a = anchor;
  const Vector<Scalar> p = positive.template cast<Scalar>();
  const Vector<Scalar> n = negative.template cast<Scalar>();
  const auto m = static_cast<Scalar>(margin);

  TripletLossGrad<Scalar> out;
  Vector<Scalar> g_ap, g_pa, g_an, g_na;
  Scalar pos_term, neg_term;
  if (similarity == Similarity::Cosine) {
    // loss = cos(a, n) - cos(a, p) + m
    pos_term = -detail::cosine_with_grad(a, p, &g_ap);
    detail::cosine_with_grad(p, a, &g_pa);
    neg_term = detail::cosine_with_grad(a, n, &g_an);
    detail::cosine_with_grad(n, a, &g_na);
    g_ap = -g_ap;
    g_pa = -g_pa;
  } else {
    // loss = |a - p| - |a - n| + m
    pos_term = detail::distance_with_grad(a, p, &g_ap);
    detail::distance_with_grad(p, a, &g_pa);
    neg_term = -detail::distance_with_grad(a, n, &g_an);
    detail::distance_with_grad(n, a, &g_na);
    g_an = -g_an;
    g_na = -g_na;
  }
  const Scalar raw = neg_term + pos_term + m;
  if (raw > Scalar(0)) {
    out.loss = raw;
    out.anchor = g_ap + g_an;
    out.positive = g_pa;
    out.negative = g_na;
  } else {
    out.loss = 0;
    out.anchor = Vector<Scalar>::Zero(a.size());
    out.positive = Vector<Scalar>::Zero(a.size());
    out.negative = Vector<Scalar>::Zero(a.size());
  }
  return out;
}

template <typename DA, typename DP, typename DN>
typename DA::Scalar triplet_loss(const Eigen::MatrixBase<DA>& anchor,
                                 const Eigen::MatrixBase<DP>& positive,
                                 const Eigen::MatrixBase<DN>& negative,
                                 double margin,
                                 Similarity similarity = Similarity::Cosine) {
  return triplet_loss_grad(anchor, positive, negative, margin, similarity).loss;
}

/// sum over anchors of (1/K) sum over their K triplets.
double batch_triplet_loss(const TripletSet& set, double margin,
                          Similarity similarity = Similarity::Cosine);

// ---------------------------------------------------------------------------
// Noise-aware training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double margin = 0.5;
  int K = 5;
  double dropout = 0.1;
  double learning_rate = 1e-3;
  int epochs = 20;
  int batch_size = 64;
  NoiseConfig noise;
  DeviceProfile device = builtin_devices().front();
  QuantSpec quant{8};
  std::uint64_t seed = 0;
  Similarity similarity = Similarity::Cosine;
  bool quantize_forward = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// project -> quantize/dequantize -> per-slice device deviation -> recombine
/// -> decode -> renormalize. The backward pass treats everything after the
/// projection's normalization as identity.
Eigen::VectorXd noisy_forward(const ProjectionHead& head,
                              const Eigen::Ref<const Eigen::VectorXf>& base,
                              const TrainConfig& cfg, CounterRng& rng);

/// Same transform applied to an already projected unit vector.
Eigen::VectorXd inject_device_noise(const Eigen::Ref<const Eigen::VectorXd>& y,
                                    const TrainConfig& cfg, CounterRng& rng);

/// Loss of one triplet of base embeddings through the head (no noise, no
/// quantization) and its gradient with respect to the head weights.
struct HeadLossGrad {
  double loss = 0;
  Matrix<double> grad_w;
};
HeadLossGrad triplet_head_grad(const ProjectionHead& head,
                               const Eigen::Ref<const Eigen::VectorXd>& anchor,
                               const Eigen::Ref<const Eigen::VectorXd>& positive,
                               const Eigen::Ref<const Eigen::VectorXd>& negative,
                               double margin,
                               Similarity similarity = Similarity::Cosine);

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-triplet loss
  ProjectionHead head;
  std::int64_t steps = 0;
};

/// Mini-batch Adam on the head against the triplet objective, with fresh
/// device noise injected on all three branches at every step.
TrainReport train(const ProjectionHead& head, const TripletSet& triplets,
                  const TrainConfig& cfg);

void write_trp1(const std::filesystem::path& path, const TripletSet& set);
TripletSet read_trp1(const std::filesystem::path& path);

std::string_view to_string(Similarity s);
Similarity similarity_from_string(std::string_view s);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const TrainReport& r);

}  // namespace cimrag
