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
#include <string>
#include <vector>

#include "cimrag/trainer.hpp"
#include "cimrag/types.hpp"

namespace cimrag {

enum class LabelKind { None, Categorical, Numeric };

/// Reads JSONL records {"id": int, "content": str, "label": str|number?}.
/// Numeric labels are stored in their canonical JSON text. Errors name the
/// offending line and id.
std::vector<DocumentRecord> ingest(const std::filesystem::path& path);

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<DocumentRecord>& records);

/// Numeric when every record has a label that parses entirely as a number;
/// None when no record has a label.
LabelKind infer_label_kind(const std::vector<DocumentRecord>& records);

/// Embeds every record's content.
EmbeddingMatrix embed_records(const std::vector<DocumentRecord>& records,
                              const Embedder& embedder);

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

/// Base embeddings x = normalize(a*g + b*c_k + r*e): g is one direction shared
/// by the whole corpus (sentence encoders are strongly anisotropic), c_k a
/// cluster center and e an item-specific direction, all unit Gaussian draws.
/// Queries are fresh draws from the same clusters.
struct ClusteredCorpusSpec {
  int n_docs = 2000;
  int n_queries = 200;
  int n_clusters = 20;
  int din = 384;
  double common_weight = 0.8;
  double cluster_weight = 0.3;
  double residual_weight = 0.5;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  EmbeddingMatrix docs;
  EmbeddingMatrix queries;
  std::vector<std::string> doc_labels;    // cluster index as text
  std::vector<std::string> query_labels;
};

SyntheticCorpus make_clustered_corpus(const ClusteredCorpusSpec& spec);

/// Topic-structured text: each document mixes words from its topic's
/// vocabulary with a shared vocabulary. Labels are "topic_<k>", or "<k+1>"
/// when numeric_labels is set.
struct TextCorpusSpec {
  int n_docs = 2000;
  int n_queries = 200;
  int n_topics = 8;
  int words_per_doc = 24;
  int topic_vocab = 40;
  int common_vocab = 80;
  double topic_word_fraction = 0.4;
  bool numeric_labels = false;
  std::uint64_t seed = 0;
};

struct TextCorpus {
  std::vector<DocumentRecord> docs;
  std::vector<DocumentRecord> queries;
};

TextCorpus make_text_corpus(const TextCorpusSpec& spec);

}  // namespace cimrag
