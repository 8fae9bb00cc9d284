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

#include "cimrag/dataset.hpp"

#include <charconv>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cimrag/rng.hpp"

namespace cimrag {

namespace {

bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end;
}

Eigen::VectorXd unit_gaussian(Eigen::Index n, CounterRng& rng) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v.normalized();
}

std::string make_word(CounterRng& rng) {
  static constexpr std::string_view kOnsets[] = {"b", "c", "d", "f", "g", "k", "l",
                                                 "m", "n", "p", "r", "s", "t", "v", "z",
                                                 "br", "st", "tr", "gl", "pl"};
  static constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
  std::string w;
  const int syllables = 2 + static_cast<int>(rng.below(2));
  for (int s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kVowels[rng.below(std::size(kVowels))];
  }
  return w;
}

}  // namespace

std::vector<DocumentRecord> ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<DocumentRecord> out;
  std::unordered_set<DocId> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": malformed JSON: " + e.what());
    }
    DocumentRecord rec;
    if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer()) {
      throw FormatError(where + ": missing integer \"id\"");
    }
    rec.id = j["id"].get<DocId>();
    if (!j.contains("content") || !j["content"].is_string()) {
      throw FormatError(where + ": missing string \"content\"");
    }
    rec.content = j["content"].get<std::string>();
    if (rec.content.empty()) {
      throw FormatError(where + ": empty content for id " + std::to_string(rec.id));
    }
    if (j.contains("label") && !j["label"].is_null()) {
      const auto& l = j["label"];
      if (l.is_string()) {
        rec.label = l.get<std::string>();
      } else if (l.is_number()) {
        rec.label = l.dump();
      } else {
        throw FormatError(where + ": label must be a string or a number");
      }
    }
    if (!seen.insert(rec.id).second) {
      throw FormatError(where + ": duplicate id " + std::to_string(rec.id));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<DocumentRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"content", r.content}};
    if (r.label) j["label"] = *r.label;
    out << j.dump() << '\n';
  }
}

LabelKind infer_label_kind(const std::vector<DocumentRecord>& records) {
  bool any = false;
  bool numeric = true;
  for (const auto& r : records) {
    if (!r.label) {
      numeric = false;
      continue;
    }
    any = true;
    numeric = numeric && parses_as_number(*r.label);
  }
  if (!any) return LabelKind::None;
  return numeric ? LabelKind::Numeric : LabelKind::Categorical;
}

EmbeddingMatrix embed_records(const std::vector<DocumentRecord>& records,
                              const Embedder& embedder) {
  EmbeddingMatrix m;
  if (records.empty()) return m;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Eigen::VectorXf v = embedder(records[i].content);
    if (i == 0) m.rows.resize(static_cast<Eigen::Index>(records.size()), v.size());
    m.rows.row(static_cast<Eigen::Index>(i)) = v.transpose();
    m.ids.push_back(records[i].id);
  }
  m.validate();
  return m;
}

SyntheticCorpus make_clustered_corpus(const ClusteredCorpusSpec& spec) {
  if (spec.n_docs < 1 || spec.n_queries < 0 || spec.n_clusters < 1 || spec.din < 1) {
    throw ConfigError("clustered corpus: sizes must be positive");
  }
  CounterRng rng = CounterRng::stream(spec.seed, {0x636f7270ULL});
  const Eigen::VectorXd common = unit_gaussian(spec.din, rng);
  std::vector<Eigen::VectorXd> centers;
  for (int k = 0; k < spec.n_clusters; ++k) centers.push_back(unit_gaussian(spec.din, rng));

  const auto draw = [&](int n, EmbeddingMatrix& out, std::vector<std::string>& labels) {
    out.rows.resize(n, spec.din);
    out.ids.resize(static_cast<std::size_t>(n));
    labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(spec.n_clusters)));
      const Eigen::VectorXd x = spec.common_weight * common +
                                spec.cluster_weight * centers[k] +
                                spec.residual_weight * unit_gaussian(spec.din, rng);
      out.rows.row(i) = x.normalized().cast<float>().transpose();
      out.ids[static_cast<std::size_t>(i)] = i;
      labels[static_cast<std::size_t>(i)] = std::to_string(k);
    }
  };
  SyntheticCorpus corpus;
  draw(spec.n_docs, corpus.docs, corpus.doc_labels);
  draw(spec.n_queries, corpus.queries, corpus.query_labels);
  return corpus;
}

TextCorpus make_text_corpus(const TextCorpusSpec& spec) {
  if (spec.n_docs < 1 || spec.n_topics < 2 || spec.words_per_doc < 1 ||
      spec.topic_vocab < 1 || spec.common_vocab < 1) {
    throw ConfigError("text corpus: sizes must be positive (and >= 2 topics)");
  }
  CounterRng rng = CounterRng::stream(spec.seed, {0x74657874ULL});
  std::vector<std::string> common;
  for (int i = 0; i < spec.common_vocab; ++i) common.push_back(make_word(rng));
  std::vector<std::vector<std::string>> topics(static_cast<std::size_t>(spec.n_topics));
  for (auto& vocab : topics) {
    for (int i = 0; i < spec.topic_vocab; ++i) vocab.push_back(make_word(rng));
  }
  const auto draw = [&](int n, DocId first_id, std::vector<DocumentRecord>& out) {
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(spec.n_topics)));
      std::string text;
      for (int w = 0; w < spec.words_per_doc; ++w) {
        if (w) text += ' ';
        const auto& vocab = rng.uniform() < spec.topic_word_fraction ? topics[k] : common;
        text += vocab[rng.below(vocab.size())];
      }
      DocumentRecord rec;
      rec.id = first_id + i;
      rec.content = std::move(text);
      rec.label = spec.numeric_labels ? std::to_string(k + 1) : "topic_" + std::to_string(k);
      out.push_back(std::move(rec));
    }
  };
  TextCorpus corpus;
  draw(spec.n_docs, 0, corpus.docs);
  draw(spec.n_queries, 0, corpus.queries);
  return corpus;
}

}  // namespace cimrag
