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

#include "cimrag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace cimrag {

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double parse_number(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

std::vector<Eigen::VectorXi> quantize_rows(const RowMatrix<float>& rows, const QuantSpec& q) {
  std::vector<Eigen::VectorXi> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.push_back(quantize(rows.row(i).transpose(), q));
  return out;
}

std::vector<RetrievalResult> search_all(const ProgrammedIndex& index,
                                        const std::vector<Eigen::VectorXi>& codes,
                                        const std::vector<DocId>& query_ids, int k) {
  std::vector<RetrievalResult> out;
  out.reserve(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out.push_back(index.search_codes(codes[i], k, query_ids[i]));
  }
  return out;
}

std::vector<RetrievalResult> exact_all(const RowMatrix<float>& docs,
                                       const std::vector<DocId>& doc_ids,
                                       const RowMatrix<float>& queries,
                                       const std::vector<DocId>& query_ids, int k) {
  std::vector<RetrievalResult> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const Eigen::VectorXd scores = (docs * queries.row(i).transpose()).cast<double>();
    out.push_back(rank_top_k(scores, doc_ids, k, query_ids[static_cast<std::size_t>(i)]));
  }
  return out;
}

// Shared machinery for sweep and compare: one projected corpus, its
// reference ranking, and noisy evaluations at arbitrary noise settings.
struct Evaluator {
  const DeviceProfile& device;
  const EvalOptions& opts;
  RowMatrix<float> docs;
  std::vector<DocId> doc_ids;
  std::vector<Eigen::VectorXi> query_codes;
  std::vector<DocId> query_ids;
  std::vector<RetrievalResult> clean;
  std::vector<bool> mask;

  Evaluator(const EmbeddingMatrix& corpus, const EmbeddingMatrix& queries,
            const ProjectionHead& head, const DeviceProfile& dev, const EvalOptions& o)
      : device(dev), opts(o), docs(project_rows(head, corpus)), doc_ids(corpus.ids),
        query_ids(queries.ids) {
    if (queries.count() == 0) throw ConfigError("evaluation needs at least one query");
    const RowMatrix<float> q = project_rows(head, queries);
    query_codes = quantize_rows(q, opts.quant);
    if (opts.fp32_reference) {
      clean = exact_all(docs, doc_ids, q, query_ids, opts.k);
    } else {
      NoiseConfig none;
      none.sigma_scale = 0.0;
      const ProgrammedIndex ref = program_projected(docs, doc_ids, device, opts.quant, none,
                                                    std::nullopt, {opts.array_size, 0});
      clean = search_all(ref, query_codes, query_ids, opts.k);
    }
    mask = gap_mask(clean, opts.gap_lsb * opts.quant.scale());
  }

  std::vector<RetrievalResult> noisy(double sigma, std::uint64_t seed) const {
    NoiseConfig noise;
    noise.mode = opts.mode;
    noise.seed = seed;
    if (opts.mode == NoiseMode::DeviceTable) {
      noise.sigma_scale = sigma;
    } else {
      noise.sigma_scale = 0.0;
      noise.naive_sigma = sigma;
    }
    const ProgrammedIndex index = program_projected(docs, doc_ids, device, opts.quant, noise,
                                                    opts.write_verify, {opts.array_size, 0});
    return search_all(index, query_codes, query_ids, opts.k);
  }

  std::size_t n_filtered() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  }
};

}  // namespace

MipsAccuracyReport mips_accuracy(const std::vector<RetrievalResult>& noisy,
                                 const std::vector<RetrievalResult>& clean) {
  if (noisy.empty()) throw ConfigError("mips_accuracy: no queries");
  if (noisy.size() != clean.size()) {
    throw ConfigError("mips_accuracy: " + std::to_string(noisy.size()) + " noisy vs " +
                      std::to_string(clean.size()) + " clean results");
  }
  std::unordered_map<DocId, const RetrievalResult*> by_id;
  for (const auto& c : clean) {
    if (!by_id.emplace(c.query_id, &c).second) {
      throw ConfigError("mips_accuracy: duplicate clean query id " + std::to_string(c.query_id));
    }
  }
  MipsAccuracyReport report;
  report.k = noisy.front().k;
  double top1 = 0.0, overlap = 0.0;
  for (const auto& n : noisy) {
    const auto it = by_id.find(n.query_id);
    if (it == by_id.end()) {
      throw ConfigError("mips_accuracy: unpaired query id " + std::to_string(n.query_id));
    }
    const RetrievalResult& c = *it->second;
    if (n.k != report.k || c.k != report.k) throw ConfigError("mips_accuracy: unequal k");
    if (!n.ranked.empty() && !c.ranked.empty() &&
        n.ranked.front().doc_id == c.ranked.front().doc_id) {
      top1 += 1.0;
    }
    std::unordered_set<DocId> ref;
    for (const auto& d : c.ranked) ref.insert(d.doc_id);
    int shared = 0;
    for (const auto& d : n.ranked) shared += ref.count(d.doc_id) ? 1 : 0;
    overlap += static_cast<double>(shared) / report.k;
  }
  report.n_queries = static_cast<int>(noisy.size());
  report.top1_match_rate = top1 / report.n_queries;
  report.topk_overlap = overlap / report.n_queries;
  return report;
}

ProxyMetricsReport proxy_metrics(const std::vector<RetrievalResult>& results,
                                 const LabelMap& doc_labels,
                                 const LabelMap& query_labels, TaskKind task,
                                 int vote_k) {
  if (vote_k < 1 || vote_k % 2 == 0) throw ConfigError("vote_k must be odd and >= 1");
  if (results.empty()) throw ConfigError("proxy_metrics: no results");
  std::vector<std::string> truth, pred;
  for (const auto& r : results) {
    const auto qt = query_labels.find(r.query_id);
    if (qt == query_labels.end()) {
      throw ConfigError("proxy_metrics: query " + std::to_string(r.query_id) + " has no label");
    }
    if (r.ranked.empty()) throw ConfigError("proxy_metrics: empty retrieval");
    std::vector<std::pair<std::string, int>> votes;  // first-seen order = rank order
    const std::size_t depth = std::min<std::size_t>(r.ranked.size(), static_cast<std::size_t>(vote_k));
    for (std::size_t i = 0; i < depth; ++i) {
      const auto dl = doc_labels.find(r.ranked[i].doc_id);
      if (dl == doc_labels.end()) {
        throw ConfigError("proxy_metrics: document " + std::to_string(r.ranked[i].doc_id) +
                          " has no label");
      }
      auto v = std::find_if(votes.begin(), votes.end(),
                            [&](const auto& e) { return e.first == dl->second; });
      if (v == votes.end()) {
        votes.emplace_back(dl->second, 1);
      } else {
        ++v->second;
      }
    }
    const auto best = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
      return a.second < b.second;  // max_element keeps the first maximum
    });
    truth.push_back(qt->second);
    pred.push_back(best->first);
  }

  ProxyMetricsReport report;
  report.task = task;
  const auto n = static_cast<double>(truth.size());
  std::set<std::string> classes(truth.begin(), truth.end());
  classes.insert(pred.begin(), pred.end());
  double correct = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i] ? 1.0 : 0.0;
  report.accuracy = correct / n;
  double f1_sum = 0.0;
  for (const auto& c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = pred[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    f1_sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  report.macro_f1 = f1_sum / static_cast<double>(classes.size());

  if (task == TaskKind::Regression) {
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      double t = 0, p = 0;
      try {
        t = parse_number(truth[i]);
        p = parse_number(pred[i]);
      } catch (const std::exception&) {
        throw ConfigError("proxy_metrics: regression needs numeric labels");
      }
      abs_sum += std::abs(t - p);
      sq_sum += (t - p) * (t - p);
    }
    report.mae = abs_sum / n;
    report.rmse = std::sqrt(sq_sum / n);
  }
  return report;
}

std::vector<bool> gap_mask(const std::vector<RetrievalResult>& clean, double min_gap) {
  std::vector<bool> mask;
  mask.reserve(clean.size());
  for (const auto& r : clean) mask.push_back(r.top2_gap() > min_gap);
  return mask;
}

double masked_top1_rate(const std::vector<RetrievalResult>& noisy,
                        const std::vector<RetrievalResult>& clean,
                        const std::vector<bool>& mask) {
  if (noisy.size() != clean.size() || mask.size() != clean.size()) {
    throw ConfigError("masked_top1_rate: size mismatch");
  }
  double hits = 0.0, total = 0.0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    if (!mask[i]) continue;
    if (noisy[i].query_id != clean[i].query_id) throw ConfigError("masked_top1_rate: unpaired");
    total += 1.0;
    hits += noisy[i].ranked.front().doc_id == clean[i].ranked.front().doc_id ? 1.0 : 0.0;
  }
  return total > 0 ? hits / total : std::numeric_limits<double>::quiet_NaN();
}

std::vector<SweepRow> sweep_sigma(const EmbeddingMatrix& corpus,
                                  const EmbeddingMatrix& queries,
                                  const ProjectionHead& head,
                                  const DeviceProfile& device,
                                  const std::vector<double>& sigma_list,
                                  const std::vector<std::uint64_t>& seeds,
                                  const EvalOptions& opts) {
  if (sigma_list.empty()) throw ConfigError("sweep_sigma: empty sigma list");
  if (!std::is_sorted(sigma_list.begin(), sigma_list.end())) {
    throw ConfigError("sweep_sigma: sigma list must be sorted");
  }
  if (seeds.empty()) throw ConfigError("sweep_sigma: no seeds");
  const Evaluator eval(corpus, queries, head, device, opts);
  std::vector<SweepRow> rows;
  for (double sigma : sigma_list) {
    std::vector<double> top1, filtered, overlap;
    for (std::uint64_t seed : seeds) {
      const auto noisy = eval.noisy(sigma, seed);
      const auto rep = mips_accuracy(noisy, eval.clean);
      top1.push_back(rep.top1_match_rate);
      overlap.push_back(rep.topk_overlap);
      filtered.push_back(masked_top1_rate(noisy, eval.clean, eval.mask));
    }
    SweepRow row;
    row.sigma = sigma;
    row.device = device.name;
    row.top1_mean = mean_of(top1);
    row.top1_std = sample_std(top1);
    row.top1_filtered_mean = mean_of(filtered);
    row.topk_overlap_mean = mean_of(overlap);
    row.n_queries = eval.clean.size();
    row.n_filtered = eval.n_filtered();
    row.seed_count = static_cast<int>(seeds.size());
    rows.push_back(row);
  }
  return rows;
}

std::vector<CompareRow> compare_devices(
    const EmbeddingMatrix& corpus, const EmbeddingMatrix& queries,
    const std::map<std::string, ProjectionHead>& heads,
    const std::vector<DeviceProfile>& devices,
    const std::vector<std::uint64_t>& seeds, const EvalOptions& opts,
    const LabelContext* labels) {
  for (const char* required : {"untrained", "cde", "cdi"}) {
    if (!heads.count(required)) {
      throw ConfigError(std::string("compare_devices: missing head '") + required + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("compare_devices: no seeds");
  std::vector<CompareRow> rows;
  for (const auto& device : devices) {
    for (const auto& [method, head] : heads) {
      const Evaluator eval(corpus, queries, head, device, opts);
      std::vector<double> top1, filtered, overlap, acc, f1, mae, rmse;
      for (std::uint64_t seed : seeds) {
        const auto noisy = eval.noisy(opts.sigma_scale, seed);
        const auto rep = mips_accuracy(noisy, eval.clean);
        top1.push_back(rep.top1_match_rate);
        overlap.push_back(rep.topk_overlap);
        filtered.push_back(masked_top1_rate(noisy, eval.clean, eval.mask));
        if (labels) {
          const auto pm = proxy_metrics(noisy, labels->doc_labels, labels->query_labels,
                                        labels->task, opts.vote_k);
          acc.push_back(pm.accuracy);
          f1.push_back(pm.macro_f1);
          if (pm.mae) mae.push_back(*pm.mae);
          if (pm.rmse) rmse.push_back(*pm.rmse);
        }
      }
      CompareRow row;
      row.device = device.name;
      row.method = method;
      row.sigma = opts.mode == NoiseMode::DeviceTable ? opts.sigma_scale : 0.0;
      row.top1_mean = mean_of(top1);
      row.top1_std = sample_std(top1);
      row.top1_filtered_mean = mean_of(filtered);
      row.topk_overlap_mean = mean_of(overlap);
      row.n_queries = eval.clean.size();
      row.seed_count = static_cast<int>(seeds.size());
      if (labels) {
        ProxyMetricsReport pm;
        pm.task = labels->task;
        pm.accuracy = mean_of(acc);
        pm.macro_f1 = mean_of(f1);
        if (!mae.empty()) pm.mae = mean_of(mae);
        if (!rmse.empty()) pm.rmse = mean_of(rmse);
        row.proxy = pm;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows,
                     const std::string& method) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt(r.sigma) << ',' << r.device << ',' << method << ',' << fmt(r.top1_mean) << ','
        << fmt(r.topk_overlap_mean) << ",,,,," << r.seed_count << ',' << fmt(r.top1_std) << ','
        << fmt(r.top1_filtered_mean) << ',' << r.n_queries << ',' << r.n_filtered << '\n';
  }
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt(r.sigma) << ',' << r.device << ',' << r.method << ',' << fmt(r.top1_mean) << ','
        << fmt(r.topk_overlap_mean) << ',';
    if (r.proxy) {
      out << fmt(r.proxy->accuracy) << ',' << fmt(r.proxy->macro_f1) << ',' << fmt(r.proxy->mae)
          << ',' << fmt(r.proxy->rmse) << ',';
    } else {
      out << ",,,,";
    }
    out << r.seed_count << ',' << fmt(r.top1_std) << ',' << fmt(r.top1_filtered_mean) << ','
        << r.n_queries << ",\n";
  }
}

void to_json(nlohmann::json& j, const MipsAccuracyReport& r) {
  j = nlohmann::json{{"top1_match_rate", r.top1_match_rate},
                     {"topk_overlap", r.topk_overlap},
                     {"k", r.k},
                     {"n_queries", r.n_queries},
                     {"sigma_scale", r.sigma_scale},
                     {"device", r.device},
                     {"seeds", r.seeds}};
}

void to_json(nlohmann::json& j, const ProxyMetricsReport& r) {
  j = nlohmann::json{{"task", r.task == TaskKind::Classification ? "classification" : "regression"},
                     {"accuracy", r.accuracy},
                     {"macro_f1", r.macro_f1},
                     {"mae", r.mae ? nlohmann::json(*r.mae) : nlohmann::json(nullptr)},
                     {"rmse", r.rmse ? nlohmann::json(*r.rmse) : nlohmann::json(nullptr)}};
}

}  // namespace cimrag
