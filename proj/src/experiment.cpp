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

#include "cimrag/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "cimrag/dataset.hpp"
#include "cimrag/eval.hpp"
#include "cimrag/formats.hpp"

namespace cimrag {

namespace fs = std::filesystem;
using nlohmann::json;

NLOHMANN_JSON_SERIALIZE_ENUM(EmbeddingSource, {{EmbeddingSource::HashEmbed, "hash"},
                                               {EmbeddingSource::Emb1File, "emb1"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ConstructMode, {{ConstructMode::None, "none"},
                                             {ConstructMode::CDE, "cde"},
                                             {ConstructMode::CDI, "cdi"}})

fs::path ExperimentConfig::default_output_dir() {
  const char* env = std::getenv("CIMRAG_OUTPUT_DIR");
  return env && *env ? fs::path(env) : fs::path("out");
}

NoiseConfig ExperimentConfig::noise_config(std::uint64_t noise_seed) const {
  NoiseConfig n;
  n.mode = noise_mode;
  n.seed = noise_seed;
  if (noise_mode == NoiseMode::DeviceTable) {
    n.sigma_scale = sigma_scale;
  } else {
    n.sigma_scale = 0.0;
    n.naive_sigma = sigma_scale;
  }
  return n;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t = train;
  t.device = find_device(device);
  t.quant = quant();
  t.noise = noise_config(seed);
  t.seed = seed;
  return t;
}

void ExperimentConfig::validate() const {
  if (din < 8) throw ConfigError("din must be at least 8");
  if (d_out < 1 || d_out > din) throw ConfigError("d_out must be in [1, din]");
  if (k < 1) throw ConfigError("k must be positive");
  if (array_size < 1) throw ConfigError("array_size must be positive");
  if (!(sigma_scale >= 0.0)) throw ConfigError("sigma_scale must be non-negative");
  quant().slices_for(find_device(device));
  if (write_verify) write_verify->validate();
  for (double s : sigma_list) {
    if (!(s >= 0.0)) throw ConfigError("sigma_list entries must be non-negative");
  }
  for (const auto& d : devices) find_device(d);
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
  auto must_exist = [](const char* what, const fs::path& p) {
    if (!p.empty() && !fs::exists(p)) {
      throw ConfigError(std::string(what) + " does not exist: " + p.string());
    }
  };
  must_exist("dataset", dataset);
  must_exist("queries", queries);
  must_exist("embeddings", embeddings);
  must_exist("query_embeddings", query_embeddings);
  must_exist("triplets", triplets);
  must_exist("head", head);
  must_exist("index", index);
  for (const auto& [method, p] : heads) must_exist(("head for " + method).c_str(), p);
  train_config().validate();
}

void to_json(json& j, const ExperimentConfig& c) {
  json heads = json::object();
  for (const auto& [k, v] : c.heads) heads[k] = v.string();
  json t = c.train;
  // These are owned by the experiment-level fields.
  for (const char* key : {"device", "precision_bits", "noise", "seed"}) t.erase(key);
  j = json{{"dataset", c.dataset.string()},
           {"queries", c.queries.string()},
           {"embedding_source", c.embedding_source},
           {"embeddings", c.embeddings.string()},
           {"query_embeddings", c.query_embeddings.string()},
           {"query_text", c.query_text},
           {"din", c.din},
           {"hash_seed", c.hash_seed},
           {"device", c.device},
           {"precision_bits", c.precision_bits},
           {"d_out", c.d_out},
           {"array_size", c.array_size},
           {"sigma_scale", c.sigma_scale},
           {"noise_mode", std::string(to_string(c.noise_mode))},
           {"write_verify", c.write_verify ? json(*c.write_verify) : json(nullptr)},
           {"mode", c.mode},
           {"train", t},
           {"k", c.k},
           {"fp32_reference", c.fp32_reference},
           {"seed", c.seed},
           {"seeds", c.seeds},
           {"sigma_list", c.sigma_list},
           {"devices", c.devices},
           {"triplets", c.triplets.string()},
           {"head", c.head.string()},
           {"index", c.index.string()},
           {"heads", heads},
           {"synth_docs", c.synth_docs},
           {"synth_queries", c.synth_queries},
           {"synth_topics", c.synth_topics},
           {"synth_numeric_labels", c.synth_numeric_labels},
           {"output_dir", c.output_dir.string()}};
}

void from_json(const json& j, ExperimentConfig& c) {
  static const std::set<std::string> known = {
      "dataset", "queries", "embedding_source", "embeddings", "query_embeddings", "query_text", "din",
      "hash_seed", "device", "precision_bits", "d_out", "array_size", "sigma_scale",
      "noise_mode", "write_verify", "mode", "train", "k", "fp32_reference", "seed", "seeds", "sigma_list",
      "devices", "triplets", "head", "index", "heads", "synth_docs", "synth_queries",
      "synth_topics", "synth_numeric_labels", "output_dir"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  auto path = [&](const char* key, fs::path& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
  };
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) j.at(key).get_to(out);
  };
  path("dataset", c.dataset);
  path("queries", c.queries);
  if (j.contains("embedding_source")) {
    const auto s = j.at("embedding_source").get<std::string>();
    if (s != "hash" && s != "emb1") throw ConfigError("embedding_source must be hash or emb1");
    c.embedding_source = j.at("embedding_source").get<EmbeddingSource>();
  }
  path("embeddings", c.embeddings);
  path("query_embeddings", c.query_embeddings);
  get("query_text", c.query_text);
  get("din", c.din);
  get("hash_seed", c.hash_seed);
  get("device", c.device);
  get("precision_bits", c.precision_bits);
  get("d_out", c.d_out);
  get("array_size", c.array_size);
  get("sigma_scale", c.sigma_scale);
  if (j.contains("noise_mode")) {
    c.noise_mode = noise_mode_from_string(j.at("noise_mode").get<std::string>());
  }
  if (j.contains("write_verify")) {
    const auto& wv = j.at("write_verify");
    if (wv.is_null() || (wv.is_boolean() && !wv.get<bool>())) {
      c.write_verify.reset();
    } else if (wv.is_boolean()) {
      c.write_verify = WriteVerifyConfig{};
    } else {
      c.write_verify = wv.get<WriteVerifyConfig>();
    }
  }
  if (j.contains("mode")) {
    const auto s = j.at("mode").get<std::string>();
    if (s != "none" && s != "cde" && s != "cdi") {
      throw ConfigError("mode must be one of none, cde, cdi");
    }
    c.mode = j.at("mode").get<ConstructMode>();
  }
  if (j.contains("train")) {
    json t = c.train;
    t.update(j.at("train"));
    c.train = t.get<TrainConfig>();
  }
  get("k", c.k);
  get("fp32_reference", c.fp32_reference);
  get("seed", c.seed);
  get("seeds", c.seeds);
  get("sigma_list", c.sigma_list);
  get("devices", c.devices);
  path("triplets", c.triplets);
  path("head", c.head);
  path("index", c.index);
  if (j.contains("heads")) {
    c.heads.clear();
    for (const auto& [k, v] : j.at("heads").items()) c.heads[k] = v.get<std::string>();
  }
  get("synth_docs", c.synth_docs);
  get("synth_queries", c.synth_queries);
  get("synth_topics", c.synth_topics);
  get("synth_numeric_labels", c.synth_numeric_labels);
  path("output_dir", c.output_dir);
}

namespace {

constexpr const char* kPathKeys[] = {"dataset", "queries", "embeddings", "query_embeddings",
                                     "triplets", "head", "index", "heads", "output_dir"};

}  // namespace

std::string config_hash(const ExperimentConfig& c) {
  json j = c;
  for (const char* key : kPathKeys) j.erase(key);
  return io::hex64(io::fnv1a(j.dump()));
}

namespace {

std::string file_hash(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return io::hex64(io::fnv1a(bytes));
}

struct Context {
  const ExperimentConfig& cfg;
  std::ostream& log;
  std::vector<std::string> outputs;
  json inputs = json::object();

  // Records a file this run reads, with its content hash.
  const fs::path& input(const fs::path& p) {
    if (fs::exists(p)) inputs[p.string()] = file_hash(p);
    if (p.extension() == ".emb1" && fs::exists(ids_sidecar_path(p))) {
      inputs[ids_sidecar_path(p).string()] = file_hash(ids_sidecar_path(p));
    }
    return p;
  }

  fs::path out(const char* name) {
    outputs.emplace_back(name);
    return cfg.output_dir / name;
  }
  fs::path or_default(const fs::path& p, const char* name) const {
    return p.empty() ? cfg.output_dir / name : p;
  }
};

void dump_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw FormatError("write failed: " + path.string());
}

json load_json(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ProjectionHead load_head(const fs::path& path) {
  ProjectionHead head = load_json(path).get<ProjectionHead>();
  if (!head.all_finite()) throw FormatError(path.string() + ": non-finite weights");
  return head;
}

Embedder make_embedder(const ExperimentConfig& c) { return hash_embedder(c.din, c.hash_seed); }

// A head from the config, or a seeded random orthonormal one when none is given.
ProjectionHead head_or_untrained(Context& ctx, int din) {
  if (!ctx.cfg.head.empty()) return load_head(ctx.input(ctx.cfg.head));
  return ProjectionHead::random_orthonormal(din, ctx.cfg.d_out, ctx.cfg.seed);
}

EmbeddingMatrix doc_embeddings(Context& ctx) {
  const auto& c = ctx.cfg;
  if (!c.embeddings.empty()) return read_emb1(ctx.input(c.embeddings));
  const fs::path chained = c.output_dir / "docs.emb1";
  if (fs::exists(chained)) return read_emb1(ctx.input(chained));
  if (c.dataset.empty()) throw ConfigError("no document embeddings or dataset given");
  return embed_records(ingest(ctx.input(c.dataset)), make_embedder(c));
}

EmbeddingMatrix query_embeddings(Context& ctx) {
  const auto& c = ctx.cfg;
  if (!c.query_embeddings.empty()) return read_emb1(ctx.input(c.query_embeddings));
  const fs::path chained = c.output_dir / "queries.emb1";
  if (fs::exists(chained)) return read_emb1(ctx.input(chained));
  if (c.queries.empty()) throw ConfigError("no query embeddings or queries given");
  return embed_records(ingest(ctx.input(c.queries)), make_embedder(c));
}

EvalOptions eval_options(const ExperimentConfig& c) {
  EvalOptions o;
  o.k = c.k;
  o.quant = c.quant();
  o.array_size = c.array_size;
  o.write_verify = c.write_verify;
  o.mode = c.noise_mode;
  o.sigma_scale = c.sigma_scale;
  o.fp32_reference = c.fp32_reference;
  return o;
}

// Labels for proxy metrics, when both JSONL files carry them.
std::optional<LabelContext> label_context(Context& cx) {
  const auto& c = cx.cfg;
  if (c.dataset.empty() || c.queries.empty()) return std::nullopt;
  const auto docs = ingest(cx.input(c.dataset));
  const auto queries = ingest(cx.input(c.queries));
  const LabelKind dk = infer_label_kind(docs);
  const LabelKind qk = infer_label_kind(queries);
  if (dk == LabelKind::None || qk == LabelKind::None) return std::nullopt;
  LabelContext ctx;
  ctx.task = dk == LabelKind::Numeric && qk == LabelKind::Numeric ? TaskKind::Regression
                                                                  : TaskKind::Classification;
  for (const auto& r : docs) {
    if (r.label) ctx.doc_labels[r.id] = *r.label;
  }
  for (const auto& r : queries) {
    if (r.label) ctx.query_labels[r.id] = *r.label;
  }
  return ctx;
}

void cmd_synth(Context& ctx) {
  const auto& c = ctx.cfg;
  TextCorpusSpec spec;
  spec.n_docs = c.synth_docs;
  spec.n_queries = c.synth_queries;
  spec.n_topics = c.synth_topics;
  spec.numeric_labels = c.synth_numeric_labels;
  spec.seed = c.seed;
  const TextCorpus corpus = make_text_corpus(spec);
  write_jsonl(ctx.out("docs.jsonl"), corpus.docs);
  write_jsonl(ctx.out("queries.jsonl"), corpus.queries);
  ctx.log << "synth: " << corpus.docs.size() << " docs, " << corpus.queries.size()
          << " queries\n";
}

void cmd_embed(Context& ctx) {
  const auto& c = ctx.cfg;
  if (c.embedding_source == EmbeddingSource::Emb1File) {
    // Validate and summarize externally produced embeddings.
    if (c.embeddings.empty()) throw ConfigError("embed: embedding_source=emb1 needs embeddings");
    json summary;
    const EmbeddingMatrix docs = read_emb1(ctx.input(c.embeddings));
    summary["docs"] = {{"count", docs.count()}, {"dim", docs.dim()}};
    if (!c.query_embeddings.empty()) {
      const EmbeddingMatrix q = read_emb1(ctx.input(c.query_embeddings));
      if (q.dim() != docs.dim()) throw FormatError("embed: query and document dims differ");
      summary["queries"] = {{"count", q.count()}, {"dim", q.dim()}};
    }
    summary["config_hash"] = config_hash(c);
    dump_json(ctx.out("embed_report.json"), summary);
    ctx.log << "embed: validated " << docs.count() << " x " << docs.dim() << '\n';
    return;
  }
  if (c.dataset.empty()) throw ConfigError("embed: dataset is required");
  const Embedder embedder = make_embedder(c);
  const EmbeddingMatrix docs = embed_records(ingest(ctx.input(c.dataset)), embedder);
  write_emb1(ctx.out("docs.emb1"), docs);
  ctx.outputs.push_back("docs.emb1.ids.jsonl");
  json summary;
  summary["docs"] = {{"count", docs.count()}, {"dim", docs.dim()}};
  if (!c.queries.empty()) {
    const EmbeddingMatrix q = embed_records(ingest(ctx.input(c.queries)), embedder);
    write_emb1(ctx.out("queries.emb1"), q);
    ctx.outputs.push_back("queries.emb1.ids.jsonl");
    summary["queries"] = {{"count", q.count()}, {"dim", q.dim()}};
  }
  summary["config_hash"] = config_hash(c);
  dump_json(ctx.out("embed_report.json"), summary);
  ctx.log << "embed: " << docs.count() << " docs, dim " << docs.dim() << '\n';
}

void cmd_construct(Context& ctx) {
  const auto& c = ctx.cfg;
  const TrainConfig t = c.train_config();
  TripletSet set;
  switch (c.mode) {
    case ConstructMode::None:
      throw ConfigError("construct: mode is none");
    case ConstructMode::CDE:
      if (c.dataset.empty()) throw ConfigError("construct: cde needs a labeled dataset");
      set = construct_cde(ingest(ctx.input(c.dataset)), t.K, t.dropout, make_embedder(c), c.seed);
      break;
    case ConstructMode::CDI:
      if (!c.dataset.empty() && c.embedding_source == EmbeddingSource::HashEmbed &&
          c.embeddings.empty()) {
        set = construct_cdi(ingest(ctx.input(c.dataset)), t.K, t.dropout, make_embedder(c), c.seed);
      } else {
        set = construct_cdi(doc_embeddings(ctx), t.K, t.dropout, c.seed);
      }
      break;
  }
  write_trp1(ctx.out("triplets.trp1"), set);
  dump_json(ctx.out("construct_report.json"),
            {{"config_hash", config_hash(c)},
             {"mode", c.mode},
             {"count", set.size()},
             {"K", set.K},
             {"dim", set.dim()},
             {"dropout", t.dropout},
             {"sampled_with_replacement", set.sampled_with_replacement},
             {"initial_loss", batch_triplet_loss(set, t.margin, t.similarity)}});
  ctx.log << "construct: " << set.size() << " triplets\n";
}

void cmd_train(Context& ctx) {
  const auto& c = ctx.cfg;
  if (c.mode == ConstructMode::None) throw ConfigError("train: mode is none");
  const TripletSet set = read_trp1(ctx.input(ctx.or_default(c.triplets, "triplets.trp1")));
  if (set.size() == 0) throw TrainingError("train: empty triplet set");
  const ProjectionHead init = head_or_untrained(ctx, static_cast<int>(set.dim()));
  const TrainConfig t = c.train_config();
  const TrainReport report = train(init, set, t);
  dump_json(ctx.out("head.json"), report.head);
  json r = report;
  r["config_hash"] = config_hash(c);
  r["mode"] = c.mode;
  r["train"] = t;
  dump_json(ctx.out("train_report.json"), r);
  ctx.log << "train: " << report.steps << " steps, final loss "
          << (report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()) << '\n';
}

void cmd_program(Context& ctx) {
  const auto& c = ctx.cfg;
  const EmbeddingMatrix docs = doc_embeddings(ctx);
  const ProjectionHead head = head_or_untrained(ctx, static_cast<int>(docs.dim()));
  const ProgrammedIndex index = program(docs, head, find_device(c.device), c.quant(),
                                        c.noise_config(c.seed), c.write_verify,
                                        {c.array_size, 0});
  save_index(index, c.output_dir / "index");
  ctx.outputs.push_back("index.json");
  ctx.outputs.push_back("index.cells.f32");
  if (c.head.empty()) {
    dump_json(ctx.out("head.json"), head);
  }
  ctx.log << "program: " << index.size() << " docs on " << index.tiles().size() << " tiles\n";
}

ProgrammedIndex open_index(Context& ctx) {
  const fs::path sidecar = ctx.input(ctx.or_default(ctx.cfg.index, "index.json"));
  ctx.input(sidecar.parent_path() / (sidecar.stem().string() + ".cells.f32"));
  return load_index(sidecar);
}

ProjectionHead index_head(Context& ctx) {
  return load_head(ctx.input(ctx.or_default(ctx.cfg.head, "head.json")));
}

void cmd_query(Context& ctx) {
  const auto& c = ctx.cfg;
  const ProgrammedIndex index = open_index(ctx);
  const ProjectionHead head = index_head(ctx);
  std::vector<RetrievalResult> results;
  if (!c.query_text.empty()) {
    if (head.din() != c.din) throw ConfigError("query: head din differs from hash-embed din");
    results.push_back(mips(index, head, make_embedder(c)(c.query_text), c.k, 0));
  } else {
    results = mips_batch(index, head, query_embeddings(ctx), c.k);
  }
  dump_json(ctx.out("results.json"),
            {{"k", c.k}, {"config_hash", config_hash(c)}, {"results", results}});
  ctx.log << "query: " << results.size() << " queries\n";
}

void cmd_eval(Context& ctx) {
  const auto& c = ctx.cfg;
  const ProgrammedIndex index = open_index(ctx);
  const ProjectionHead head = index_head(ctx);
  const EmbeddingMatrix docs = doc_embeddings(ctx);
  const EmbeddingMatrix queries = query_embeddings(ctx);
  if (docs.ids != index.doc_ids()) {
    throw ConfigError("eval: document embeddings do not match the index");
  }
  const auto noisy = mips_batch(index, head, queries, c.k);
  std::vector<RetrievalResult> clean;
  if (c.fp32_reference) {
    clean = mips_exact_batch(docs, head, queries, c.k);
  } else {
    NoiseConfig none;
    none.sigma_scale = 0.0;
    const ProgrammedIndex ref = program(docs, head, index.device(), index.quant(), none,
                                        std::nullopt, {index.array_size(), 0});
    clean = mips_batch(ref, head, queries, c.k);
  }
  MipsAccuracyReport acc = mips_accuracy(noisy, clean);
  acc.sigma_scale = index.noise().mode == NoiseMode::DeviceTable ? index.noise().sigma_scale
                                                                 : index.noise().naive_sigma;
  acc.device = index.device().name;
  acc.seeds = {index.noise().seed};
  const auto mask = gap_mask(clean, 2.0 * index.quant().scale());
  json report = {{"config_hash", config_hash(c)},
                 {"mips", acc},
                 {"top1_match_rate_filtered", masked_top1_rate(noisy, clean, mask)},
                 {"n_queries_filtered", std::count(mask.begin(), mask.end(), true)},
                 {"programming", index.metadata().at("stats")}};
  if (const auto labels = label_context(ctx)) {
    report["proxy"] = proxy_metrics(noisy, labels->doc_labels, labels->query_labels,
                                    labels->task);
  }
  dump_json(ctx.out("eval_report.json"), report);
  ctx.log << "eval: top1_match_rate " << acc.top1_match_rate << '\n';
}

void cmd_sweep(Context& ctx) {
  const auto& c = ctx.cfg;
  const EmbeddingMatrix docs = doc_embeddings(ctx);
  const EmbeddingMatrix queries = query_embeddings(ctx);
  const ProjectionHead head = head_or_untrained(ctx, static_cast<int>(docs.dim()));
  const auto rows = sweep_sigma(docs, queries, head, find_device(c.device), c.sigma_list,
                                c.seeds, eval_options(c));
  std::ofstream f(ctx.out("sweep.csv"), std::ios::binary);
  write_sweep_csv(f, rows, c.head.empty() ? "untrained" : c.head.stem().string());
  if (!f) throw FormatError("write failed: sweep.csv");
  ctx.log << "sweep: " << rows.size() << " rows\n";
}

void cmd_compare(Context& ctx) {
  const auto& c = ctx.cfg;
  const EmbeddingMatrix docs = doc_embeddings(ctx);
  const EmbeddingMatrix queries = query_embeddings(ctx);
  std::map<std::string, ProjectionHead> heads;
  for (const auto& [method, path] : c.heads) heads.emplace(method, load_head(ctx.input(path)));
  if (!heads.count("untrained")) {
    heads.emplace("untrained", ProjectionHead::random_orthonormal(
                                   static_cast<int>(docs.dim()), c.d_out, c.seed));
  }
  std::vector<DeviceProfile> devices;
  if (c.devices.empty()) {
    devices = builtin_devices();
  } else {
    for (const auto& d : c.devices) devices.push_back(find_device(d));
  }
  const auto labels = label_context(ctx);
  const auto rows = compare_devices(docs, queries, heads, devices, c.seeds, eval_options(c),
                                    labels ? &*labels : nullptr);
  std::ofstream f(ctx.out("compare.csv"), std::ios::binary);
  write_compare_csv(f, rows);
  if (!f) throw FormatError("write failed: compare.csv");
  ctx.log << "compare: " << rows.size() << " rows\n";
}

}  // namespace

int run(std::string_view command, const ExperimentConfig& config, std::ostream& log,
        std::ostream& err) {
  try {
    config.validate();
    fs::create_directories(config.output_dir);
    Context ctx{config, log, {}};
    if (command == "synth") {
      cmd_synth(ctx);
    } else if (command == "embed") {
      cmd_embed(ctx);
    } else if (command == "construct") {
      cmd_construct(ctx);
    } else if (command == "train") {
      cmd_train(ctx);
    } else if (command == "program") {
      cmd_program(ctx);
    } else if (command == "query") {
      cmd_query(ctx);
    } else if (command == "eval") {
      cmd_eval(ctx);
    } else if (command == "sweep") {
      cmd_sweep(ctx);
    } else if (command == "compare") {
      cmd_compare(ctx);
    } else {
      throw ConfigError("unknown command '" + std::string(command) + "'");
    }
    dump_json(config.output_dir / ("manifest_" + std::string(command) + ".json"),
              {{"command", command},
               {"config", config},
               {"config_hash", config_hash(config)},
               {"seed", config.seed},
               {"inputs", ctx.inputs},
               {"outputs", ctx.outputs}});
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return 3;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << '\n';
    return 4;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cimrag
