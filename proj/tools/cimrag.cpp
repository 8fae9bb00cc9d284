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

// Command-line front end. Each subcommand loads an optional JSON config,
// applies flag overrides on top and hands off to cimrag::run.

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cimrag/experiment.hpp"

namespace {

using nlohmann::json;

struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> strings;
  std::map<std::string, double> numbers;
  std::map<std::string, std::int64_t> integers;
  std::map<std::string, double> train_numbers;
  std::map<std::string, std::int64_t> train_integers;
  std::string similarity;
  std::vector<std::uint64_t> seeds;
  std::vector<double> sigma_list;
  std::vector<std::string> devices;
  std::vector<std::string> heads;
  bool write_verify = false;
  bool no_write_verify = false;
  bool numeric_labels = false;
  bool fp32_reference = false;
  std::vector<std::string> sets;
};

std::string flag_name(const std::string& key) {
  std::string flag = "--" + key;
  for (auto& ch : flag) ch = ch == '_' ? '-' : ch;
  return flag;
}

void add_options(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  for (const char* key : {"dataset", "queries", "embeddings", "query_embeddings",
                          "embedding_source", "device", "noise_mode", "mode", "triplets",
                          "head", "index", "output_dir", "query_text"}) {
    sub->add_option(flag_name(key), o.strings[key]);
  }
  for (const char* key : {"din", "hash_seed", "precision_bits", "d_out", "array_size", "k",
                          "seed", "synth_docs", "synth_queries", "synth_topics"}) {
    sub->add_option(flag_name(key), o.integers[key]);
  }
  sub->add_option("--sigma-scale", o.numbers["sigma_scale"]);
  sub->add_option("--margin", o.train_numbers["margin"]);
  sub->add_option("--dropout", o.train_numbers["dropout"]);
  sub->add_option("--lr,--learning-rate", o.train_numbers["learning_rate"]);
  sub->add_option("--K", o.train_integers["K"], "negatives per anchor");
  sub->add_option("--epochs", o.train_integers["epochs"]);
  sub->add_option("--batch-size", o.train_integers["batch_size"]);
  sub->add_option("--similarity", o.similarity)->check(CLI::IsMember({"cosine", "euclidean"}));
  sub->add_option("--seeds", o.seeds)->delimiter(',');
  sub->add_option("--sigma-list", o.sigma_list)->delimiter(',');
  sub->add_option("--devices", o.devices)->delimiter(',');
  sub->add_option("--heads", o.heads, "method=path pairs")->delimiter(',');
  sub->add_flag("--write-verify", o.write_verify);
  sub->add_flag("--no-write-verify", o.no_write_verify);
  sub->add_flag("--numeric-labels", o.numeric_labels);
  sub->add_flag("--fp32-reference", o.fp32_reference, "rank against fp32 cosine");
  sub->add_option("--set", o.sets, "raw key=<json> override");
}

json build_config(const CLI::App* sub, const Overrides& o) {
  json j = json::object();
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path, std::ios::binary);
    j = json::parse(f);
  }
  j["output_dir"] = j.value("output_dir", cimrag::ExperimentConfig::default_output_dir().string());
  auto given = [&](const std::string& flag) { return sub->count(flag) > 0; };
  for (const auto& [key, v] : o.strings) {
    if (given(flag_name(key))) j[key] = v;
  }
  for (const auto& [key, v] : o.integers) {
    if (given(flag_name(key))) j[key] = v;
  }
  for (const auto& [key, v] : o.numbers) {
    if (given(flag_name(key))) j[key] = v;
  }
  json& train = j["train"];
  if (train.is_null()) train = json::object();
  for (const auto& [key, v] : o.train_numbers) {
    const std::string flag = key == "learning_rate" ? "--lr" : flag_name(key);
    if (given(flag)) train[key] = v;
  }
  for (const auto& [key, v] : o.train_integers) {
    if (given(flag_name(key))) train[key] = v;
  }
  if (!o.similarity.empty()) train["similarity"] = o.similarity;
  if (!o.seeds.empty()) j["seeds"] = o.seeds;
  if (!o.sigma_list.empty()) j["sigma_list"] = o.sigma_list;
  if (!o.devices.empty()) j["devices"] = o.devices;
  for (const auto& pair : o.heads) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--heads", "expected method=path");
    j["heads"][pair.substr(0, eq)] = pair.substr(eq + 1);
  }
  if (o.write_verify) j["write_verify"] = true;
  if (o.no_write_verify) j["write_verify"] = nullptr;
  if (o.numeric_labels) j["synth_numeric_labels"] = true;
  if (o.fp32_reference) j["fp32_reference"] = true;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=<json>");
    j[s.substr(0, eq)] = json::parse(s.substr(eq + 1));
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compute-in-memory retrieval simulator and noise-aware embedding trainer"};
  app.require_subcommand(1);
  std::map<std::string, Overrides> overrides;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> help = {
      {"synth", "write a synthetic labeled JSONL corpus"},
      {"embed", "embed JSONL records into EMB1, or validate EMB1 input"},
      {"construct", "build a CDE or CDI triplet set (TRP1)"},
      {"train", "train a projection head on a triplet set"},
      {"program", "program document embeddings onto simulated crossbars"},
      {"query", "run in-memory MIPS for a query set"},
      {"eval", "score a programmed index against its zero-noise reference"},
      {"sweep", "top-1 match rate over a list of sigma scales"},
      {"compare", "compare heads across devices"}};
  for (std::string_view name : cimrag::kCommands) {
    const std::string n(name);
    subs[n] = app.add_subcommand(n, help.at(n));
    add_options(subs[n], overrides[n]);
  }
  CLI11_PARSE(app, argc, argv);

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    cimrag::ExperimentConfig cfg;
    try {
      cfg = build_config(sub, overrides[name]).get<cimrag::ExperimentConfig>();
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
    return cimrag::run(name, cfg, std::cout, std::cerr);
  }
  return 1;
}
