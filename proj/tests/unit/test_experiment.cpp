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

#include <sstream>

#include <gtest/gtest.h>

#include "cimrag/experiment.hpp"
#include "helpers.hpp"

namespace cimrag {
namespace {

using testing::slurp;
using testing::TempDir;

ExperimentConfig small_config(const std::filesystem::path& out) {
  ExperimentConfig c;
  c.output_dir = out;
  c.synth_docs = 120;
  c.synth_queries = 20;
  c.train.epochs = 2;
  c.seeds = {0, 1};
  return c;
}

int quiet_run(std::string_view cmd, const ExperimentConfig& c) {
  std::ostringstream log, err;
  const int rc = run(cmd, c, log, err);
  EXPECT_EQ(rc == 0, err.str().empty()) << err.str();
  return rc;
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.device = "Device-4";
  c.write_verify = WriteVerifyConfig{0.004, 7};
  c.heads["cdi"] = "h.json";
  c.train.margin = 0.25;
  c.mode = ConstructMode::CDE;
  const auto j = nlohmann::json(c);
  const auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.write_verify->max_iterations, 7);
  EXPECT_EQ(back.train.margin, 0.25);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW((nlohmann::json{{"devise", "Device-1"}}.get<ExperimentConfig>()), ConfigError);
  EXPECT_THROW((nlohmann::json{{"mode", "rocr"}}.get<ExperimentConfig>()), ConfigError);
  ExperimentConfig c;
  c.device = "Device-7";
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.d_out = 500;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, HashIgnoresOutputDir) {
  ExperimentConfig a, b;
  a.output_dir = "x";
  b.output_dir = "y";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, WriteVerifyFlagForms) {
  EXPECT_TRUE((nlohmann::json{{"write_verify", true}}.get<ExperimentConfig>().write_verify));
  EXPECT_FALSE((nlohmann::json{{"write_verify", nullptr}}.get<ExperimentConfig>().write_verify));
}

TEST(Run, SweepWritesRowsAndManifest) {
  TempDir dir;
  auto c = small_config(dir.path());
  ASSERT_EQ(quiet_run("synth", c), 0);
  c.dataset = dir / "docs.jsonl";
  c.queries = dir / "queries.jsonl";
  ASSERT_EQ(quiet_run("embed", c), 0);
  c.sigma_list = {0.0, 0.05, 0.1};
  ASSERT_EQ(quiet_run("sweep", c), 0);
  std::istringstream csv(slurp(dir / "sweep.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 4);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest_sweep.json"));
  EXPECT_EQ(manifest.at("config_hash"), config_hash(c));
  EXPECT_EQ(manifest.at("outputs"), nlohmann::json::array({"sweep.csv"}));
  EXPECT_TRUE(manifest.at("inputs").contains((dir / "docs.emb1").string()));
  // The manifest config reproduces the run.
  const auto again = manifest.at("config").get<ExperimentConfig>();
  EXPECT_EQ(config_hash(again), config_hash(c));
}

TEST(Run, ErrorsMapToExitCodes) {
  TempDir dir;
  auto c = small_config(dir.path());
  std::ostringstream log, err;
  EXPECT_EQ(run("frobnicate", c, log, err), 2);
  EXPECT_NE(err.str().find("unknown command"), std::string::npos);
  c.dataset = dir / "missing.jsonl";
  EXPECT_EQ(run("embed", c, log, err), 2);
  EXPECT_NE(err.str().find("does not exist"), std::string::npos);
  c.dataset.clear();
  EXPECT_EQ(run("train", c, log, err), 3);  // no triplets file yet
}

TEST(Run, PipelineDeterministic) {
  TempDir a_dir, b_dir;
  for (const auto* dir : {&a_dir, &b_dir}) {
    auto c = small_config(dir->path());
    ASSERT_EQ(quiet_run("synth", c), 0);
    c.dataset = dir->path() / "docs.jsonl";
    c.queries = dir->path() / "queries.jsonl";
    for (const char* cmd : {"embed", "construct", "train"}) ASSERT_EQ(quiet_run(cmd, c), 0);
    c.head = dir->path() / "head.json";
    for (const char* cmd : {"program", "query", "eval"}) ASSERT_EQ(quiet_run(cmd, c), 0);
  }
  for (const char* f : {"docs.emb1", "triplets.trp1", "head.json", "train_report.json",
                        "index.cells.f32", "results.json", "eval_report.json"}) {
    EXPECT_EQ(slurp(a_dir / f), slurp(b_dir / f)) << f;
    EXPECT_FALSE(slurp(a_dir / f).empty()) << f;
  }
}

}  // namespace
}  // namespace cimrag
