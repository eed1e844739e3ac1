/*
 * Copyright 2026 The monoelastic Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MONOELASTIC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("monoelastic_cli_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string p(const std::string& rel) const { return (root_ / rel).string(); }

  void small_pipeline(const std::string& tag, const std::string& synth_extra = "") {
    ASSERT_EQ(run_cli("synth --out " + p(tag + "/w") + " --items 12 --months 14 --seed 5 " +
                      synth_extra),
              0);
    ASSERT_EQ(run_cli("build --transactions " + p(tag + "/w/transactions.csv") + " --out " +
                      p(tag + "/d")),
              0);
  }

  fs::path root_;
};

TEST_F(CliTest, MissingOutIsUsageError) {
  EXPECT_EQ(run_cli("synth --items 5"), 2);
  EXPECT_EQ(run_cli("build --transactions nowhere.csv"), 2);
}

TEST_F(CliTest, NoSubcommandIsUsageError) { EXPECT_EQ(run_cli(""), 2); }

TEST_F(CliTest, UnknownFlagIsUsageError) { EXPECT_EQ(run_cli("synth --bogus 1"), 2); }

TEST_F(CliTest, SameSeedGivesIdenticalFiles) {
  ASSERT_EQ(run_cli("synth --out " + p("a") + " --items 8 --months 13 --seed 9"), 0);
  ASSERT_EQ(run_cli("synth --out " + p("b") + " --items 8 --months 13 --seed 9"), 0);
  EXPECT_EQ(slurp(p("a/transactions.csv")), slurp(p("b/transactions.csv")));
  EXPECT_EQ(slurp(p("a/truth.csv")), slurp(p("b/truth.csv")));
  ASSERT_EQ(run_cli("synth --out " + p("c") + " --items 8 --months 13 --seed 10"), 0);
  EXPECT_NE(slurp(p("a/transactions.csv")), slurp(p("c/transactions.csv")));
}

TEST_F(CliTest, FullPipeline) {
  small_pipeline("x");
  ASSERT_EQ(run_cli("train --dataset " + p("x/d") + " --out " + p("x/m") + " --epochs 2"), 0);
  for (const char* f : {"model.mdnm", "train_report.json", "loss.csv", "resolved_config.json"}) {
    EXPECT_TRUE(fs::exists(p(std::string("x/m/") + f))) << f;
  }
  const auto report = nlohmann::json::parse(slurp(p("x/m/train_report.json")));
  EXPECT_FALSE(report.contains("wall_seconds"));

  ASSERT_EQ(run_cli("evaluate --model " + p("x/m/model.mdnm") + " --dataset " + p("x/d") +
                    " --out " + p("x/e") + " --transactions " + p("x/w/transactions.csv") +
                    " --truth " + p("x/w/truth.csv")),
            0);
  const auto metrics = nlohmann::json::parse(slurp(p("x/e/metrics.json")));
  EXPECT_TRUE(metrics["wmape_out_of_time"].is_number());
  EXPECT_TRUE(metrics["mae_model"]["mae"].is_number());
  EXPECT_TRUE(metrics["mae_loglog"]["mae"].is_number());

  ASSERT_EQ(run_cli("elasticity --model " + p("x/m/model.mdnm") + " --transactions " +
                    p("x/w/transactions.csv") + " --out " + p("x/el")),
            0);
  std::istringstream csv(slurp(p("x/el/elasticity.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "item_id,p,dp,y_base,y_pert,elasticity,status");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 12);
}

TEST_F(CliTest, TrainingIsReproducible) {
  small_pipeline("x");
  const std::string args = " --dataset " + p("x/d") + " --epochs 2 --seed 4";
  ASSERT_EQ(run_cli("train --out " + p("m1") + args), 0);
  ASSERT_EQ(run_cli("train --out " + p("m2") + args), 0);
  EXPECT_EQ(slurp(p("m1/model.mdnm")), slurp(p("m2/model.mdnm")));
  EXPECT_EQ(slurp(p("m1/train_report.json")), slurp(p("m2/train_report.json")));
}

TEST_F(CliTest, ResolvedConfigReplaysByteIdentically) {
  small_pipeline("x");
  ASSERT_EQ(run_cli("train --dataset " + p("x/d") + " --out " + p("m1") +
                    " --epochs 2 --seed 6 --trunk-widths 16,8 --activation selu"),
            0);
  // Explicit --out overrides the recorded one.
  ASSERT_EQ(run_cli("train --config " + p("m1/resolved_config.json") + " --out " + p("m2")), 0);
  EXPECT_EQ(slurp(p("m1/model.mdnm")), slurp(p("m2/model.mdnm")));
  EXPECT_EQ(slurp(p("m1/loss.csv")), slurp(p("m2/loss.csv")));
  auto c1 = nlohmann::json::parse(slurp(p("m1/resolved_config.json")));
  auto c2 = nlohmann::json::parse(slurp(p("m2/resolved_config.json")));
  c1.erase("out");
  c2.erase("out");
  EXPECT_EQ(c1, c2);
}

TEST_F(CliTest, UnknownConfigKeyIsUsageError) {
  std::ofstream(p("cfg.json")) << R"({"items": 5, "itemz": 6})";
  EXPECT_EQ(run_cli("synth --config " + p("cfg.json") + " --out " + p("w")), 2);
  std::ofstream(p("bad.json")) << "{not json";
  EXPECT_EQ(run_cli("synth --config " + p("bad.json") + " --out " + p("w")), 2);
  std::ofstream(p("wrong.json")) << R"({"command": "train", "epochs": 1})";
  EXPECT_EQ(run_cli("synth --config " + p("wrong.json") + " --out " + p("w")), 2);
}

TEST_F(CliTest, ConfigFillsUnsetFlags) {
  std::ofstream(p("cfg.json")) << R"({"items": 4, "months": 13, "seed": 2})";
  ASSERT_EQ(run_cli("synth --config " + p("cfg.json") + " --out " + p("w") + " --items 3"), 0);
  const auto cfg = nlohmann::json::parse(slurp(p("w/resolved_config.json")));
  EXPECT_EQ(cfg["items"], 3);
  EXPECT_EQ(cfg["months"], 13);
  EXPECT_EQ(cfg["seed"], 2);
  EXPECT_EQ(cfg["command"], "synth");
}

TEST_F(CliTest, SchemaMismatchExitsThree) {
  small_pipeline("a");
  small_pipeline("b", "--no-season");
  ASSERT_EQ(run_cli("train --dataset " + p("a/d") + " --out " + p("m") + " --epochs 1"), 0);
  EXPECT_EQ(run_cli("evaluate --model " + p("m/model.mdnm") + " --dataset " + p("b/d") +
                    " --out " + p("e")),
            3);
  EXPECT_EQ(run_cli("elasticity --model " + p("m/model.mdnm") + " --transactions " +
                    p("b/w/transactions.csv") + " --out " + p("el")),
            3);
}

TEST_F(CliTest, CorruptModelExitsThree) {
  std::ofstream(p("junk.mdnm")) << "garbage";
  small_pipeline("a");
  EXPECT_EQ(run_cli("evaluate --model " + p("junk.mdnm") + " --dataset " + p("a/d") +
                    " --out " + p("e")),
            3);
}

TEST_F(CliTest, MalformedTransactionsIsUsageError) {
  std::ofstream(p("t.csv")) << "not,a,header\n1,2,3\n";
  EXPECT_EQ(run_cli("build --transactions " + p("t.csv") + " --out " + p("d")), 2);
}

TEST_F(CliTest, GradcheckPasses) { EXPECT_EQ(run_cli("gradcheck --probes 2"), 0); }

}  // namespace
