// Copyright 2026 The FedGen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedgen/fedgen.h"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const char* kTiny =
    "[data]\nsamples = 90, 70\nfeatures = 20\ntimesteps = 4\nfactors = 3\nsparsity = 0.15\n"
    "covariate_shift = 0.3\ntemporal_shift = 0\n"
    "[stage1]\nhidden_widths = 10\nlatent_width = 5\nrounds = 1\nfirst_round_epochs = 5\n"
    "adapt_frozen_epochs = 1\nadapt_joint_epochs = 1\nfinal_adapt_epochs = 1\nbatch_size = 64\n"
    "[stage2]\nz_width = 3\nrnn_hidden = 6\nhead_hidden = 8\nrounds = 2\nbatch_size = 16\n"
    "[eval]\nmax_iterations = 100\nfederated_rounds = 10\n"
    "[run]\nseed = 5\n";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fedgen_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fedgen_config* tiny() {
  fedgen_config* c = nullptr;
  EXPECT_EQ(fedgen_config_parse(kTiny, &c), FEDGEN_OK) << fedgen_last_error();
  return c;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FEDGEN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TEST(CApi, DefaultsAndOverrides) {
  fedgen_config* c = nullptr;
  ASSERT_EQ(fedgen_config_load(nullptr, &c), FEDGEN_OK);
  const char* mode = nullptr;
  ASSERT_EQ(fedgen_config_get_mode(c, &mode), FEDGEN_OK);
  EXPECT_STREQ(mode, "fedehr_gen");
  EXPECT_EQ(fedgen_config_set_mode(c, "centralized"), FEDGEN_OK);
  ASSERT_EQ(fedgen_config_get_mode(c, &mode), FEDGEN_OK);
  EXPECT_STREQ(mode, "centralized");
  EXPECT_EQ(fedgen_config_set_mode(c, "bogus"), FEDGEN_CONFIG_ERROR);
  EXPECT_NE(std::string(fedgen_last_error()).find("bogus"), std::string::npos);
  EXPECT_EQ(fedgen_config_set_seed(c, 42), FEDGEN_OK);
  EXPECT_STREQ(fedgen_last_error(), "");
  uint64_t seed = 0;
  ASSERT_EQ(fedgen_config_get_seed(c, &seed), FEDGEN_OK);
  EXPECT_EQ(seed, 42u);
  fedgen_config_free(c);
}

TEST(CApi, StatusCodes) {
  fedgen_config* c = nullptr;
  EXPECT_EQ(fedgen_config_parse("[data]\nbogus = 1\n", &c), FEDGEN_CONFIG_ERROR);
  EXPECT_EQ(c, nullptr);
  EXPECT_EQ(fedgen_config_load("/nonexistent.ini", &c), FEDGEN_CONFIG_ERROR);
  EXPECT_EQ(fedgen_config_parse("", nullptr), FEDGEN_INVALID_ARGUMENT);
  fedgen_cohorts* h = nullptr;
  EXPECT_EQ(fedgen_cohorts_load("/nonexistent", &h), FEDGEN_DATA_ERROR);
  EXPECT_EQ(fedgen_evaluate_files(nullptr, "/nonexistent_a", "/nonexistent_b", nullptr, 0, "/tmp/x.csv"),
            FEDGEN_DATA_ERROR);
  EXPECT_EQ(fedgen_compare_runs(nullptr, 0, "/tmp/x.csv"), FEDGEN_INVALID_ARGUMENT);
  fedgen_config_free(nullptr);
  fedgen_cohorts_free(nullptr);
  fedgen_run_free(nullptr);
}

TEST(CApi, CohortRoundTripAndRun) {
  const auto dir = scratch("run");
  fedgen_config* c = tiny();
  fedgen_cohorts* h = nullptr;
  ASSERT_EQ(fedgen_cohorts_generate(c, &h), FEDGEN_OK);
  ASSERT_EQ(fedgen_cohorts_save(h, (dir / "data").c_str()), FEDGEN_OK);
  fedgen_cohorts* loaded = nullptr;
  ASSERT_EQ(fedgen_cohorts_load((dir / "data").c_str(), &loaded), FEDGEN_OK);
  size_t k = 0;
  ASSERT_EQ(fedgen_cohorts_count(loaded, &k), FEDGEN_OK);
  EXPECT_EQ(k, 2u);

  fedgen_run* r = nullptr;
  ASSERT_EQ(fedgen_run_experiment(c, loaded, (dir / "out").c_str(), &r), FEDGEN_OK) << fedgen_last_error();
  size_t n = 0;
  ASSERT_EQ(fedgen_run_metric_count(r, &n), FEDGEN_OK);
  EXPECT_EQ(n, 10u);
  const char* metric = nullptr;
  const char* regime = nullptr;
  double value = 0.0;
  ASSERT_EQ(fedgen_run_metric(r, 0, &metric, &regime, &value), FEDGEN_OK);
  EXPECT_STREQ(metric, "r2");
  EXPECT_EQ(fedgen_run_metric(r, n, &metric, &regime, &value), FEDGEN_INVALID_ARGUMENT);
  double auroc = 0.0;
  EXPECT_EQ(fedgen_run_lookup(r, "auroc", "hybrid", &auroc), FEDGEN_OK);
  EXPECT_GE(auroc, 0.0);
  EXPECT_EQ(fedgen_run_lookup(r, "auroc", "nope", &auroc), FEDGEN_DATA_ERROR);
  EXPECT_TRUE(fs::exists(dir / "out" / "metrics.csv"));

  const auto train = dir / "data" / "hospital_0_train.fgt";
  const auto test = dir / "data" / "hospital_0_test.fgt";
  ASSERT_EQ(fedgen_evaluate_files(nullptr, train.c_str(), train.c_str(), test.c_str(), 1,
                                  (dir / "self.csv").c_str()),
            FEDGEN_OK);
  EXPECT_NE(slurp(dir / "self.csv").find("r2,fidelity,1,"), std::string::npos);

  const std::string run_dir = (dir / "out").string();
  const char* dirs[] = {run_dir.c_str()};
  ASSERT_EQ(fedgen_compare_runs(dirs, 1, (dir / "summary.csv").c_str()), FEDGEN_OK);
  EXPECT_NE(slurp(dir / "summary.csv").find("fedehr_gen,auprc,hybrid,"), std::string::npos);

  fedgen_run_free(r);
  fedgen_cohorts_free(loaded);
  fedgen_cohorts_free(h);
  fedgen_config_free(c);
  fs::remove_all(dir);
}

TEST(Cli, GenerateDataIsDeterministicWithManifest) {
  const auto dir = scratch("cli_data");
  std::ofstream(dir / "tiny.ini") << kTiny;
  ASSERT_EQ(cli("generate-data --config " + (dir / "tiny.ini").string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(cli("generate-data --config " + (dir / "tiny.ini").string() + " --out " + (dir / "b").string()), 0);
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 2u * 3u + 1u);
  fs::remove_all(dir);
}

TEST(Cli, DefaultConfigWritesFifteenFiles) {
  const auto dir = scratch("cli_default");
  ASSERT_EQ(cli("generate-data --out " + (dir / "d").string()), 0);
  size_t tensors = 0;
  for (const auto& e : fs::directory_iterator(dir / "d")) tensors += e.path().extension() == ".fgt";
  EXPECT_EQ(tensors, 15u);
  EXPECT_TRUE(fs::exists(dir / "d" / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Cli, RunEvaluateCompareAndExitCodes) {
  const auto dir = scratch("cli_run");
  const auto ini = (dir / "tiny.ini").string();
  std::ofstream(ini) << kTiny;
  ASSERT_EQ(cli("run --config " + ini + " --mode fedavg --seed 3 --out " + (dir / "r1").string()), 0);
  ASSERT_EQ(cli("run --config " + ini + " --mode fedavg --seed 3 --out " + (dir / "r2").string()), 0);
  EXPECT_EQ(slurp(dir / "r1" / "metrics.csv"), slurp(dir / "r2" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "r1" / "config.ini"), kTiny);
  EXPECT_NE(slurp(dir / "r1" / "run.json").find("fedavg"), std::string::npos);

  const auto syn = (dir / "r1" / "synthetic" / "hospital_0.fgt").string();
  ASSERT_EQ(cli("generate-data --config " + ini + " --out " + (dir / "d").string()), 0);
  const auto real = (dir / "d" / "hospital_0_train.fgt").string();
  EXPECT_EQ(cli("evaluate --real " + real + " --synthetic " + syn + " --out " + (dir / "e.csv").string()), 0);
  EXPECT_EQ(slurp(dir / "e.csv").rfind("metric,regime,value,seed\n", 0), 0u);
  EXPECT_EQ(cli("compare " + (dir / "r1").string() + " " + (dir / "r2").string() + " --out " +
                (dir / "c.csv").string()),
            0);
  EXPECT_NE(slurp(dir / "c.csv").find(",2\n"), std::string::npos);

  std::ofstream(dir / "bad.ini") << "[data]\nbogus = 1\n";
  EXPECT_EQ(cli("run --config " + (dir / "bad.ini").string() + " --out " + (dir / "x").string()), 2);
  EXPECT_EQ(cli("run --config " + ini + " --mode nope --out " + (dir / "x").string()), 2);
  EXPECT_EQ(cli("run --out"), 2);
  EXPECT_EQ(cli("evaluate --real /nonexistent --synthetic /nonexistent --out " + (dir / "e2.csv").string()), 3);
  EXPECT_EQ(cli("run --config " + ini + " --data /nonexistent --out " + (dir / "x").string()), 3);
  fs::remove_all(dir);
}

}  // namespace
