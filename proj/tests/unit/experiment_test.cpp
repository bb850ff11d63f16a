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

#include "fedgen/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <cmath>
#include <set>

#include "fedgen/checkpoint.hpp"
#include "fedgen/errors.hpp"

namespace fedgen::exp {
namespace {

namespace fs = std::filesystem;

const std::string kTiny =
    "[data]\nsamples = 90, 70, 50\nfeatures = 20\ntimesteps = 4\nfactors = 3\nsparsity = 0.15\n"
    "covariate_shift = 0.3, 0.3, 1.5\ntemporal_shift = 0, 0.2, 2\n"
    "[stage1]\nhidden_widths = 10\nlatent_width = 5\nrounds = 2\nfirst_round_epochs = 10\n"
    "later_round_epochs = 4\nadapt_frozen_epochs = 2\nadapt_joint_epochs = 1\nfinal_adapt_epochs = 2\n"
    "batch_size = 64\nlearning_rate = 0.005\n"
    "[stage2]\nz_width = 3\nrnn_hidden = 6\nhead_hidden = 8\nrounds = 3\nwarmup_rounds = 2\nbatch_size = 16\n"
    "[eval]\nmax_iterations = 200\nfederated_rounds = 20\nexport_samples = 5\n"
    "[run]\nseed = 7\n";

cfg::ExperimentConfig tiny(fed::Mode mode) {
  auto c = cfg::parse_config(kTiny);
  c.federation.mode = mode;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fedgen_experiment_" + name);
  fs::remove_all(p);
  return p;
}

const std::vector<data::CohortSplit>& cohorts() {
  static const auto c = cfg::make_cohorts(tiny(fed::Mode::kFedehrGen).data);
  return c;
}

TEST(Experiment, MetricRowsCoverEveryMetric) {
  const auto out = run_experiment(tiny(fed::Mode::kFedehrGen), cohorts());
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& r : out.metrics) {
    keys.insert({r.metric, r.regime});
    EXPECT_TRUE(std::isfinite(r.value)) << r.metric << "/" << r.regime;
    EXPECT_EQ(r.seed, 7u);
  }
  const std::set<std::pair<std::string, std::string>> expected{
      {"r2", "fidelity"},   {"mmd", "fidelity"},  {"auroc", "real"},  {"auprc", "real"},    {"auroc", "synth"},
      {"auprc", "synth"},   {"auroc", "hybrid"},  {"auprc", "hybrid"}, {"mir", "privacy"}, {"nnaa", "privacy"}};
  EXPECT_EQ(keys, expected);
  EXPECT_EQ(out.metrics.size(), expected.size());
  ASSERT_EQ(out.synthetic.size(), 3u);
  for (size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(out.synthetic[k].samples(), cohorts()[k].train.samples());
    EXPECT_EQ(out.synthetic[k].timesteps(), 4u);
  }
  EXPECT_THROW(metric(out.metrics, "auroc", "nope"), DataError);
}

TEST(Experiment, SharedStageOneMatchesFullRun) {
  const auto gen = tiny(fed::Mode::kFedehrGen);
  auto no_da = tiny(fed::Mode::kFedehrNoDa);
  // Stage-2 settings of the second run must take effect on reused clients.
  no_da.federation.stage2.learning_rate = 1e-2;
  no_da.federation.stage2.batch_size = 8;
  const auto full = run_experiment(no_da, cohorts());
  auto shared = run_stage1(gen.federation, cohorts());
  const auto reused = finish_run(no_da, std::move(shared), cohorts());
  ASSERT_EQ(full.metrics.size(), reused.metrics.size());
  for (size_t i = 0; i < full.metrics.size(); ++i) EXPECT_EQ(full.metrics[i].value, reused.metrics[i].value);
  for (size_t k = 0; k < full.synthetic.size(); ++k) EXPECT_TRUE(full.synthetic[k] == reused.synthetic[k]);
}

TEST(Experiment, Deterministic) {
  const auto a = run_experiment(tiny(fed::Mode::kFedavg), cohorts());
  const auto b = run_experiment(tiny(fed::Mode::kFedavg), cohorts());
  for (size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(a.metrics[i].value, b.metrics[i].value);
}

TEST(Experiment, CentralizedUsesOnePooledClient) {
  const auto out = run_experiment(tiny(fed::Mode::kCentralized), cohorts());
  EXPECT_EQ(out.federation.clients.size(), 1u);
  EXPECT_EQ(out.synthetic.size(), 3u);
}

TEST(Experiment, RunDirectoryLayout) {
  const auto dir = scratch("layout");
  const auto config = tiny(fed::Mode::kFedehrGen);
  const auto out = run_experiment(config, cohorts(), dir);
  for (const char* f : {"config.ini", "run.json", "metrics.csv", "rounds_stage1.csv", "rounds_stage2.csv",
                        "samples.csv", "stage1/round_0.ckpt", "stage1/round_1.ckpt", "stage1/final.ckpt",
                        "stage2/round_0.ckpt", "stage2/round_2.ckpt", "synthetic/hospital_2.fgt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::ifstream is(dir / "config.ini");
  const std::string echoed((std::istreambuf_iterator<char>(is)), {});
  EXPECT_EQ(echoed, config.source);

  const auto rows = read_metrics_csv(dir / "metrics.csv");
  ASSERT_EQ(rows.size(), out.metrics.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].metric, out.metrics[i].metric);
    EXPECT_EQ(rows[i].value, out.metrics[i].value);
  }
  const auto last = ckpt::read_checkpoint(dir / "stage2" / "round_2.ckpt");
  const auto global = ckpt::tcvae_from(last);
  EXPECT_EQ(global.backbone.cells[0].w_input, out.federation.stage2.global.backbone.cells[0].w_input);
  EXPECT_TRUE(data::read_tensor(dir / "synthetic" / "hospital_2.fgt") == out.synthetic[2]);

  std::ifstream log(dir / "rounds_stage2.csv");
  std::string header;
  std::getline(log, header);
  EXPECT_NE(header.find("alpha_tilde_2"), std::string::npos);
  size_t lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  EXPECT_EQ(lines, 3u);
  fs::remove_all(dir);
}

TEST(Experiment, MetricsCsvRejectsMalformedInput) {
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  std::ofstream(dir / "a.csv") << "wrong,header\n";
  EXPECT_THROW(read_metrics_csv(dir / "a.csv"), FormatError);
  std::ofstream(dir / "b.csv") << "metric,regime,value,seed\nr2,fidelity,abc,1\n";
  EXPECT_THROW(read_metrics_csv(dir / "b.csv"), FormatError);
  EXPECT_THROW(read_metrics_csv(dir / "missing.csv"), DataError);
  fs::remove_all(dir);
}

TEST(Experiment, CohortDirectoryRoundTrip) {
  const auto dir = scratch("cohorts");
  write_cohorts(dir, cohorts());
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.path().extension() == ".fgt";
  EXPECT_EQ(files, 9u);
  const auto back = read_cohorts(dir);
  ASSERT_EQ(back.size(), 3u);
  for (size_t k = 0; k < 3; ++k) {
    EXPECT_TRUE(back[k].train == cohorts()[k].train);
    EXPECT_TRUE(back[k].test == cohorts()[k].test);
  }
  fs::remove(dir / "hospital_1_val.fgt");
  EXPECT_ANY_THROW(read_cohorts(dir));
  fs::remove_all(dir);
  EXPECT_THROW(read_cohorts(dir), DataError);
}

TEST(Experiment, EvaluatePairSelfComparison) {
  const auto& real = cohorts()[0].train;
  const cfg::EvalConfig config;
  const auto rows = evaluate_pair(real, real, config, 1);
  EXPECT_DOUBLE_EQ(metric(rows, "r2", "fidelity"), 1.0);
  EXPECT_LT(metric(rows, "mmd", "fidelity"), 1e-12);
  EXPECT_DOUBLE_EQ(metric(rows, "nnaa", "privacy"), 1.0);
  EXPECT_THROW(metric(rows, "mir", "privacy"), DataError);
  const auto with_holdout = evaluate_pair(real, real, config, 1, &cohorts()[0].test);
  EXPECT_GT(metric(with_holdout, "mir", "privacy"), 0.5);
}

TEST(Experiment, SummaryGroupsRunsByMode) {
  const auto root = scratch("summary");
  std::vector<fs::path> dirs;
  const std::vector<std::pair<std::string, std::vector<double>>> runs{
      {"fedavg", {1.0, 2.0}}, {"fedavg", {3.0, 4.0}}, {"centralized", {5.0, 6.0}}};
  for (size_t i = 0; i < runs.size(); ++i) {
    const auto dir = root / std::to_string(i);
    fs::create_directories(dir);
    std::ofstream(dir / "run.json") << "{\"mode\": \"" << runs[i].first << "\", \"seed\": " << i << "}";
    const std::vector<MetricRow> rows{{"r2", "fidelity", runs[i].second[0], i}, {"mmd", "fidelity", runs[i].second[1], i}};
    write_metrics_csv(dir / "metrics.csv", rows);
    dirs.push_back(dir);
  }
  const auto summary = summarize_runs(dirs);
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[0].mode, "fedavg");
  EXPECT_EQ(summary[0].metric, "r2");
  EXPECT_DOUBLE_EQ(summary[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(summary[0].std, std::sqrt(2.0));
  EXPECT_EQ(summary[0].runs, 2u);
  EXPECT_EQ(summary[3].mode, "centralized");
  EXPECT_DOUBLE_EQ(summary[3].mean, 6.0);
  EXPECT_DOUBLE_EQ(summary[3].std, 0.0);
  write_summary_csv(root / "summary.csv", summary);
  std::ifstream is(root / "summary.csv");
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "mode,metric,regime,mean,std,runs");
  EXPECT_THROW(summarize_runs(std::vector<fs::path>{root / "missing"}), DataError);
  fs::remove_all(root);
}

}  // namespace
}  // namespace fedgen::exp
