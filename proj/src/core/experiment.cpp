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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "fedgen/checkpoint.hpp"
#include "fedgen/errors.hpp"
#include "fedgen/random.hpp"

namespace fedgen::exp {

namespace {

constexpr uint64_t kGeneration = 6;
constexpr uint64_t kEvaluation = 7;

using data::BinarySequenceTensor;

BinarySequenceTensor concat(std::span<const BinarySequenceTensor> parts) { return BinarySequenceTensor::concat(parts); }

std::vector<BinarySequenceTensor> train_splits(std::span<const data::CohortSplit> cohorts) {
  std::vector<BinarySequenceTensor> out;
  for (const auto& c : cohorts) out.push_back(c.train);
  return out;
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  return os;
}

std::vector<bae::Decoder> decoders_of(std::span<const fed::Client> clients) {
  std::vector<bae::Decoder> out;
  for (const auto& c : clients) out.push_back(c.model().decoder);
  return out;
}

// Rethrows a failure inside `body` with the same type and a stage prefix.
template <typename F>
auto in_stage(const char* stage, F&& body) -> decltype(body()) {
  const auto tag = [&](const std::exception& e) { return std::string(stage) + ": " + e.what(); };
  try {
    return body();
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const DataError& e) {
    throw DataError(tag(e));
  } catch (const FormatError& e) {
    throw FormatError(tag(e));
  } catch (const DimensionError& e) {
    throw DimensionError(tag(e));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(tag(e));
  } catch (const std::exception& e) {
    throw std::runtime_error(tag(e));
  }
}

}  // namespace

std::vector<BinarySequenceTensor> generate_cohorts(const fed::FederationResult& run,
                                                   std::span<const data::CohortSplit> cohorts, uint64_t seed,
                                                   const fed::GenerationOptions& options) {
  std::vector<BinarySequenceTensor> out;
  for (size_t k = 0; k < cohorts.size(); ++k) {
    const auto& model = run.stage1.models.size() == 1 ? run.stage1.models[0] : run.stage1.models.at(k);
    const auto& train = cohorts[k].train;
    out.push_back(fed::generate_synthetic_cohort(run.stage2.global, model.decoder, train.samples(),
                                                 train.positive_rate(), train.timesteps(),
                                                 derive_seed(seed, {kGeneration, k}), options));
  }
  return out;
}

std::vector<MetricRow> evaluate_pair(const BinarySequenceTensor& real, const BinarySequenceTensor& syn,
                                     const cfg::EvalConfig& config, uint64_t seed,
                                     const BinarySequenceTensor* holdout) {
  const auto fid = eval::fidelity(real, syn, derive_seed(seed, {kEvaluation, 1}), config.mmd_cap);
  std::vector<MetricRow> rows{{"r2", "fidelity", fid.r2, seed}, {"mmd", "fidelity", fid.mmd, seed}};
  if (holdout != nullptr) {
    rows.push_back({"mir", "privacy", eval::mir(real, *holdout, syn, derive_seed(seed, {kEvaluation, 3})), seed});
  }
  rows.push_back(
      {"nnaa", "privacy", eval::nnaa(real, syn, derive_seed(seed, {kEvaluation, 2}), config.nnaa_cap), seed});
  return rows;
}

std::vector<MetricRow> evaluate(fed::Mode mode, std::span<const data::CohortSplit> cohorts,
                                std::span<const BinarySequenceTensor> synthetic, const cfg::EvalConfig& config,
                                uint64_t seed) {
  if (synthetic.size() != cohorts.size()) throw DataError("evaluate: one synthetic cohort per hospital required");
  const auto real_train = concat(train_splits(cohorts));
  const auto syn = concat(synthetic);
  std::vector<BinarySequenceTensor> tests;
  for (const auto& c : cohorts) tests.push_back(c.test);
  const auto real_test = concat(tests);

  std::vector<MetricRow> rows;
  const auto fid = eval::fidelity(real_train, syn, derive_seed(seed, {kEvaluation, 1}), config.mmd_cap);
  rows.push_back({"r2", "fidelity", fid.r2, seed});
  rows.push_back({"mmd", "fidelity", fid.mmd, seed});

  const auto test = eval::labeled_features(real_test);
  auto train_on = [&](const std::vector<eval::LabeledFeatures>& parts) {
    if (mode == fed::Mode::kCentralized) {
      eval::LabeledFeatures pooled;
      pooled.x.resize(0, static_cast<nn::Index>(real_train.features()));
      for (const auto& p : parts) {
        nn::Matrix x(pooled.x.rows() + p.x.rows(), p.x.cols());
        x << pooled.x, p.x;
        pooled.x = std::move(x);
        pooled.y.insert(pooled.y.end(), p.y.begin(), p.y.end());
      }
      return eval::train_logistic(pooled, config.logistic);
    }
    return eval::train_logistic_federated(parts, config.logistic);
  };
  std::vector<eval::LabeledFeatures> real_parts, syn_parts, hybrid_parts;
  for (size_t k = 0; k < cohorts.size(); ++k) {
    real_parts.push_back(eval::labeled_features(cohorts[k].train));
    syn_parts.push_back(eval::labeled_features(synthetic[k]));
    const std::vector<BinarySequenceTensor> both{cohorts[k].train, synthetic[k]};
    hybrid_parts.push_back(eval::labeled_features(concat(both)));
  }
  for (const auto& [regime, parts] : {std::pair<const char*, const std::vector<eval::LabeledFeatures>&>{"real", real_parts},
                                      {"synth", syn_parts},
                                      {"hybrid", hybrid_parts}}) {
    const auto scores = eval::score_downstream(train_on(parts), test);
    rows.push_back({"auroc", regime, scores.auroc, seed});
    rows.push_back({"auprc", regime, scores.auprc, seed});
  }

  rows.push_back({"mir", "privacy", eval::mir(real_train, real_test, syn, derive_seed(seed, {kEvaluation, 3})), seed});
  rows.push_back({"nnaa", "privacy", eval::nnaa(real_train, syn, derive_seed(seed, {kEvaluation, 2}), config.nnaa_cap), seed});
  return rows;
}

double metric(std::span<const MetricRow> rows, const std::string& name, const std::string& regime) {
  for (const auto& r : rows) {
    if (r.metric == name && r.regime == regime) return r.value;
  }
  throw DataError("metric " + name + "/" + regime + " not found");
}

Stage1Output run_stage1(const fed::FederationConfig& config, std::span<const data::CohortSplit> cohorts,
                        const std::filesystem::path& out) {
  std::vector<data::CohortSplit> splits(cohorts.begin(), cohorts.end());
  if (config.mode == fed::Mode::kCentralized) splits = {fed::pool_splits(cohorts)};
  Stage1Output s;
  s.clients = fed::make_clients(config, std::move(splits));
  fed::RoundObserver observer;
  if (!out.empty()) {
    std::filesystem::create_directories(out / "stage1");
    observer = [&](const fed::RoundRecord& rec, const fed::Server& server, std::span<const fed::Client> clients) {
      std::vector<bae::Decoder> decoders;
      for (size_t k = 0; k < clients.size(); ++k) {
        decoders.push_back(bae::permute_decoder_inputs(clients[k].model().decoder, server.latent_permutation(k)));
      }
      ckpt::write_checkpoint(out / "stage1" / ("round_" + std::to_string(rec.round) + ".ckpt"),
                             ckpt::stage1_checkpoint(rec.round, server.global_encoder(), decoders));
    };
  }
  s.result = in_stage("stage 1", [&] { return fed::run_fedbae(config, s.clients, observer); });
  if (!out.empty()) {
    write_round_log(out / "rounds_stage1.csv", s.result.records);
    ckpt::write_checkpoint(out / "stage1" / "final.ckpt",
                           ckpt::stage1_checkpoint(config.stage1.rounds, s.result.global_encoder, decoders_of(s.clients)));
  }
  return s;
}

RunOutput finish_run(const cfg::ExperimentConfig& config, Stage1Output stage1,
                     std::span<const data::CohortSplit> cohorts, const std::filesystem::path& out) {
  const auto& fc = config.federation;
  fed::RoundObserver observer;
  if (!out.empty()) {
    std::filesystem::create_directories(out / "stage2");
    observer = [&](const fed::RoundRecord& rec, const fed::Server& server, std::span<const fed::Client>) {
      ckpt::write_checkpoint(out / "stage2" / ("round_" + std::to_string(rec.round) + ".ckpt"),
                             ckpt::stage2_checkpoint(rec.round, server.global_tcvae()));
    };
  }
  RunOutput r;
  r.federation.clients = std::move(stage1.clients);
  r.federation.stage1 = std::move(stage1.result);
  r.federation.stage2 = in_stage("stage 2", [&] { return fed::run_fedtcvae(fc, r.federation.clients, observer); });
  r.synthetic =
      in_stage("generation", [&] { return generate_cohorts(r.federation, cohorts, fc.seed, config.eval.generation); });
  r.metrics = in_stage("evaluation", [&] { return evaluate(fc.mode, cohorts, r.synthetic, config.eval, fc.seed); });
  if (!out.empty()) {
    write_round_log(out / "rounds_stage2.csv", r.federation.stage2.records);
    write_metrics_csv(out / "metrics.csv", r.metrics);
    std::filesystem::create_directories(out / "synthetic");
    for (size_t k = 0; k < r.synthetic.size(); ++k) {
      data::write_tensor(out / "synthetic" / ("hospital_" + std::to_string(k) + ".fgt"), r.synthetic[k]);
    }
    if (config.eval.export_samples > 0) {
      eval::export_flat_csv(out / "samples.csv", concat(train_splits(cohorts)), concat(r.synthetic),
                            config.eval.export_samples, fc.seed);
    }
  }
  return r;
}

RunOutput run_experiment(const cfg::ExperimentConfig& config, std::span<const data::CohortSplit> cohorts,
                         const std::filesystem::path& out) {
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    open_text(out / "config.ini") << config.source;
    nlohmann::json run{{"mode", fed::to_string(config.federation.mode)},
                       {"seed", config.federation.seed},
                       {"data_seed", config.data.seed},
                       {"hospitals", cohorts.size()}};
    open_text(out / "run.json") << run.dump(2) << '\n';
  }
  return finish_run(config, run_stage1(config.federation, cohorts, out), cohorts, out);
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
  auto os = open_text(path);
  os << "metric,regime,value,seed\n";
  for (const auto& r : rows) os << r.metric << ',' << r.regime << ',' << r.value << ',' << r.seed << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "metric,regime,value,seed") {
    throw FormatError(path.string() + ": missing metrics header");
  }
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    MetricRow r;
    std::string value, seed;
    if (!std::getline(ss, r.metric, ',') || !std::getline(ss, r.regime, ',') || !std::getline(ss, value, ',') ||
        !std::getline(ss, seed)) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
    try {
      r.value = std::stod(value);
      r.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_round_log(const std::filesystem::path& path, std::span<const fed::RoundRecord> records) {
  auto os = open_text(path);
  const size_t k = records.empty() ? 0 : records.front().client_train_loss.size();
  os << "stage,round,validation_loss,wall_seconds,kl_weight";
  for (size_t i = 0; i < k; ++i) os << ",train_loss_" << i;
  if (!records.empty() && !records.front().alpha.empty()) {
    for (size_t i = 0; i < k; ++i) os << ",dbar_" << i;
    for (size_t i = 0; i < k; ++i) os << ",alpha_" << i;
    for (size_t i = 0; i < k; ++i) os << ",alpha_tilde_" << i;
  }
  os << '\n';
  for (const auto& r : records) {
    os << r.stage << ',' << r.round << ',' << r.validation_loss << ',' << r.wall_seconds << ',' << r.kl_weight;
    for (double v : r.client_train_loss) os << ',' << v;
    for (const auto* v : {&r.mean_divergence, &r.alpha, &r.alpha_tilde}) {
      for (double x : *v) os << ',' << x;
    }
    os << '\n';
  }
  if (!os) throw DataError("failed writing " + path.string());
}

void write_cohorts(const std::filesystem::path& dir, std::span<const data::CohortSplit> cohorts) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest{{"hospitals", nlohmann::json::array()}};
  for (size_t k = 0; k < cohorts.size(); ++k) {
    nlohmann::json entry{{"hospital", k}};
    for (const auto& [name, t] : {std::pair<const char*, const BinarySequenceTensor&>{"train", cohorts[k].train},
                                  {"val", cohorts[k].val},
                                  {"test", cohorts[k].test}}) {
      const std::string file = "hospital_" + std::to_string(k) + "_" + name + ".fgt";
      data::write_tensor(dir / file, t);
      entry[name] = {{"file", file}, {"N", t.samples()}, {"T", t.timesteps()}, {"D", t.features()},
                     {"positive_rate", t.positive_rate()}};
    }
    manifest["hospitals"].push_back(entry);
  }
  open_text(dir / "manifest.json") << manifest.dump(2) << '\n';
}

std::vector<data::CohortSplit> read_cohorts(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw DataError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  std::vector<data::CohortSplit> out;
  try {
    for (const auto& h : manifest.at("hospitals")) {
      data::CohortSplit s;
      s.train = data::read_tensor(dir / h.at("train").at("file").get<std::string>());
      s.val = data::read_tensor(dir / h.at("val").at("file").get<std::string>());
      s.test = data::read_tensor(dir / h.at("test").at("file").get<std::string>());
      if (s.train.samples() != h.at("train").at("N").get<size_t>()) {
        throw FormatError(dir.string() + ": manifest N disagrees with the train file header");
      }
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (out.empty()) throw DataError(dir.string() + ": manifest lists no hospitals");
  return out;
}

std::vector<SummaryRow> summarize_runs(std::span<const std::filesystem::path> run_dirs) {
  if (run_dirs.empty()) throw InvalidArgument("summarize_runs: no run directories");
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& dir : run_dirs) {
    std::ifstream is(dir / "run.json");
    if (!is) throw DataError("no run.json in " + dir.string());
    std::string mode;
    try {
      mode = nlohmann::json::parse(is).at("mode").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / "run.json").string() + ": " + e.what());
    }
    for (const auto& m : read_metrics_csv(dir / "metrics.csv")) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& r) {
        return r.mode == mode && r.metric == m.metric && r.regime == m.regime;
      });
      if (it == rows.end()) {
        rows.push_back({mode, m.metric, m.regime, 0.0, 0.0, 0});
        values.emplace_back();
        it = rows.end() - 1;
      }
      values[static_cast<size_t>(it - rows.begin())].push_back(m.value);
    }
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].mean = mean;
    rows[i].std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    rows[i].runs = v.size();
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows) {
  auto os = open_text(path);
  os << "mode,metric,regime,mean,std,runs\n";
  for (const auto& r : rows) {
    os << r.mode << ',' << r.metric << ',' << r.regime << ',' << r.mean << ',' << r.std << ',' << r.runs << '\n';
  }
  if (!os) throw DataError("failed writing " + path.string());
}

}  // namespace fedgen::exp
