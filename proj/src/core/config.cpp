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

#include "fedgen/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedgen/errors.hpp"
#include "fedgen/random.hpp"

namespace fedgen::cfg {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Field {
  std::string where;
  std::string value;

  [[noreturn]] void fail(const std::string& expected) const {
    throw ConfigError(where + ": expected " + expected + ", got '" + value + "'");
  }
};

double to_double(const Field& f, const std::string& token) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) f.fail("a number");
  return v;
}

uint64_t to_unsigned(const Field& f, const std::string& token) {
  uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) f.fail("a non-negative integer");
  return v;
}

bool to_bool(const Field& f) {
  if (f.value == "true" || f.value == "1") return true;
  if (f.value == "false" || f.value == "0") return false;
  f.fail("true or false");
}

using Setter = std::function<void(ExperimentConfig&, const Field&)>;

template <typename T>
Setter unsigned_field(T member) {
  return [member](ExperimentConfig& c, const Field& f) { std::invoke(member, c) = to_unsigned(f, f.value); };
}

template <typename T>
Setter double_field(T member) {
  return [member](ExperimentConfig& c, const Field& f) { std::invoke(member, c) = to_double(f, f.value); };
}

template <typename T>
Setter bool_field(T member) {
  return [member](ExperimentConfig& c, const Field& f) { std::invoke(member, c) = to_bool(f); };
}

template <typename T>
Setter double_list(T member) {
  return [member](ExperimentConfig& c, const Field& f) {
    std::vector<double> out;
    for (const auto& tok : split_list(f.value)) out.push_back(to_double(f, tok));
    if (out.empty()) f.fail("a comma-separated list of numbers");
    std::invoke(member, c) = std::move(out);
  };
}

template <typename T>
Setter size_list(T member) {
  return [member](ExperimentConfig& c, const Field& f) {
    std::vector<size_t> out;
    for (const auto& tok : split_list(f.value)) out.push_back(to_unsigned(f, tok));
    if (out.empty()) f.fail("a comma-separated list of integers");
    std::invoke(member, c) = std::move(out);
  };
}

template <typename T, typename Parse>
Setter parsed_field(T member, Parse parse) {
  return [member, parse](ExperimentConfig& c, const Field& f) {
    try {
      std::invoke(member, c) = parse(f.value);
    } catch (const Error& e) {
      throw ConfigError(f.where + ": " + e.what());
    }
  };
}

// Lambdas project into nested members.
#define FIELD(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s = {
      {"data",
       {
           {"samples", size_list(FIELD(data.samples))},
           {"timesteps", unsigned_field(FIELD(data.timesteps))},
           {"features", unsigned_field(FIELD(data.features))},
           {"factors", unsigned_field(FIELD(data.factors))},
           {"sparsity", double_list(FIELD(data.sparsity))},
           {"covariate_shift", double_list(FIELD(data.covariate_shift))},
           {"temporal_shift", double_list(FIELD(data.temporal_shift))},
           {"prevalence", double_list(FIELD(data.prevalence))},
           {"split",
            [](ExperimentConfig& c, const Field& f) {
              const auto parts = split_list(f.value);
              if (parts.size() != 3) f.fail("three comma-separated ratios");
              for (size_t i = 0; i < 3; ++i) c.data.split[i] = to_double(f, parts[i]);
            }},
           {"seed", unsigned_field(FIELD(data.seed))},
       }},
      {"stage1",
       {
           {"hidden_widths", size_list(FIELD(federation.stage1.shape.hidden_widths))},
           {"latent_width", unsigned_field(FIELD(federation.stage1.shape.latent_width))},
           {"rounds", unsigned_field(FIELD(federation.stage1.rounds))},
           {"first_round_epochs", unsigned_field(FIELD(federation.stage1.first_round_epochs))},
           {"later_round_epochs", unsigned_field(FIELD(federation.stage1.later_round_epochs))},
           {"tolerance", double_field(FIELD(federation.stage1.tolerance))},
           {"patience", unsigned_field(FIELD(federation.stage1.patience))},
           {"batch_size", unsigned_field(FIELD(federation.stage1.batch_size))},
           {"learning_rate", double_field(FIELD(federation.stage1.learning_rate))},
           {"adapt_frozen_epochs", unsigned_field(FIELD(federation.stage1.adapt_frozen_epochs))},
           {"adapt_joint_epochs", unsigned_field(FIELD(federation.stage1.adapt_joint_epochs))},
           {"final_adapt_epochs", unsigned_field(FIELD(federation.stage1.final_adapt_epochs))},
           {"cost", parsed_field(FIELD(federation.stage1.cost), matchagg::cost_kind_from_string)},
           {"reference", parsed_field(FIELD(federation.stage1.reference), matchagg::reference_mode_from_string)},
           {"identity_permutations", bool_field(FIELD(federation.stage1.identity_permutations))},
       }},
      {"stage2",
       {
           {"z_width", unsigned_field(FIELD(federation.stage2.z_width))},
           {"rnn_hidden", unsigned_field(FIELD(federation.stage2.rnn_hidden))},
           {"head_hidden", unsigned_field(FIELD(federation.stage2.head_hidden))},
           {"rounds", unsigned_field(FIELD(federation.stage2.rounds))},
           {"local_epochs", unsigned_field(FIELD(federation.stage2.local_epochs))},
           {"batch_size", unsigned_field(FIELD(federation.stage2.batch_size))},
           {"learning_rate", double_field(FIELD(federation.stage2.learning_rate))},
           {"lambda", double_field(FIELD(federation.stage2.lambda))},
           {"warmup_rounds", unsigned_field(FIELD(federation.stage2.warmup_rounds))},
           {"tau", double_field(FIELD(federation.stage2.tau))},
           {"summary_params", parsed_field(FIELD(federation.stage2.summary_params), fed::summary_params_from_string)},
       }},
      {"eval",
       {
           {"mmd_cap", unsigned_field(FIELD(eval.mmd_cap))},
           {"nnaa_cap", unsigned_field(FIELD(eval.nnaa_cap))},
           {"l2", double_field(FIELD(eval.logistic.l2))},
           {"max_iterations", unsigned_field(FIELD(eval.logistic.max_iterations))},
           {"gradient_tolerance", double_field(FIELD(eval.logistic.gradient_tolerance))},
           {"federated_rounds", unsigned_field(FIELD(eval.logistic.federated_rounds))},
           {"local_steps", unsigned_field(FIELD(eval.logistic.local_steps))},
           {"bit_emission", parsed_field(FIELD(eval.generation.bits), fed::emission_from_string)},
           {"latent_emission", parsed_field(FIELD(eval.generation.latents), fed::latent_emission_from_string)},
           {"export_samples", unsigned_field(FIELD(eval.export_samples))},
       }},
      {"run",
       {
           {"mode", parsed_field(FIELD(federation.mode), fed::mode_from_string)},
           {"seed", unsigned_field(FIELD(federation.seed))},
           {"shared_client_seeds", bool_field(FIELD(federation.shared_client_seeds))},
       }},
  };
  return s;
}

#undef FIELD

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void validate(const ExperimentConfig& c) {
  const auto& d = c.data;
  require(!d.samples.empty(), "data.samples: at least one hospital required");
  require(d.timesteps > 0 && d.features > 0 && d.factors > 0,
          "data: timesteps, features and factors must be positive");
  double total = 0.0;
  for (double r : d.split) {
    require(r >= 0.0, "data.split: ratios must be non-negative");
    total += r;
  }
  require(std::abs(total - 1.0) < 1e-9, "data.split: ratios must sum to 1");
  d.hospital_specs();
  c.federation.validate();
  require(c.eval.mmd_cap >= 2 && c.eval.nnaa_cap >= 1, "eval: subsample caps too small");
  require(c.eval.logistic.l2 >= 0.0, "eval.l2 must be non-negative");
}

}  // namespace

std::vector<data::HospitalCohortSpec> DataConfig::hospital_specs() const {
  const size_t k = hospitals();
  auto pick = [&](const std::vector<double>& v, const char* name, size_t i) {
    if (v.size() != 1 && v.size() != k) {
      throw ConfigError(std::string("data.") + name + ": expected 1 or " + std::to_string(k) + " values, got " +
                        std::to_string(v.size()));
    }
    return v.size() == 1 ? v[0] : v[i];
  };
  std::vector<data::HospitalCohortSpec> out;
  for (size_t i = 0; i < k; ++i) {
    data::HospitalCohortSpec s;
    s.hospital_id = static_cast<int>(i);
    s.n_samples = samples[i];
    s.sparsity = pick(sparsity, "sparsity", i);
    s.label_prevalence = pick(prevalence, "prevalence", i);
    s.temporal_shift = pick(temporal_shift, "temporal_shift", i);
    const double shift = pick(covariate_shift, "covariate_shift", i);
    s.covariate_offset = data::make_covariate_offset(features, shift, derive_seed(seed, {0x0ff, i}));
    s.seed = derive_seed(seed, {0xc0, i});
    out.push_back(std::move(s));
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  ExperimentConfig c;
  const auto& sections = schema();
  for (const auto& [section, keys] : tree) {
    const auto s = sections.find(section);
    if (s == sections.end()) {
      if (keys.empty()) throw ConfigError("key '" + section + "' outside any section");
      throw ConfigError("unknown section [" + section + "]");
    }
    for (const auto& [key, node] : keys) {
      const auto setter = s->second.find(key);
      if (setter == s->second.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      setter->second(c, Field{section + "." + key, trim(node.data())});
    }
  }
  c.federation.stage1.shape.input_width = c.data.features;
  validate(c);
  c.source = text;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open configuration " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::vector<data::CohortSplit> make_cohorts(const DataConfig& d) {
  const auto bank = data::make_factor_bank(d.features, d.timesteps, d.factors, derive_seed(d.seed, {0xba}));
  std::vector<data::CohortSplit> out;
  const auto specs = d.hospital_specs();
  for (size_t i = 0; i < specs.size(); ++i) {
    out.push_back(data::split_cohort(data::generate_cohort(specs[i], bank), d.split, derive_seed(d.seed, {0x5b, i})));
  }
  return out;
}

}  // namespace fedgen::cfg
