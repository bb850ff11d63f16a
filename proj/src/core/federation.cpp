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

#include "fedgen/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

#include "fedgen/errors.hpp"
#include "fedgen/random.hpp"

namespace fedgen::fed {

namespace {

// Seed stream tags.
constexpr uint64_t kBaeInit = 1;
constexpr uint64_t kStage1 = 2;
constexpr uint64_t kStage2 = 3;
constexpr uint64_t kTcvaeInit = 4;
constexpr uint64_t kValidation = 5;

struct ModeName {
  Mode mode;
  const char* name;
};

constexpr ModeName kModeNames[] = {
    {Mode::kFedehrGen, "fedehr_gen"},   {Mode::kFedavg, "fedavg"},
    {Mode::kFedehrNoMa, "fedehr_no_ma"}, {Mode::kFedehrNoDa, "fedehr_no_da"},
    {Mode::kCentralized, "centralized"},
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> to_std(const nn::Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

Mode mode_from_string(const std::string& s) {
  for (const auto& m : kModeNames) {
    if (s == m.name) return m.mode;
  }
  throw ConfigError("unknown mode '" + s +
                    "' (expected fedehr_gen, fedavg, fedehr_no_ma, fedehr_no_da or centralized)");
}

SummaryParams summary_params_from_string(const std::string& s) {
  if (s == "global") return SummaryParams::kGlobal;
  if (s == "local") return SummaryParams::kLocal;
  throw ConfigError("unknown summary_params '" + s + "' (expected global or local)");
}

std::string to_string(SummaryParams p) { return p == SummaryParams::kGlobal ? "global" : "local"; }

std::string to_string(Mode mode) {
  for (const auto& m : kModeNames) {
    if (m.mode == mode) return m.name;
  }
  return "unknown";
}

std::vector<Mode> all_modes() {
  std::vector<Mode> out;
  for (const auto& m : kModeNames) out.push_back(m.mode);
  return out;
}

bool uses_matching(Mode mode) { return mode == Mode::kFedehrGen || mode == Mode::kFedehrNoDa; }

bool uses_distribution_weights(Mode mode) {
  return mode == Mode::kFedehrGen || mode == Mode::kFedehrNoMa;
}

void FederationConfig::validate() const {
  const auto& s1 = stage1;
  require(s1.shape.input_width > 0 && s1.shape.latent_width > 0, "stage1: widths must be positive");
  for (size_t w : s1.shape.hidden_widths) require(w > 0, "stage1: hidden widths must be positive");
  require(s1.rounds >= 1, "stage1: rounds must be at least 1");
  require(s1.first_round_epochs >= 1, "stage1: first_round_epochs must be at least 1");
  require(s1.batch_size >= 1, "stage1: batch_size must be positive");
  require(s1.learning_rate > 0.0, "stage1: learning_rate must be positive");
  require(s1.tolerance >= 0.0, "stage1: tolerance must be non-negative");
  require(s1.patience >= 1, "stage1: patience must be at least 1");
  const auto& s2 = stage2;
  require(s2.z_width > 0 && s2.rnn_hidden > 0 && s2.head_hidden > 0, "stage2: widths must be positive");
  require(s2.local_epochs >= 1, "stage2: local_epochs must be at least 1");
  require(s2.batch_size >= 1, "stage2: batch_size must be positive");
  require(s2.learning_rate > 0.0, "stage2: learning_rate must be positive");
  require(s2.lambda >= 0.0 && std::isfinite(s2.lambda), "stage2: lambda must be finite and non-negative");
  require(s2.tau >= 0.0 && std::isfinite(s2.tau), "stage2: tau must be finite and non-negative");
}

double kl_weight(const Stage2Config& config, size_t round) {
  if (config.warmup_rounds == 0) return config.lambda;
  const double ramp = static_cast<double>(round + 1) / static_cast<double>(config.warmup_rounds);
  return config.lambda * std::min(1.0, ramp);
}

tcvae::TcvaeShape tcvae_shape(const FederationConfig& config) {
  tcvae::TcvaeShape shape;
  shape.observation_width = config.stage1.shape.latent_width;
  shape.z_width = config.stage2.z_width;
  shape.rnn_hidden = config.stage2.rnn_hidden;
  shape.head_hidden = config.stage2.head_hidden;
  return shape;
}

// --------------------------------------------------------------- Client

Client::Client(size_t index, data::CohortSplit split, const FederationConfig& config)
    : index_(index), split_(std::move(split)), config_(config) {
  if (split_.train.empty()) throw DataError("client " + std::to_string(index) + ": empty training split");
  if (split_.train.features() != config.stage1.shape.input_width) {
    throw DataError("client " + std::to_string(index) + ": data has " + std::to_string(split_.train.features()) +
                    " features, model expects " + std::to_string(config.stage1.shape.input_width));
  }
  train_rows_ = split_.train.sparse_rows();
  model_ = bae::init_bae(config.stage1.shape, derive_seed(config.seed, {kBaeInit, stream()}));
  stage1_rng_ = make_rng(config.seed, {kStage1, stream()});
  stage2_rng_ = make_rng(config.seed, {kStage2, stream()});
}

size_t Client::stream() const { return config_.shared_client_seeds ? 0 : index_; }

bae::TrainOptions Client::train_options(size_t max_epochs) const {
  bae::TrainOptions o;
  o.max_epochs = max_epochs;
  o.tolerance = config_.stage1.tolerance;
  o.patience = config_.stage1.patience;
  o.batch_size = config_.stage1.batch_size;
  o.adam.learning_rate = config_.stage1.learning_rate;
  return o;
}

void Client::plant_permutation(std::span<const matchagg::Permutation> perms) {
  model_.encoder = matchagg::permute_encoder(model_.encoder, perms);
  model_.decoder = bae::permute_decoder_inputs(model_.decoder, perms.back());
}

EncoderUpload Client::train_initial() {
  const auto report = bae::train_local_bae(model_, train_rows_, train_options(config_.stage1.first_round_epochs),
                                           stage1_rng_);
  return {index_, train_samples(), model_.encoder, report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()};
}

EncoderUpload Client::adapt_and_train(const bae::Encoder& global, const matchagg::Permutation& latent_perm) {
  bae::AdaptOptions adapt;
  adapt.frozen_epochs = config_.stage1.adapt_frozen_epochs;
  adapt.joint_epochs = config_.stage1.adapt_joint_epochs;
  adapt.batch_size = config_.stage1.batch_size;
  adapt.adam.learning_rate = config_.stage1.learning_rate;
  model_ = bae::adapt_decoder(model_, global, latent_perm, train_rows_, adapt, stage1_rng_);
  const auto report = bae::train_local_bae(model_, train_rows_, train_options(config_.stage1.later_round_epochs),
                                           stage1_rng_);
  const double loss = report.epoch_loss.empty() ? bae::reconstruction_loss(model_, train_rows_)
                                                : report.epoch_loss.back();
  return {index_, train_samples(), model_.encoder, loss};
}

void Client::finalize_stage1(const bae::Encoder& global, const matchagg::Permutation& latent_perm) {
  bae::AdaptOptions adapt;
  adapt.frozen_epochs = config_.stage1.final_adapt_epochs;
  adapt.joint_epochs = 0;
  adapt.batch_size = config_.stage1.batch_size;
  adapt.adam.learning_rate = config_.stage1.learning_rate;
  model_ = bae::adapt_decoder(model_, global, latent_perm, train_rows_, adapt, stage1_rng_);
  train_latents_ = bae::compute_latents(model_.encoder, split_.train);
  val_latents_ = bae::compute_latents(model_.encoder, split_.val);
}

ValidationUpload Client::validate_stage1(const bae::Encoder& global,
                                         const matchagg::Permutation& latent_perm) const {
  bae::BaeParams p{global, bae::permute_decoder_inputs(model_.decoder, latent_perm)};
  return {index_, val_samples(), bae::reconstruction_loss(p, split_.val)};
}

TcvaeUpload Client::train_tcvae(const tcvae::TcvaeParams& global, const Stage2Config& stage2, double lambda) {
  if (train_latents_.samples == 0) throw DataError("client " + std::to_string(index_) + ": stage 1 not finished");
  TcvaeUpload up;
  up.client = index_;
  up.samples = train_samples();
  up.params = global;
  tcvae::TrainOptions opts;
  opts.epochs = stage2.local_epochs;
  opts.batch_size = stage2.batch_size;
  opts.lambda = lambda;
  opts.adam.learning_rate = stage2.learning_rate;
  const auto labels = split_.train.labels();
  up.train_loss = tcvae::train_local_tcvae(up.params, train_latents_, labels, opts, &tcvae_optimizer_, stage2_rng_)
                      .mean_loss;
  const auto& summary_model = stage2.summary_params == SummaryParams::kGlobal ? global : up.params;
  up.summary = distagg::summarize_latent_distribution(tcvae::posterior_moments(summary_model, train_latents_, labels));
  return up;
}

ValidationUpload Client::validate_tcvae(const tcvae::TcvaeParams& global, double lambda, uint64_t seed) const {
  const auto terms = tcvae::tcvae_elbo(global, val_latents_, split_.val.labels(), lambda, seed);
  return {index_, val_samples(), terms.loss};
}

// --------------------------------------------------------------- Server

Server::Server(const FederationConfig& config, size_t clients) : config_(config), clients_(clients) {
  if (clients == 0) throw DataError("federation needs at least one client");
  latent_perms_.assign(clients, matchagg::Permutation::identity(config.stage1.shape.latent_width));
}

void Server::receive(const EncoderUpload& upload) { encoder_inbox_.push_back(upload); }
void Server::receive(const TcvaeUpload& upload) { tcvae_inbox_.push_back(upload); }
void Server::receive(const ValidationUpload& upload) { validation_inbox_.push_back(upload); }

namespace {

template <typename U>
std::vector<U> take_round(std::vector<U>& inbox, size_t clients, const char* what) {
  if (inbox.size() != clients) {
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(clients) + " uploads, got " +
                          std::to_string(inbox.size()));
  }
  std::vector<U> out = std::move(inbox);
  inbox.clear();
  std::sort(out.begin(), out.end(), [](const U& a, const U& b) { return a.client < b.client; });
  for (size_t k = 0; k < out.size(); ++k) {
    if (out[k].client != k) throw InvalidArgument(std::string(what) + ": uploads are not one per client");
  }
  return out;
}

template <typename U>
matchagg::AggregationWeights weights_of(const std::vector<U>& uploads) {
  std::vector<size_t> counts;
  for (const auto& u : uploads) counts.push_back(u.samples);
  return matchagg::AggregationWeights::from_counts(counts);
}

}  // namespace

void Server::aggregate_encoders(size_t round) {
  auto uploads = take_round(encoder_inbox_, clients_, "aggregate_encoders");
  const auto weights = weights_of(uploads);
  std::vector<bae::Encoder> locals;
  upload_losses_.clear();
  for (auto& u : uploads) {
    locals.push_back(std::move(u.encoder));
    upload_losses_.push_back(u.train_loss);
  }
  if (round == 0 || !has_global_encoder_) round0_locals_ = locals;

  if (uses_matching(config_.mode) && !config_.stage1.identity_permutations) {
    const bae::Encoder reference =
        matchagg::select_reference(static_cast<int>(round), has_global_encoder_ ? &global_encoder_ : nullptr,
                                   round0_locals_, weights, config_.stage1.reference);
    std::vector<std::vector<matchagg::Permutation>> perms;
    for (const auto& local : locals) perms.push_back(matchagg::match_encoder(local, reference, config_.stage1.cost));
    global_encoder_ = matchagg::matched_average(locals, perms, weights.alpha);
    for (size_t k = 0; k < clients_; ++k) latent_perms_[k] = perms[k].back();
  } else {
    global_encoder_ = matchagg::fedavg_aggregate<bae::Encoder>(locals, weights.alpha);
    for (auto& p : latent_perms_) p = matchagg::Permutation::identity(global_encoder_.latent_width());
  }
  has_global_encoder_ = true;
}

const matchagg::Permutation& Server::latent_permutation(size_t client) const {
  if (client >= clients_) throw InvalidArgument("latent_permutation: client index out of range");
  return latent_perms_[client];
}

void Server::aggregate_tcvae(size_t /*round*/) {
  auto uploads = take_round(tcvae_inbox_, clients_, "aggregate_tcvae");
  alpha_ = weights_of(uploads).alpha;
  std::vector<tcvae::TcvaeParams> params;
  std::vector<distagg::LatentDistributionSummary> summaries;
  upload_losses_.clear();
  for (auto& u : uploads) {
    params.push_back(std::move(u.params));
    summaries.push_back(std::move(u.summary));
    upload_losses_.push_back(u.train_loss);
  }
  if (clients_ >= 2) {
    const nn::Matrix div = distagg::divergence_matrix(summaries);
    mean_divergence_ = distagg::mean_divergence(div);
    alpha_tilde_ = uses_distribution_weights(config_.mode)
                       ? distagg::distribution_weights(div, alpha_, config_.stage2.tau)
                       : alpha_;
  } else {
    mean_divergence_ = nn::Vector::Zero(1);
    alpha_tilde_ = alpha_;
  }
  global_tcvae_ = distagg::distribution_aware_aggregate(params, alpha_tilde_);
}

double Server::aggregate_validation() {
  auto uploads = take_round(validation_inbox_, clients_, "aggregate_validation");
  double total = 0.0, weight = 0.0;
  for (const auto& u : uploads) {
    total += static_cast<double>(u.samples) * u.loss;
    weight += static_cast<double>(u.samples);
  }
  if (weight == 0.0) throw DataError("aggregate_validation: every validation split is empty");
  return total / weight;
}

// ------------------------------------------------------------- protocol

size_t worker_count() {
  if (const char* env = std::getenv("FEDGEN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(size_t count, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min(count, worker_count());
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Client> make_clients(const FederationConfig& config, std::vector<data::CohortSplit> splits) {
  config.validate();
  if (splits.empty()) throw DataError("federation needs at least one hospital");
  std::vector<Client> clients;
  clients.reserve(splits.size());
  for (size_t k = 0; k < splits.size(); ++k) clients.emplace_back(k, std::move(splits[k]), config);
  return clients;
}

Stage1Result run_fedbae(const FederationConfig& config, std::vector<Client>& clients, const RoundObserver& observer) {
  config.validate();
  const size_t k_count = clients.size();
  Server server(config, k_count);
  Stage1Result result;
  std::vector<EncoderUpload> uploads(k_count);
  std::vector<ValidationUpload> checks(k_count);
  for (size_t r = 0; r < config.stage1.rounds; ++r) {
    const auto start = Clock::now();
    parallel_for(k_count, [&](size_t k) {
      uploads[k] = r == 0 ? clients[k].train_initial()
                          : clients[k].adapt_and_train(server.global_encoder(), server.latent_permutation(k));
    });
    for (const auto& u : uploads) server.receive(u);
    server.aggregate_encoders(r);
    parallel_for(k_count, [&](size_t k) {
      checks[k] = clients[k].validate_stage1(server.global_encoder(), server.latent_permutation(k));
    });
    for (const auto& c : checks) server.receive(c);

    RoundRecord rec;
    rec.stage = 1;
    rec.round = r;
    rec.client_train_loss = server.upload_losses();
    rec.validation_loss = server.aggregate_validation();
    rec.wall_seconds = seconds_since(start);
    result.records.push_back(rec);
    if (observer) observer(rec, server, clients);
  }
  parallel_for(k_count, [&](size_t k) {
    clients[k].finalize_stage1(server.global_encoder(), server.latent_permutation(k));
  });
  result.global_encoder = server.global_encoder();
  for (const auto& c : clients) result.models.push_back(c.model());
  return result;
}

Stage2Result run_fedtcvae(const FederationConfig& config, std::vector<Client>& clients,
                          const RoundObserver& observer) {
  config.validate();
  const size_t k_count = clients.size();
  for (const auto& c : clients) {
    if (c.train_latents().samples == 0) throw DataError("run_fedtcvae: empty latents (run stage 1 first)");
  }
  Server server(config, k_count);
  server.set_global_tcvae(tcvae::init_tcvae(tcvae_shape(config), derive_seed(config.seed, {kTcvaeInit})));
  Stage2Result result;
  std::vector<TcvaeUpload> uploads(k_count);
  std::vector<ValidationUpload> checks(k_count);
  for (size_t r = 0; r < config.stage2.rounds; ++r) {
    const auto start = Clock::now();
    const double lambda = kl_weight(config.stage2, r);
    parallel_for(k_count, [&](size_t k) { uploads[k] = clients[k].train_tcvae(server.global_tcvae(), config.stage2, lambda); });
    for (auto& u : uploads) server.receive(u);
    server.aggregate_tcvae(r);
    parallel_for(k_count, [&](size_t k) {
      checks[k] = clients[k].validate_tcvae(server.global_tcvae(), config.stage2.lambda,
                                            derive_seed(config.seed, {kValidation, k}));
    });
    for (const auto& c : checks) server.receive(c);

    RoundRecord rec;
    rec.stage = 2;
    rec.round = r;
    rec.client_train_loss = server.upload_losses();
    rec.validation_loss = server.aggregate_validation();
    rec.wall_seconds = seconds_since(start);
    rec.alpha = to_std(server.alpha());
    rec.alpha_tilde = to_std(server.alpha_tilde());
    rec.mean_divergence = to_std(server.mean_divergence());
    rec.kl_weight = lambda;
    result.records.push_back(rec);
    if (observer) observer(rec, server, clients);
  }
  result.global = server.global_tcvae();
  return result;
}

data::CohortSplit pool_splits(std::span<const data::CohortSplit> splits) {
  if (splits.empty()) throw DataError("pool_splits: no hospitals");
  std::vector<data::BinarySequenceTensor> train, val, test;
  for (const auto& s : splits) {
    train.push_back(s.train);
    val.push_back(s.val);
    test.push_back(s.test);
  }
  data::CohortSplit out;
  out.train = data::BinarySequenceTensor::concat(train);
  out.val = data::BinarySequenceTensor::concat(val);
  out.test = data::BinarySequenceTensor::concat(test);
  return out;
}

FederationResult run_federation(const FederationConfig& config, std::vector<data::CohortSplit> splits,
                                const RoundObserver& observer) {
  if (splits.empty()) throw DataError("run_federation: no hospitals");
  if (config.mode == Mode::kCentralized) {
    data::CohortSplit pooled = pool_splits(splits);
    splits.clear();
    splits.push_back(std::move(pooled));
  }
  FederationResult out;
  out.clients = make_clients(config, std::move(splits));
  out.stage1 = run_fedbae(config, out.clients, observer);
  out.stage2 = run_fedtcvae(config, out.clients, observer);
  return out;
}

// ----------------------------------------------------------- generation

Emission emission_from_string(const std::string& s) {
  if (s == "sample") return Emission::kSample;
  if (s == "threshold") return Emission::kThreshold;
  throw ConfigError("unknown emission '" + s + "' (expected sample or threshold)");
}

std::string to_string(Emission e) { return e == Emission::kSample ? "sample" : "threshold"; }

LatentEmission latent_emission_from_string(const std::string& s) {
  if (s == "mean") return LatentEmission::kMean;
  if (s == "sample") return LatentEmission::kSample;
  throw ConfigError("unknown latent emission '" + s + "' (expected mean or sample)");
}

std::string to_string(LatentEmission e) { return e == LatentEmission::kMean ? "mean" : "sample"; }

data::BinarySequenceTensor generate_synthetic_cohort(const tcvae::TcvaeParams& global, const bae::Decoder& decoder,
                                                     size_t n, double positive_rate, size_t timesteps,
                                                     uint64_t seed, const GenerationOptions& options) {
  tcvae::validate(global);
  if (decoder.layers.empty()) throw InvalidArgument("generate_synthetic_cohort: decoder has no layers");
  if (decoder.latent_width() != global.observation_width()) {
    throw DimensionError("generate_synthetic_cohort: decoder expects latent width " +
                         std::to_string(decoder.latent_width()) + ", generator emits " +
                         std::to_string(global.observation_width()));
  }
  if (!(positive_rate >= 0.0 && positive_rate <= 1.0)) {
    throw InvalidArgument("generate_synthetic_cohort: positive rate must lie in [0, 1]");
  }
  const size_t features = static_cast<size_t>(decoder.output_width());
  if (n == 0) return data::BinarySequenceTensor(0, timesteps, features);

  const auto positives = static_cast<size_t>(std::llround(positive_rate * static_cast<double>(n)));
  std::vector<uint8_t> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), uint8_t{1});
  Rng label_rng = make_rng(seed, {0x1ab});
  std::shuffle(labels.begin(), labels.end(), label_rng);

  const auto latents = tcvae::generate_latents(global, labels, timesteps, derive_seed(seed, {0x1a7}),
                                                options.latents == LatentEmission::kSample);
  const nn::Matrix probs = bae::decode(decoder, latents.values);
  std::vector<uint8_t> bits(n * timesteps * features);
  Rng bit_rng = make_rng(seed, {0xb17});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (nn::Index r = 0; r < probs.rows(); ++r) {
    for (nn::Index d = 0; d < probs.cols(); ++d) {
      const double p = probs(r, d);
      bits[static_cast<size_t>(r) * features + static_cast<size_t>(d)] =
          options.bits == Emission::kSample ? (u(bit_rng) < p) : (p > 0.5);
    }
  }
  return data::BinarySequenceTensor(n, timesteps, features, std::move(bits), std::move(labels));
}

}  // namespace fedgen::fed
