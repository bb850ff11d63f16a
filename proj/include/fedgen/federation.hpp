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

// In-process simulation of the two-stage protocol: hospital clients train
// locally and exchange only parameter sets and latent summaries with a
// server object that aggregates them.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedgen/bae.hpp"
#include "fedgen/distagg.hpp"
#include "fedgen/matchagg.hpp"
#include "fedgen/synthdata.hpp"
#include "fedgen/tcvae.hpp"

namespace fedgen::fed {

enum class Mode { kFedehrGen, kFedavg, kFedehrNoMa, kFedehrNoDa, kCentralized };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode mode);
std::vector<Mode> all_modes();

// Layer-wise matching of encoders in stage 1.
bool uses_matching(Mode mode);
// Divergence-based reweighting in stage 2.
bool uses_distribution_weights(Mode mode);

struct Stage1Config {
  bae::BaeShape shape{};
  size_t rounds = 5;
  size_t first_round_epochs = 200;
  size_t later_round_epochs = 50;
  double tolerance = 1e-4;
  size_t patience = 3;
  size_t batch_size = 512;
  double learning_rate = 1e-3;
  size_t adapt_frozen_epochs = 20;
  size_t adapt_joint_epochs = 5;
  // Decoder-only fine-tuning against the final global encoder.
  size_t final_adapt_epochs = 20;
  matchagg::CostKind cost = matchagg::CostKind::kSquaredEuclidean;
  matchagg::ReferenceMode reference = matchagg::ReferenceMode::kFedavgInit;
  // Replace the matched permutations by identities (matching modes only).
  bool identity_permutations = false;
};

// Parameters used for the posterior pass behind each divergence summary:
// the round's received global model (data differences only) or the
// client's locally updated model.
enum class SummaryParams { kGlobal, kLocal };

SummaryParams summary_params_from_string(const std::string& s);
std::string to_string(SummaryParams p);

struct Stage2Config {
  size_t z_width = 16;
  size_t rnn_hidden = 32;
  size_t head_hidden = 64;
  size_t rounds = 30;
  size_t local_epochs = 1;
  size_t batch_size = 128;
  double learning_rate = 1e-3;
  double lambda = 0.1;
  // lambda ramps linearly to its final value over this many rounds.
  size_t warmup_rounds = 10;
  double tau = 5.0;
  SummaryParams summary_params = SummaryParams::kGlobal;
};

struct FederationConfig {
  Mode mode = Mode::kFedehrGen;
  uint64_t seed = 0;
  // Every client draws its initialization and batch order from client 0's
  // streams instead of its own.
  bool shared_client_seeds = false;
  Stage1Config stage1{};
  Stage2Config stage2{};

  // Throws ConfigError for out-of-domain values.
  void validate() const;
};

// Effective KL weight in round r (0-based).
double kl_weight(const Stage2Config& config, size_t round);

// ------------------------------------------------------------ messages

struct EncoderUpload {
  size_t client = 0;
  size_t samples = 0;
  bae::Encoder encoder;
  double train_loss = 0.0;
};

struct TcvaeUpload {
  size_t client = 0;
  size_t samples = 0;
  tcvae::TcvaeParams params;
  distagg::LatentDistributionSummary summary;
  double train_loss = 0.0;
};

struct ValidationUpload {
  size_t client = 0;
  size_t samples = 0;
  double loss = 0.0;
};

struct RoundRecord {
  int stage = 1;
  size_t round = 0;
  std::vector<double> client_train_loss;
  double validation_loss = 0.0;
  double wall_seconds = 0.0;
  std::vector<double> alpha;
  std::vector<double> alpha_tilde;
  std::vector<double> mean_divergence;
  double kl_weight = 0.0;
};

// ------------------------------------------------------------- parties

// One hospital. Holds its raw splits; nothing but uploads leaves it.
class Client {
 public:
  Client(size_t index, data::CohortSplit split, const FederationConfig& config);

  size_t index() const { return index_; }
  size_t train_samples() const { return split_.train.samples(); }
  size_t val_samples() const { return split_.val.samples(); }
  double train_positive_rate() const { return split_.train.positive_rate(); }
  const data::CohortSplit& split() const { return split_; }

  // Relabels the neurons of the untrained model (one permutation per
  // encoder layer); the function it computes is unchanged.
  void plant_permutation(std::span<const matchagg::Permutation> perms);

  // Stage 1.
  EncoderUpload train_initial();
  EncoderUpload adapt_and_train(const bae::Encoder& global, const matchagg::Permutation& latent_perm);
  void finalize_stage1(const bae::Encoder& global, const matchagg::Permutation& latent_perm);
  // Mean BCE on the validation split under `global` and this client's
  // decoder re-indexed by `latent_perm`.
  ValidationUpload validate_stage1(const bae::Encoder& global, const matchagg::Permutation& latent_perm) const;
  const bae::BaeParams& model() const { return model_; }

  // Stage 2.
  // Stage-2 settings come from the caller so that one stage-1 result can
  // serve runs with different stage-2 configurations.
  TcvaeUpload train_tcvae(const tcvae::TcvaeParams& global, const Stage2Config& stage2, double lambda);
  ValidationUpload validate_tcvae(const tcvae::TcvaeParams& global, double lambda, uint64_t seed) const;
  const bae::LatentSequenceTensor& train_latents() const { return train_latents_; }
  const bae::LatentSequenceTensor& val_latents() const { return val_latents_; }

 private:
  size_t stream() const;
  bae::TrainOptions train_options(size_t max_epochs) const;

  size_t index_;
  data::CohortSplit split_;
  FederationConfig config_;
  nn::SparseRows train_rows_;
  bae::BaeParams model_;
  Rng stage1_rng_;
  Rng stage2_rng_;
  nn::Adam tcvae_optimizer_;
  bae::LatentSequenceTensor train_latents_, val_latents_;
};

// Aggregation point. Accepts only the upload types above.
class Server {
 public:
  Server(const FederationConfig& config, size_t clients);

  void receive(const EncoderUpload& upload);
  void receive(const TcvaeUpload& upload);
  void receive(const ValidationUpload& upload);

  // Stage 1: match (or not) against the reference, then average. Requires
  // one encoder upload per client since the last call.
  void aggregate_encoders(size_t round);
  const bae::Encoder& global_encoder() const { return global_encoder_; }
  // Permutation of client k's latent coordinates into the global order.
  const matchagg::Permutation& latent_permutation(size_t client) const;

  // Stage 2: distribution-aware (or plain) average of the uploads.
  void aggregate_tcvae(size_t round);
  const tcvae::TcvaeParams& global_tcvae() const { return global_tcvae_; }
  void set_global_tcvae(tcvae::TcvaeParams params) { global_tcvae_ = std::move(params); }

  // N-weighted mean of the validation uploads since the last call.
  double aggregate_validation();

  // Weights and divergences of the last stage-2 aggregation.
  const nn::Vector& alpha() const { return alpha_; }
  const nn::Vector& alpha_tilde() const { return alpha_tilde_; }
  const nn::Vector& mean_divergence() const { return mean_divergence_; }
  std::vector<double> upload_losses() const { return upload_losses_; }

 private:
  FederationConfig config_;
  size_t clients_;
  std::vector<EncoderUpload> encoder_inbox_;
  std::vector<TcvaeUpload> tcvae_inbox_;
  std::vector<ValidationUpload> validation_inbox_;
  std::vector<bae::Encoder> round0_locals_;
  bae::Encoder global_encoder_;
  bool has_global_encoder_ = false;
  std::vector<matchagg::Permutation> latent_perms_;
  tcvae::TcvaeParams global_tcvae_;
  nn::Vector alpha_, alpha_tilde_, mean_divergence_;
  std::vector<double> upload_losses_;
};

// ----------------------------------------------------------- protocol

// Runs fn(k) for k < count on up to FEDGEN_THREADS workers (default:
// hardware concurrency) and rethrows the first failure.
void parallel_for(size_t count, const std::function<void(size_t)>& fn);
size_t worker_count();

// Called after every round with the record and the server state.
using RoundObserver = std::function<void(const RoundRecord&, const Server&, std::span<const Client>)>;

struct Stage1Result {
  bae::Encoder global_encoder;
  std::vector<bae::BaeParams> models;  // global encoder + adapted decoder per client
  std::vector<RoundRecord> records;
};

struct Stage2Result {
  tcvae::TcvaeParams global;
  std::vector<RoundRecord> records;
};

tcvae::TcvaeShape tcvae_shape(const FederationConfig& config);

// Stage 1 on already-constructed clients; leaves each client holding its
// final model and latents.
Stage1Result run_fedbae(const FederationConfig& config, std::vector<Client>& clients,
                        const RoundObserver& observer = {});
// Stage 2 on clients that finished stage 1. rounds == 0 returns the
// initialization.
Stage2Result run_fedtcvae(const FederationConfig& config, std::vector<Client>& clients,
                          const RoundObserver& observer = {});

std::vector<Client> make_clients(const FederationConfig& config, std::vector<data::CohortSplit> splits);

// Concatenates the splits of every hospital into one cohort.
data::CohortSplit pool_splits(std::span<const data::CohortSplit> splits);

struct FederationResult {
  Stage1Result stage1;
  Stage2Result stage2;
  std::vector<Client> clients;
};

// Both stages. Mode kCentralized pools all splits into a single client.
FederationResult run_federation(const FederationConfig& config, std::vector<data::CohortSplit> splits,
                                const RoundObserver& observer = {});

// ---------------------------------------------------------- generation

// How bits are drawn from the decoder's Bernoulli parameters.
enum class Emission { kSample, kThreshold };

Emission emission_from_string(const std::string& s);
std::string to_string(Emission e);

// How the rollout emits each latent h_t: the likelihood mean or a draw.
enum class LatentEmission { kMean, kSample };

LatentEmission latent_emission_from_string(const std::string& s);
std::string to_string(LatentEmission e);

struct GenerationOptions {
  Emission bits = Emission::kSample;
  LatentEmission latents = LatentEmission::kSample;
};

// n samples whose labels follow `positive_rate` (count rounded to nearest,
// order shuffled); latents rolled out from the prior of `global` and
// decoded by `decoder`.
data::BinarySequenceTensor generate_synthetic_cohort(const tcvae::TcvaeParams& global,
                                                     const bae::Decoder& decoder, size_t n,
                                                     double positive_rate, size_t timesteps,
                                                     uint64_t seed, const GenerationOptions& options = {});

}  // namespace fedgen::fed
