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

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <cstdlib>
#include <type_traits>

#include "fedgen/errors.hpp"

namespace fedgen::fed {
namespace {

constexpr size_t kD = 24, kT = 4;

// The server accepts uploads only; raw tensors cannot be sent to it.
template <typename M>
concept Receivable = requires(Server s, const M& m) { s.receive(m); };

static_assert(!Receivable<data::BinarySequenceTensor>);
static_assert(!Receivable<data::CohortSplit>);
static_assert(!Receivable<nn::SparseRows>);
static_assert(!Receivable<bae::LatentSequenceTensor>);
static_assert(Receivable<EncoderUpload> && Receivable<TcvaeUpload> && Receivable<ValidationUpload>);

const data::GlobalFactorBank& bank() {
  static const auto b = data::make_factor_bank(kD, kT, 3, 1);
  return b;
}

data::CohortSplit cohort(size_t n, uint64_t seed, double offset_scale = 0.3) {
  data::HospitalCohortSpec s;
  s.n_samples = n;
  s.seed = seed;
  s.sparsity = 0.15;
  s.covariate_offset = data::make_covariate_offset(kD, offset_scale, seed + 1000);
  return data::split_cohort(data::generate_cohort(s, bank()), data::kDefaultSplit, seed + 2000);
}

FederationConfig tiny(Mode mode = Mode::kFedehrGen) {
  FederationConfig c;
  c.mode = mode;
  c.seed = 3;
  c.stage1.shape = {kD, {12}, 6};
  c.stage1.rounds = 2;
  c.stage1.first_round_epochs = 15;
  c.stage1.later_round_epochs = 5;
  c.stage1.adapt_frozen_epochs = 3;
  c.stage1.adapt_joint_epochs = 1;
  c.stage1.final_adapt_epochs = 3;
  c.stage1.batch_size = 64;
  c.stage1.learning_rate = 5e-3;
  c.stage2.z_width = 3;
  c.stage2.rnn_hidden = 6;
  c.stage2.head_hidden = 8;
  c.stage2.rounds = 4;
  c.stage2.warmup_rounds = 2;
  c.stage2.batch_size = 16;
  c.stage2.learning_rate = 3e-3;
  return c;
}

std::vector<data::CohortSplit> three_hospitals() { return {cohort(120, 10), cohort(80, 11), cohort(60, 12, 1.5)}; }

template <nn::Parametric P>
bool bit_equal(const P& a, const P& b) {
  return nn::flatten(a) == nn::flatten(b);
}

template <nn::Parametric P>
double max_abs_diff(const P& a, const P& b) {
  const auto fa = nn::flatten(a), fb = nn::flatten(b);
  double m = 0.0;
  for (size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
  return m;
}

TEST(Mode, StringsRoundTrip) {
  for (Mode m : all_modes()) EXPECT_EQ(mode_from_string(to_string(m)), m);
  EXPECT_THROW(mode_from_string("fedprox"), ConfigError);
  EXPECT_TRUE(uses_matching(Mode::kFedehrGen));
  EXPECT_FALSE(uses_matching(Mode::kFedehrNoMa));
  EXPECT_FALSE(uses_distribution_weights(Mode::kFedehrNoDa));
  EXPECT_FALSE(uses_distribution_weights(Mode::kFedavg));
}

TEST(Config, ValidationRejectsOutOfDomain) {
  auto c = tiny();
  c.stage1.rounds = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.stage2.tau = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.stage2.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(tiny().validate());
}

TEST(KlWeight, LinearWarmup) {
  Stage2Config c;
  c.lambda = 0.1;
  c.warmup_rounds = 10;
  EXPECT_NEAR(kl_weight(c, 0), 0.01, 1e-15);
  EXPECT_NEAR(kl_weight(c, 4), 0.05, 1e-15);
  EXPECT_EQ(kl_weight(c, 9), 0.1);
  EXPECT_EQ(kl_weight(c, 25), 0.1);
  c.warmup_rounds = 0;
  EXPECT_EQ(kl_weight(c, 0), 0.1);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrows) {
  setenv("FEDGEN_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  std::vector<std::atomic<int>> hits(50);
  parallel_for(50, [&](size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(8, [](size_t i) {
                 if (i == 5) throw DataError("boom");
               }),
               DataError);
  setenv("FEDGEN_THREADS", "junk", 1);
  EXPECT_GE(worker_count(), 1u);
  unsetenv("FEDGEN_THREADS");
}

TEST(Server, SingleClientAggregationIsIdentity) {
  const auto cfg = tiny();
  Client client(0, cohort(100, 20), cfg);
  const auto up = client.train_initial();
  Server server(cfg, 1);
  server.receive(up);
  server.aggregate_encoders(0);
  EXPECT_TRUE(bit_equal(server.global_encoder(), up.encoder));
  EXPECT_TRUE(server.latent_permutation(0).is_identity());
}

TEST(Server, RequiresOneUploadPerClient) {
  const auto cfg = tiny();
  Client client(0, cohort(100, 21), cfg);
  Server server(cfg, 2);
  const auto up = client.train_initial();
  server.receive(up);
  EXPECT_THROW(server.aggregate_encoders(0), InvalidArgument);
  server.receive(up);
  server.receive(up);
  EXPECT_THROW(server.aggregate_encoders(0), InvalidArgument);  // duplicate client index
}

TEST(FedBae, IdenticalCohortsWithSharedSeedsGiveTheLocalEncoder) {
  auto cfg = tiny();
  cfg.shared_client_seeds = true;
  cfg.stage1.rounds = 1;
  const auto split = cohort(100, 30);
  auto clients = make_clients(cfg, {split, split, split});
  Client solo(0, split, cfg);
  const auto local = solo.train_initial();
  const auto result = run_fedbae(cfg, clients);
  EXPECT_LT(max_abs_diff(result.global_encoder, local.encoder), 1e-12);
}

TEST(FedBae, MatchingBeatsPlainAveragingOnPermutedClients) {
  // Shared data and seeds with neuron orders planted per client: the local
  // encoders agree up to the planted permutations, which plain averaging
  // ignores.
  const auto split = cohort(300, 31);
  std::vector<double> loss;
  for (Mode m : {Mode::kFedehrGen, Mode::kFedehrNoMa}) {
    auto cfg = tiny(m);
    cfg.shared_client_seeds = true;
    cfg.seed = 6;
    cfg.stage1.rounds = 1;
    cfg.stage1.first_round_epochs = 150;
    cfg.stage1.tolerance = 0.0;
    cfg.stage1.learning_rate = 1e-2;
    cfg.stage1.reference = matchagg::ReferenceMode::kMajorityAnchor;
    auto clients = make_clients(cfg, {split, split, split});
    Rng rng(5);
    for (size_t k = 1; k < clients.size(); ++k) {
      std::vector<matchagg::Permutation> planted;
      for (size_t width : {size_t{12}, size_t{6}}) {
        std::vector<int> m(width);
        std::iota(m.begin(), m.end(), 0);
        std::shuffle(m.begin(), m.end(), rng);
        planted.emplace_back(m);
      }
      clients[k].plant_permutation(planted);
    }
    loss.push_back(run_fedbae(cfg, clients).records[0].validation_loss);
  }
  EXPECT_LT(loss[0], 0.9 * loss[1]) << loss[0] << " vs " << loss[1];
}

TEST(FedBae, RecordsAndLatents) {
  const auto cfg = tiny();
  auto clients = make_clients(cfg, three_hospitals());
  const auto result = run_fedbae(cfg, clients);
  ASSERT_EQ(result.records.size(), cfg.stage1.rounds);
  for (size_t r = 0; r < result.records.size(); ++r) {
    EXPECT_EQ(result.records[r].round, r);
    EXPECT_EQ(result.records[r].client_train_loss.size(), 3u);
    EXPECT_GT(result.records[r].validation_loss, 0.0);
  }
  for (size_t k = 0; k < 3; ++k) {
    EXPECT_TRUE(bit_equal(result.models[k].encoder, result.global_encoder));
    EXPECT_EQ(clients[k].train_latents().samples, clients[k].train_samples());
    EXPECT_EQ(clients[k].train_latents().width, 6u);
    EXPECT_EQ(clients[k].val_latents().samples, clients[k].val_samples());
  }
}

TEST(FedTcvae, ZeroRoundsReturnsInitialization) {
  auto cfg = tiny();
  cfg.stage2.rounds = 0;
  auto clients = make_clients(cfg, three_hospitals());
  run_fedbae(cfg, clients);
  const auto result = run_fedtcvae(cfg, clients);
  EXPECT_TRUE(result.records.empty());
  const auto init = tcvae::init_tcvae(tcvae_shape(cfg), derive_seed(cfg.seed, {4}));
  EXPECT_TRUE(bit_equal(result.global, init));
}

TEST(FedTcvae, RequiresStageOne) {
  const auto cfg = tiny();
  auto clients = make_clients(cfg, three_hospitals());
  EXPECT_THROW(run_fedtcvae(cfg, clients), DataError);
}

TEST(FedTcvae, TauZeroMatchesSampleSizeWeights) {
  std::vector<tcvae::TcvaeParams> finals;
  std::vector<std::vector<RoundRecord>> logs;
  for (Mode m : {Mode::kFedehrGen, Mode::kFedehrNoDa}) {
    auto cfg = tiny(m);
    cfg.stage2.tau = 0.0;
    auto r = run_federation(cfg, three_hospitals());
    finals.push_back(r.stage2.global);
    logs.push_back(r.stage2.records);
  }
  EXPECT_TRUE(bit_equal(finals[0], finals[1]));
  for (size_t r = 0; r < logs[0].size(); ++r) {
    EXPECT_EQ(logs[0][r].validation_loss, logs[1][r].validation_loss);
    EXPECT_EQ(logs[0][r].alpha_tilde, logs[0][r].alpha);
  }
}

TEST(FedTcvae, DistributionWeightsAreLoggedAndNormalized) {
  auto r = run_federation(tiny(), three_hospitals());
  ASSERT_EQ(r.stage2.records.size(), 4u);
  for (const auto& rec : r.stage2.records) {
    ASSERT_EQ(rec.alpha_tilde.size(), 3u);
    double s = 0.0;
    for (double a : rec.alpha_tilde) s += a;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(rec.mean_divergence.size(), 3u);
    EXPECT_NEAR(rec.alpha[0], 84.0 / 182.0, 1e-12);
  }
  EXPECT_NEAR(r.stage2.records[0].kl_weight, 0.05, 1e-15);
}

TEST(FedTcvae, ValidationLossDecreases) {
  auto cfg = tiny();
  cfg.stage2.rounds = 30;
  const auto r = run_federation(cfg, three_hospitals());
  EXPECT_LT(r.stage2.records[29].validation_loss, r.stage2.records[4].validation_loss);
}

TEST(Reductions, IdentityPermutationsAndTauZeroReproduceFedavg) {
  auto gen = tiny(Mode::kFedehrGen);
  gen.stage1.identity_permutations = true;
  gen.stage2.tau = 0.0;
  const auto a = run_federation(gen, three_hospitals());
  const auto b = run_federation(tiny(Mode::kFedavg), three_hospitals());
  EXPECT_TRUE(bit_equal(a.stage1.global_encoder, b.stage1.global_encoder));
  EXPECT_TRUE(bit_equal(a.stage2.global, b.stage2.global));
  for (size_t k = 0; k < 3; ++k) EXPECT_TRUE(bit_equal(a.stage1.models[k], b.stage1.models[k]));
}

TEST(Reductions, SingleHospitalFederationEqualsCentralized) {
  const auto split = cohort(150, 40);
  const auto fed = run_federation(tiny(Mode::kFedehrGen), {split});
  const auto cen = run_federation(tiny(Mode::kCentralized), {split});
  EXPECT_TRUE(bit_equal(fed.stage1.models[0], cen.stage1.models[0]));
  EXPECT_TRUE(bit_equal(fed.stage2.global, cen.stage2.global));
}

TEST(Centralized, PoolsEveryHospital) {
  const auto splits = three_hospitals();
  const auto pooled = pool_splits(splits);
  size_t train = 0, val = 0, test = 0;
  for (const auto& s : splits) {
    train += s.train.samples();
    val += s.val.samples();
    test += s.test.samples();
  }
  EXPECT_EQ(pooled.train.samples(), train);
  EXPECT_EQ(pooled.val.samples(), val);
  EXPECT_EQ(pooled.test.samples(), test);
  const auto r = run_federation(tiny(Mode::kCentralized), splits);
  ASSERT_EQ(r.clients.size(), 1u);
  EXPECT_EQ(r.clients[0].train_samples(), train);
}

TEST(Determinism, RepeatedRunsAreBitIdentical) {
  const auto a = run_federation(tiny(), three_hospitals());
  const auto b = run_federation(tiny(), three_hospitals());
  EXPECT_TRUE(bit_equal(a.stage2.global, b.stage2.global));
  for (size_t k = 0; k < 3; ++k) EXPECT_TRUE(bit_equal(a.stage1.models[k], b.stage1.models[k]));
}

class Generation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto cfg = tiny();
    cfg.stage2.rounds = 20;
    result_ = new FederationResult(run_federation(cfg, three_hospitals()));
  }
  static void TearDownTestSuite() { delete result_; }
  static FederationResult* result_;
};

FederationResult* Generation::result_ = nullptr;

TEST_F(Generation, EmptyRequest) {
  const auto x = generate_synthetic_cohort(result_->stage2.global, result_->stage1.models[0].decoder, 0, 0.3, kT, 1);
  EXPECT_TRUE(x.empty());
  EXPECT_EQ(x.features(), kD);
}

TEST_F(Generation, LabelMix) {
  const auto& dec = result_->stage1.models[0].decoder;
  const auto zeros = generate_synthetic_cohort(result_->stage2.global, dec, 50, 0.0, kT, 1);
  EXPECT_EQ(zeros.positive_rate(), 0.0);
  const auto mixed = generate_synthetic_cohort(result_->stage2.global, dec, 50, 0.3, kT, 1);
  EXPECT_EQ(mixed.positive_rate(), 0.3);
  EXPECT_THROW(generate_synthetic_cohort(result_->stage2.global, dec, 5, 1.5, kT, 1), InvalidArgument);
}

TEST_F(Generation, DensityNearRealTrainingDensity) {
  for (size_t k = 0; k < 3; ++k) {
    const auto& c = result_->clients[k];
    const auto x = generate_synthetic_cohort(result_->stage2.global, result_->stage1.models[k].decoder,
                                             c.train_samples(), c.train_positive_rate(), kT, 7);
    const double real = c.split().train.density();
    EXPECT_NEAR(x.density(), real, 0.5 * real) << "hospital " << k;
  }
}

TEST_F(Generation, DeterministicAndEmissionModes) {
  const auto& dec = result_->stage1.models[1].decoder;
  const auto a = generate_synthetic_cohort(result_->stage2.global, dec, 30, 0.5, kT, 9);
  EXPECT_EQ(a, generate_synthetic_cohort(result_->stage2.global, dec, 30, 0.5, kT, 9));
  EXPECT_NE(a, generate_synthetic_cohort(result_->stage2.global, dec, 30, 0.5, kT, 10));
  const auto t = generate_synthetic_cohort(result_->stage2.global, dec, 30, 0.5, kT, 9, {Emission::kThreshold, LatentEmission::kMean});
  EXPECT_EQ(t.samples(), 30u);
  EXPECT_EQ(emission_from_string(to_string(Emission::kThreshold)), Emission::kThreshold);
  EXPECT_THROW(emission_from_string("argmax"), ConfigError);
  EXPECT_EQ(latent_emission_from_string(to_string(LatentEmission::kMean)), LatentEmission::kMean);
  EXPECT_THROW(latent_emission_from_string("mode"), ConfigError);
}

TEST_F(Generation, MismatchedDecoderThrows) {
  bae::Decoder wrong{{nn::DenseLayer(5, kD, nn::Activation::kSigmoid)}};
  EXPECT_THROW(generate_synthetic_cohort(result_->stage2.global, wrong, 3, 0.5, kT, 1), DimensionError);
}

}  // namespace
}  // namespace fedgen::fed
