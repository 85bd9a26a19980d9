#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "eqco/errors.hpp"
#include "eqco/probe.hpp"
#include "eqco/schedule.hpp"
#include "eqco/trainer.hpp"
#include "support.hpp"

using namespace eqco;

namespace {

ToyInstanceDataset small_dataset(std::size_t n = 64, std::uint64_t seed = 1) {
  ToyDatasetConfig cfg;
  cfg.n_instances = n;
  return ToyInstanceDataset::make(cfg, seed);
}

TrainConfig smoke_config() {
  TrainConfig cfg;
  cfg.n_queries = 8;
  cfg.loss = LossConfig{0.2, FixedMargin{0.0}, 7};
  cfg.neg_source = NegativeSource::InBatch;
  cfg.epochs = 2;
  cfg.base_lr = 0.3;
  cfg.n_ref = 8;
  cfg.hidden_dims = {16};
  cfg.embed_dim = 8;
  cfg.seed = 3;
  return cfg;
}

bool same_log(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.step != y.step || x.epoch != y.epoch || x.skipped != y.skipped || x.lr != y.lr ||
        x.loss != y.loss || x.f_hat_bound != y.f_hat_bound || x.grad_norm_mean != y.grad_norm_mean ||
        x.grad_norm_var != y.grad_norm_var || x.theorem2_bound != y.theorem2_bound) {
      return false;
    }
  }
  return true;
}

}  // namespace

// ---- data ------------------------------------------------------------------

TEST(ToyDataset, ShapeAndLabels) {
  const auto ds = ToyInstanceDataset::make(ToyDatasetConfig{}, 5);
  EXPECT_EQ(ds.size(), 5000u);
  EXPECT_EQ(ds.class_centers.size(), 10u);
  std::vector<std::size_t> counts(10, 0);
  for (auto l : ds.labels()) counts.at(l)++;
  for (auto c : counts) EXPECT_EQ(c, 500u);
  for (const auto& inst : ds.instances) EXPECT_EQ(inst.latent.size(), 16);
}

TEST(ToyDataset, InstanceSpreadAroundCenters) {
  const auto ds = ToyInstanceDataset::make(ToyDatasetConfig{}, 5);
  RunningStats sq;
  for (const auto& inst : ds.instances) {
    sq.add((inst.latent - ds.class_centers[inst.class_id]).squaredNorm());
  }
  // Chi-square with 16 degrees of freedom times spread^2 = 1.
  EXPECT_NEAR(sq.mean(), 16.0, 3.0 * sq.std_error());
  RunningStats c;
  for (const auto& center : ds.class_centers) {
    for (double v : center) c.add(v / 3.0);
  }
  EXPECT_NEAR(c.mean(), 0.0, 4.0 * c.std_error());
}

TEST(ToyDataset, DeterministicAndValidated) {
  const auto a = small_dataset(64, 9);
  const auto b = small_dataset(64, 9);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.instances[i].latent, b.instances[i].latent);
  ToyDatasetConfig bad;
  bad.n_classes = 1;
  EXPECT_THROW(ToyInstanceDataset::make(bad, 1), ConfigError);
}

TEST(MakeViews, NoNoiseReturnsLatent) {
  SeededRng rng(1);
  const RealVec latent = sample_std_gaussian(rng, 16);
  const auto [a, b] = make_views(latent, 0.0, rng);
  EXPECT_EQ(a, latent);
  EXPECT_EQ(b, latent);
  EXPECT_THROW(make_views(latent, -1.0, rng), PreconditionError);
}

TEST(MakeViews, ReproducibleAndChiSquareMean) {
  SeededRng r1(2), r2(2);
  const RealVec latent = RealVec::Ones(16);
  EXPECT_EQ(make_views(latent, 0.3, r1).first, make_views(latent, 0.3, r2).first);
  RunningStats sq;
  SeededRng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto [a, b] = make_views(latent, 0.3, rng);
    sq.add((a - latent).squaredNorm());
    sq.add((b - latent).squaredNorm());
  }
  EXPECT_NEAR(sq.mean(), 16.0 * 0.09, 3.0 * sq.std_error());
}

TEST(MemoryBank, KeepsLastCapacityKeysInOrder) {
  MemoryBank bank(8);
  for (int i = 0; i < 12; ++i) bank.enqueue(RealVec::Constant(1, i));
  ASSERT_EQ(bank.size(), 8u);
  EXPECT_TRUE(bank.full());
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(bank[i][0], static_cast<double>(i + 4));
}

TEST(MemoryBank, FifoPropertyRandomSequences) {
  SeededRng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t cap = 1 + rng.uniform_index(20);
    const std::size_t total = rng.uniform_index(60);
    MemoryBank bank(cap);
    for (std::size_t i = 0; i < total; ++i) {
      bank.enqueue(RealVec::Constant(1, static_cast<double>(i)));
      ASSERT_LE(bank.size(), cap);
    }
    const std::size_t expect = std::min(total, cap);
    ASSERT_EQ(bank.size(), expect);
    for (std::size_t i = 0; i < expect; ++i) {
      EXPECT_EQ(bank[i][0], static_cast<double>(total - expect + i));
    }
  }
  EXPECT_THROW(MemoryBank(0), ConfigError);
}

TEST(NegativesFromBank, WholeBankAndSubsample) {
  MemoryBank bank(8);
  for (int i = 0; i < 8; ++i) bank.enqueue(RealVec::Constant(1, i));
  SeededRng rng(5);
  const auto all = negatives_from_bank(bank, 8, rng);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(all[i], i);

  SeededRng r1(6), r2(6);
  const auto a = negatives_from_bank(bank, 4, r1);
  EXPECT_EQ(a, negatives_from_bank(bank, 4, r2));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 4u);
  for (auto i : a) EXPECT_LT(i, 8u);

  MemoryBank small(8);
  small.enqueue(RealVec::Zero(1));
  EXPECT_THROW(negatives_from_bank(small, 4, rng), PreconditionError);
}

TEST(NegativesInBatch, Examples) {
  SeededRng rng(7);
  const auto all = negatives_in_batch(8, 3, 7, rng);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 4, 5, 6, 7}));
  for (int trial = 0; trial < 50; ++trial) {
    const auto four = negatives_in_batch(8, 3, 4, rng);
    EXPECT_EQ(std::set<std::size_t>(four.begin(), four.end()).size(), 4u);
    for (auto i : four) {
      EXPECT_NE(i, 3u);
      EXPECT_LT(i, 8u);
    }
  }
  EXPECT_EQ(negatives_in_batch(2, 0, 1, rng), (std::vector<std::size_t>{1}));
  EXPECT_THROW(negatives_in_batch(8, 3, 8, rng), ConfigError);
}

// ---- schedule ----------------------------------------------------------------

TEST(Schedule, ScaledLr) {
  EXPECT_EQ(scaled_lr(0.03, 256, 256), 0.03);
  EXPECT_NEAR(scaled_lr(0.03, 512, 256), 0.06, 1e-17);
  EXPECT_NEAR(scaled_lr(0.03, 64, 256), 0.0075, 1e-17);
  EXPECT_THROW(scaled_lr(0.03, 0, 256), PreconditionError);
}

TEST(Schedule, WarmupThenCosine) {
  const std::size_t total = 100;
  const double peak = 0.5;
  EXPECT_EQ(lr_at_step(0, total, 0.1, peak), 0.0);
  EXPECT_NEAR(lr_at_step(5, total, 0.1, peak), 0.25, 1e-15);
  EXPECT_EQ(lr_at_step(10, total, 0.1, peak), peak);
  const double last = peak * (1.0 + std::cos(std::numbers::pi * 89.0 / 90.0)) / 2.0;
  EXPECT_NEAR(lr_at_step(99, total, 0.1, peak), last, 1e-15);
  double prev = peak;
  for (std::size_t s = 11; s < total; ++s) {
    const double lr = lr_at_step(s, total, 0.1, peak);
    EXPECT_LT(lr, prev);
    EXPECT_GT(lr, 0.0);
    prev = lr;
  }
  EXPECT_EQ(lr_at_step(0, total, 0.0, peak), peak);
  EXPECT_THROW(lr_at_step(100, total, 0.1, peak), PreconditionError);
}

// ---- training ------------------------------------------------------------------

TEST(Train, SmokeLogShape) {
  const auto res = train(smoke_config(), small_dataset());
  ASSERT_EQ(res.status, TrainStatus::Ok);
  ASSERT_EQ(summarize_epochs(res.log).size(), 2u);
  EXPECT_EQ(res.log.size(), 16u);
}

TEST(Train, SmokeLossDecreases) {
  // The key encoder starts as a copy of the query encoder, so the first
  // steps see easy positives; compare the first and last few epochs.
  auto cfg = smoke_config();
  cfg.epochs = 30;
  cfg.beta = 0.99;
  const auto res = train(cfg, small_dataset());
  ASSERT_EQ(res.status, TrainStatus::Ok);
  const auto ep = summarize_epochs(res.log);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    first += ep[i].loss;
    last += ep[ep.size() - 1 - i].loss;
  }
  EXPECT_LT(last, first);
}

TEST(Train, DeterministicForSameSeed) {
  const auto ds = small_dataset();
  const auto a = train(smoke_config(), ds);
  const auto b = train(smoke_config(), ds);
  EXPECT_TRUE(same_log(a.log, b.log));
  EXPECT_EQ(a.encoder.flatten(), b.encoder.flatten());
  auto other = smoke_config();
  other.seed = 4;
  EXPECT_FALSE(same_log(a.log, train(other, ds).log));
}

TEST(Train, EqcoWithAlphaEqualKReproducesPlainTrace) {
  const auto ds = small_dataset();
  auto plain = smoke_config();
  auto eq = smoke_config();
  eq.loss.margin = EqCoMargin{7.0};
  const auto a = train(plain, ds);
  const auto b = train(eq, ds);
  EXPECT_TRUE(same_log(a.log, b.log));
  EXPECT_EQ(a.encoder.flatten(), b.encoder.flatten());
}

TEST(Train, KeyEncoderMovesOnlyByMomentumUpdate) {
  const auto ds = small_dataset();
  auto cfg = smoke_config();
  cfg.beta = 0.9;
  std::size_t calls = 0;
  const auto res = train(cfg, ds, [&](std::size_t, const MlpParams& q, const MlpParams& before,
                                      const MlpParams& after) {
    ++calls;
    const auto fq = q.flatten(), fb = before.flatten(), fa = after.flatten();
    for (std::size_t i = 0; i < fa.size(); ++i) {
      ASSERT_NEAR(fa[i], 0.9 * fb[i] + 0.1 * fq[i], 1e-15 * std::max(1.0, std::abs(fa[i])));
    }
  });
  EXPECT_EQ(calls, res.log.size());
}

TEST(Train, FirstKeyEncoderStepStartsFromQueryInit) {
  const auto ds = small_dataset();
  auto cfg = smoke_config();
  std::vector<double> first_before;
  train(cfg, ds, [&](std::size_t step, const MlpParams&, const MlpParams& before, const MlpParams&) {
    if (step == 0) first_before = before.flatten();
  });
  SeededRng init(derive_seed(cfg.seed, 1));
  const std::vector<std::size_t> dims{16, 16, 8};
  EXPECT_EQ(first_before, init_params(init, dims).flatten());
}

TEST(Train, BankBootstrapSkipsUntilEnoughKeys) {
  const auto ds = small_dataset();
  auto cfg = smoke_config();
  cfg.neg_source = NegativeSource::Bank;
  cfg.loss.k = 16;
  const auto res = train(cfg, ds);
  ASSERT_EQ(res.status, TrainStatus::Ok);
  EXPECT_TRUE(res.log[0].skipped);
  EXPECT_TRUE(res.log[1].skipped);
  for (std::size_t i = 2; i < res.log.size(); ++i) EXPECT_FALSE(res.log[i].skipped);
  EXPECT_EQ(cfg.bank_capacity(), 16u);
}

TEST(Train, BankSmallerThanBatchUsesPreviousBatch) {
  const auto ds = small_dataset();
  auto cfg = smoke_config();
  cfg.neg_source = NegativeSource::Bank;
  cfg.loss.k = 4;
  EXPECT_EQ(cfg.bank_capacity(), 8u);
  const auto res = train(cfg, ds);
  EXPECT_TRUE(res.log[0].skipped);
  EXPECT_FALSE(res.log[1].skipped);
}

TEST(Train, LoggedBoundDominatesGradNorms) {
  const auto ds = small_dataset();
  for (auto src : {NegativeSource::Bank, NegativeSource::InBatch, NegativeSource::InBatchSubsample}) {
    auto cfg = smoke_config();
    cfg.neg_source = src;
    cfg.loss = LossConfig{0.2, EqCoMargin{64.0}, 4};
    const auto res = train(cfg, ds);
    for (const auto& e : summarize_epochs(res.log)) {
      const double se = std::sqrt(e.grad_norm_var / static_cast<double>(e.samples));
      EXPECT_LE(e.grad_norm_mean, e.theorem2_bound + 3.0 * se) << to_string(src);
    }
  }
}

TEST(Train, ConfigErrors) {
  const auto ds = small_dataset();
  auto cfg = smoke_config();
  cfg.loss.k = 8;
  EXPECT_THROW(train(cfg, ds), ConfigError);
  cfg = smoke_config();
  cfg.epochs = 0;
  EXPECT_THROW(train(cfg, ds), ConfigError);
  cfg = smoke_config();
  cfg.n_queries = 128;
  EXPECT_THROW(train(cfg, ds), ConfigError);
  EXPECT_THROW(negative_source_from_string("queue"), ConfigError);
  EXPECT_EQ(negative_source_from_string("subsample"), NegativeSource::InBatchSubsample);
}

TEST(Train, DivergenceReportsNumericFailure) {
  const auto ds = small_dataset();
  auto cfg = smoke_config();
  cfg.base_lr = 1e250;
  const auto res = train(cfg, ds);
  EXPECT_EQ(res.status, TrainStatus::NumericFailure);
  EXPECT_FALSE(res.message.empty());
  EXPECT_LT(res.log.size(), 16u);
  for (const auto& r : res.log) EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Train, LossDecreasesOnDefaultDatasetAcrossSweepGrid) {
  const auto ds = ToyInstanceDataset::make(ToyDatasetConfig{}, derive_seed(0, 100));
  for (bool eqco : {false, true}) {
    for (std::size_t k : {4u, 16u, 64u, 256u}) {
      TrainConfig cfg;
      cfg.neg_source = NegativeSource::Bank;
      cfg.loss = eqco ? LossConfig{0.2, EqCoMargin{256.0}, k} : LossConfig{0.2, FixedMargin{0.0}, k};
      cfg.epochs = 4;
      const auto ep = summarize_epochs(train(cfg, ds).log);
      EXPECT_LT(ep.back().loss, ep.front().loss) << "k=" << k << " eqco=" << eqco;
    }
  }
}

TEST(SimoPreset, InBatchWithWarmup) {
  const auto cfg = simo_preset(128, 127, 256.0);
  EXPECT_EQ(cfg.neg_source, NegativeSource::InBatch);
  EXPECT_TRUE(cfg.loss.is_eqco());
  EXPECT_GT(cfg.warmup_frac, 0.0);
  EXPECT_NO_THROW(cfg.validate());
}

// ---- probe -------------------------------------------------------------------

TEST(LinearProbe, SeparableClassesAreLearned) {
  SeededRng rng(1);
  std::vector<RealVec> emb;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 400; ++i) {
    const std::size_t c = i % 2;
    RealVec v(2);
    v << (c ? 1.0 : -1.0), 0.3 * (rng.uniform() - 0.5);
    emb.push_back(l2_normalize(v));
    labels.push_back(c);
  }
  SeededRng prng(2);
  EXPECT_EQ(linear_probe(emb, labels, 0.8, prng), 1.0);
}

TEST(LinearProbe, ShuffledLabelsGiveChance) {
  SeededRng rng(3);
  std::vector<RealVec> emb;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 4000; ++i) {
    emb.push_back(eqco::testing::random_unit(rng, 4));
    labels.push_back(rng.uniform_index(2));
  }
  SeededRng prng(4);
  const double acc = linear_probe(emb, labels, 0.5, prng);
  const double sigma = std::sqrt(0.25 / 2000.0);
  EXPECT_NEAR(acc, 0.5, 3.0 * sigma);
}

TEST(LinearProbe, IdenticalEmbeddingsPredictMajority) {
  std::vector<RealVec> emb(100, RealVec::Unit(3, 0));
  std::vector<std::size_t> labels(100, 2);
  for (int i = 0; i < 30; ++i) labels[i] = 0;
  for (int i = 30; i < 40; ++i) labels[i] = 1;
  SeededRng prng(5);
  // Constant features: the learned bias tracks class frequencies, so class 2
  // wins everywhere; with a balanced split this is the majority frequency.
  const double acc = linear_probe(emb, labels, 0.5, prng);
  std::size_t majority = 0;
  // Recompute the held-out majority frequency from the same split.
  SeededRng split(5);
  const auto perm = sample_without_replacement(split, 100, 100);
  for (std::size_t i = 50; i < 100; ++i) majority += labels[perm[i]] == 2;
  EXPECT_DOUBLE_EQ(acc, static_cast<double>(majority) / 50.0);
}

TEST(LinearProbe, TieBreaksTowardLowestClass) {
  // Two perfectly balanced classes on identical inputs: logits stay equal,
  // so every prediction is class 0.
  std::vector<RealVec> emb(8, RealVec::Unit(2, 1));
  std::vector<std::size_t> labels{0, 1, 0, 1, 0, 1, 0, 1};
  // Find a seed whose training split is balanced, then check the tie rule.
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SeededRng split(seed);
    const auto perm = sample_without_replacement(split, 8, 8);
    std::size_t ones = 0;
    for (std::size_t i = 0; i < 4; ++i) ones += labels[perm[i]];
    if (ones != 2) continue;
    SeededRng prng(seed);
    std::size_t test_zeros = 0;
    for (std::size_t i = 4; i < 8; ++i) test_zeros += labels[perm[i]] == 0;
    EXPECT_DOUBLE_EQ(linear_probe(emb, labels, 0.5, prng), test_zeros / 4.0);
    return;
  }
  FAIL() << "no balanced split found";
}

TEST(LinearProbe, SingleClassTrainSplitIsDomainError) {
  std::vector<RealVec> emb(10, RealVec::Unit(2, 0));
  std::vector<std::size_t> labels(10, 1);
  SeededRng prng(6);
  EXPECT_THROW(linear_probe(emb, labels, 0.5, prng), DomainError);
}
