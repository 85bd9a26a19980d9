#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "eqco/errors.hpp"
#include "eqco/infonce.hpp"
#include "support.hpp"

using namespace eqco;
using eqco::testing::fd_gradient;
using eqco::testing::naive_loss;
using eqco::testing::random_instance;
using eqco::testing::random_unit;
using eqco::testing::rel_error;

namespace {

LossConfig fixed(double tau, double m, std::size_t k) { return LossConfig{tau, FixedMargin{m}, k}; }
LossConfig eqco_cfg(double tau, double alpha, std::size_t k) {
  return LossConfig{tau, EqCoMargin{alpha}, k};
}

// q = e1, every key orthogonal to it: all logits equal zero.
QueryInstance equal_logit_instance(std::size_t k) {
  QueryInstance inst;
  inst.q = RealVec::Unit(4, 0);
  inst.k0 = RealVec::Unit(4, 1);
  for (std::size_t i = 0; i < k; ++i) inst.negs.push_back(RealVec::Unit(4, 1 + (i % 3)));
  return inst;
}

}  // namespace

TEST(EqcoMargin, Examples) {
  EXPECT_EQ(eqco_margin(0.2, 64.0, 64), 0.0);
  EXPECT_NEAR(eqco_margin(0.2, 256.0, 4), 0.2 * std::log(64.0), 1e-15);
  EXPECT_NEAR(eqco_margin(0.5, 4.0, 16), 0.5 * std::log(0.25), 1e-15);
  EXPECT_THROW(eqco_margin(0.0, 4.0, 4), DomainError);
  EXPECT_THROW(eqco_margin(0.2, -1.0, 4), DomainError);
  EXPECT_THROW(eqco_margin(0.2, 4.0, 0), DomainError);
}

TEST(LogNormalizer, EqcoIdentity) {
  SeededRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double tau = 0.05 + 0.95 * rng.uniform();
    const double alpha = std::pow(10.0, 5.0 * rng.uniform());
    const std::size_t k = 1 + rng.uniform_index(4096);
    const double lhs = log_normalizer(tau, eqco_margin(tau, alpha, k), k);
    EXPECT_NEAR(lhs, std::log1p(alpha), 1e-12 * std::max(1.0, std::log1p(alpha)));
  }
}

TEST(Forward, EqualLogitsGiveLogKPlusOne) {
  for (std::size_t k : {1u, 4u, 64u}) {
    const auto inst = equal_logit_instance(k);
    EXPECT_NEAR(infonce_forward(inst, fixed(0.2, 0.0, k)), std::log(k + 1.0), 1e-14);
  }
}

TEST(Forward, MatchesNaiveOracle) {
  SeededRng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(32);
    const auto inst = random_instance(rng, 8, k);
    const double tau = 0.05 + rng.uniform();
    const double m = (rng.uniform() - 0.5);
    const auto cfg = fixed(tau, m, k);
    const double ref = naive_loss(inst, cfg);
    EXPECT_NEAR(infonce_forward(inst, cfg), ref, 1e-12 * std::max(1.0, ref));
    const auto ecfg = eqco_cfg(tau, 1.0 + 1000.0 * rng.uniform(), k);
    const double eref = naive_loss(inst, ecfg);
    EXPECT_NEAR(infonce_forward(inst, ecfg), eref, 1e-12 * std::max(1.0, eref));
  }
}

TEST(Forward, MarginAndWeightedFormsAgree) {
  SeededRng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(64);
    const auto inst = random_instance(rng, 16, k);
    const double tau = 0.05 + 0.95 * rng.uniform();
    const double alpha = std::pow(10.0, 5.0 * rng.uniform());
    const double a = infonce_forward(inst, eqco_cfg(tau, alpha, k));
    const double b = infonce_forward_weighted(inst, tau, alpha);
    EXPECT_NEAR(a, b, 1e-12 * std::abs(b));
  }
}

TEST(Forward, AlphaEqualsKIsPlainInfoNce) {
  SeededRng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(64);
    const auto inst = random_instance(rng, 8, k);
    const double tau = 0.05 + rng.uniform();
    const auto a = infonce_grad(inst, eqco_cfg(tau, static_cast<double>(k), k));
    const auto b = infonce_grad(inst, fixed(tau, 0.0, k));
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.p0, b.p0);
    EXPECT_EQ(a.grad_q, b.grad_q);
  }
}

TEST(Forward, ExtremeLogitsStayFinite) {
  QueryInstance inst;
  inst.q = RealVec::Unit(3, 0);
  inst.k0 = RealVec::Unit(3, 0);
  inst.negs = {-RealVec::Unit(3, 0), RealVec::Unit(3, 1)};
  const double loss = infonce_forward(inst, fixed(0.01, 0.0, 2));
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0);
  EXPECT_NEAR(loss, std::exp(-100.0), 1e-12 * std::exp(-100.0));
  inst.k0 = -RealVec::Unit(3, 0);
  inst.negs = {RealVec::Unit(3, 0), RealVec::Unit(3, 1)};
  EXPECT_NEAR(infonce_forward(inst, fixed(0.01, 0.0, 2)), 200.0, 1e-10);
}

TEST(Forward, Preconditions) {
  auto inst = equal_logit_instance(2);
  EXPECT_THROW(infonce_forward(inst, fixed(0.2, 0.0, 3)), DomainError);
  EXPECT_THROW(infonce_forward(inst, fixed(-0.2, 0.0, 2)), DomainError);
  inst.q *= 2.0;
  EXPECT_THROW(infonce_forward(inst, fixed(0.2, 0.0, 2)), DomainError);
  inst = equal_logit_instance(2);
  inst.negs.clear();
  EXPECT_THROW(infonce_forward_weighted(inst, 0.2, 4.0), DomainError);
}

TEST(Gradient, MatchesFiniteDifferences) {
  SeededRng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(12);
    const std::size_t dim = 2 + rng.uniform_index(10);
    const auto inst = random_instance(rng, dim, k);
    const double tau = 0.1 + 0.9 * rng.uniform();
    const LossConfig cfg = trial % 2 ? eqco_cfg(tau, 1.0 + 500.0 * rng.uniform(), k)
                                     : fixed(tau, rng.uniform() - 0.5, k);
    const auto g = infonce_grad(inst, cfg);

    const RealVec gq = fd_gradient(
        [&](const RealVec& q) {
          auto p = inst;
          p.q = q;
          return naive_loss(p, cfg);
        },
        inst.q);
    EXPECT_LT(rel_error(g.grad_q, gq), 1e-5);
    const RealVec gk0 = fd_gradient(
        [&](const RealVec& k0) {
          auto p = inst;
          p.k0 = k0;
          return naive_loss(p, cfg);
        },
        inst.k0);
    EXPECT_LT(rel_error(g.grad_k0, gk0), 1e-5);
    for (std::size_t i = 0; i < k; ++i) {
      const RealVec gi = fd_gradient(
          [&](const RealVec& ki) {
            auto p = inst;
            p.negs[i] = ki;
            return naive_loss(p, cfg);
          },
          inst.negs[i]);
      EXPECT_LT(rel_error(g.grad_negs[i], gi), 1e-5);
    }
  }
}

TEST(Gradient, SimilarityCoefficientsSumToZero) {
  // Softmax cross-entropy: d loss / d logits sums to zero once the negative
  // weights are folded in, so pos_coef = -sum neg_coefs.
  SeededRng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(30);
    std::vector<double> sims(k);
    for (auto& s : sims) s = 2.0 * rng.uniform() - 1.0;
    const auto cfg = eqco_cfg(0.2, 1.0 + 100.0 * rng.uniform(), k);
    const auto t = infonce_from_similarities(2.0 * rng.uniform() - 1.0, sims, cfg);
    double sum = 0.0;
    for (double c : t.neg_coefs) sum += c;
    EXPECT_NEAR(t.pos_coef + sum, 0.0, 1e-12);
    EXPECT_GT(t.p0, 0.0);
    EXPECT_LT(t.p0, 1.0);
    EXPECT_NEAR(t.pos_coef, -(1.0 - t.p0) / 0.2, 1e-12);
  }
}

TEST(Gradient, PointwiseBoundHolds) {
  SeededRng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(64);
    const auto inst = random_instance(rng, 2 + rng.uniform_index(16), k);
    const double tau = 0.05 + 0.95 * rng.uniform();
    const double alpha = std::pow(10.0, 4.0 * rng.uniform());
    const auto g = infonce_grad(inst, eqco_cfg(tau, alpha, k));
    const double bound = grad_norm_bound_pointwise(inst, tau, alpha);
    EXPECT_NEAR(bound, 2.0 / tau * (1.0 - g.p0), 1e-12 * bound);
    EXPECT_LE(g.grad_q.norm(), bound * (1.0 + 1e-12));
  }
}

TEST(Gradient, PointwiseBoundIsAttainedByAntipodalKeys) {
  // k0 = -q and all negatives = q: the two gradient terms align.
  QueryInstance inst;
  inst.q = RealVec::Unit(3, 0);
  inst.k0 = -inst.q;
  inst.negs = {inst.q, inst.q};
  const double tau = 0.5;
  const auto g = infonce_grad(inst, fixed(tau, 0.0, 2));
  EXPECT_NEAR(g.grad_q.norm(), grad_norm_bound_pointwise(inst, tau, 2.0), 1e-12);
}

TEST(BatchMean, AveragesInstances) {
  SeededRng rng(8);
  std::vector<QueryInstance> batch;
  double sum = 0.0;
  const auto cfg = fixed(0.3, 0.1, 5);
  for (int i = 0; i < 10; ++i) {
    batch.push_back(random_instance(rng, 6, 5));
    sum += infonce_forward(batch.back(), cfg);
  }
  EXPECT_NEAR(infonce_batch_mean(batch, cfg), sum / 10.0, 1e-14);
  EXPECT_THROW(infonce_batch_mean(std::vector<QueryInstance>{}, cfg), PreconditionError);
}

TEST(ExpectationBound, HoldsWithinMonteCarloError) {
  SeededRng rng(9);
  const std::size_t dim = 8;
  for (double tau : {0.1, 0.2, 0.5}) {
    for (std::size_t k : {4u, 64u}) {
      const RealVec q = random_unit(rng, dim);
      const RealVec k0 = l2_normalize(q + 0.5 * random_unit(rng, dim));
      const KeySampler sampler = [dim](SeededRng& r) { return random_unit(r, dim); };
      const auto res = grad_norm_bound_expectation(q, k0, sampler, tau, 256.0, k, 1000, rng);
      const double slack =
          3.0 * std::sqrt(res.mc_std_error * res.mc_std_error +
                          res.bound_std_error * res.bound_std_error);
      EXPECT_LE(res.mc_mean_norm, res.theorem_bound + slack) << "tau=" << tau << " k=" << k;
    }
  }
}

TEST(ExpectationBound, RequiresEnoughSamples) {
  SeededRng rng(10);
  const RealVec q = RealVec::Unit(3, 0);
  const KeySampler sampler = [](SeededRng& r) { return random_unit(r, 3); };
  EXPECT_THROW(grad_norm_bound_expectation(q, q, sampler, 0.2, 16.0, 4, 999, rng),
               PreconditionError);
}
