#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "eqco/math.hpp"

namespace eqco {

/// Constant margin m subtracted from the positive logit. Negatives keep weight 1.
struct FixedMargin {
  double m = 0.0;
};

/// Equivalent-rule margin m = tau * ln(alpha / K). alpha acts as the virtual
/// number of negatives, independent of the physical count K.
struct EqCoMargin {
  double alpha = 256.0;
};

using MarginMode = std::variant<FixedMargin, EqCoMargin>;

struct LossConfig {
  double tau = 0.2;
  MarginMode margin = FixedMargin{};
  std::size_t k = 1;

  /// Throws DomainError on tau <= 0, alpha <= 0 or k == 0.
  void validate() const;
  bool is_eqco() const { return std::holds_alternative<EqCoMargin>(margin); }
  /// m for Fixed, tau * ln(alpha / K) for EqCo.
  double effective_margin() const;
  /// K * e^{m / tau}; equals alpha in EqCo mode.
  double effective_alpha() const;
};

/// One query with its positive key and K negative keys, all unit vectors.
struct QueryInstance {
  RealVec q;
  RealVec k0;
  std::vector<RealVec> negs;
};

struct LossGrad {
  double value = 0.0;
  /// Softmax probability of the positive, strictly inside (0, 1) for finite logits.
  double p0 = 0.0;
  RealVec grad_q;
  RealVec grad_k0;
  std::vector<RealVec> grad_negs;
};

/// Loss and logit-level derivatives for one query given its similarities.
/// d loss / d(q.k0) = pos_coef, d loss / d(q.k_i) = neg_coefs[i].
struct SimilarityLoss {
  double value = 0.0;
  double p0 = 0.0;
  double pos_coef = 0.0;
  std::vector<double> neg_coefs;
};

/// tau * ln(alpha / K).
double eqco_margin(double tau, double alpha, std::size_t k);

/// ln(1 + K e^{m/tau}): the constant that turns a loss into a bound.
double log_normalizer(double tau, double margin, std::size_t k);

/// Hot-path loss on precomputed similarities. EqCo mode evaluates the
/// weighted form (negatives scaled by alpha/K); Fixed mode shifts the
/// positive logit by m.
SimilarityLoss infonce_from_similarities(double pos_sim, std::span<const double> neg_sims,
                                         const LossConfig& cfg);

/// Margin form: -ln softmax_0 with logits (q.k0 - m)/tau and q.k_i/tau.
double infonce_forward(const QueryInstance& inst, const LossConfig& cfg);

/// Weighted form: -ln s0 / (s0 + (alpha/K) sum s_i), s_i = e^{q.k_i/tau}.
double infonce_forward_weighted(const QueryInstance& inst, double tau, double alpha);

/// Analytic gradients w.r.t. q, k0 and every negative.
LossGrad infonce_grad(const QueryInstance& inst, const LossConfig& cfg);

/// Mean loss over a batch of queries sharing one configuration.
double infonce_batch_mean(std::span<const QueryInstance> batch, const LossConfig& cfg);

/// (2/tau)(1 - s0 / (s0 + (alpha/K) sum s_i)); upper-bounds ||dL/dq||.
double grad_norm_bound_pointwise(const QueryInstance& inst, double tau, double alpha);

using KeySampler = std::function<RealVec(SeededRng&)>;

struct ExpectationBound {
  /// Monte-Carlo mean of ||dL/dq|| over fresh negative draws.
  double mc_mean_norm = 0.0;
  double mc_std_error = 0.0;
  /// (2/tau)(1 - s0 / (s0 + alpha * E[s_i])).
  double theorem_bound = 0.0;
  /// E[s_i] estimate and its standard error.
  double mean_s = 0.0;
  double mean_s_std_error = 0.0;
  /// Standard error of theorem_bound propagated from mean_s (delta method).
  double bound_std_error = 0.0;
  std::size_t samples = 0;
};

/// Checks the expected-gradient-norm bound by Monte Carlo: each of
/// `mc_samples` draws takes K fresh negatives from `key_sampler`.
/// Requires mc_samples >= 1000.
ExpectationBound grad_norm_bound_expectation(const RealVec& q, const RealVec& k0,
                                             const KeySampler& key_sampler, double tau,
                                             double alpha, std::size_t k,
                                             std::size_t mc_samples, SeededRng& rng);

}  // namespace eqco
