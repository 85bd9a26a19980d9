#pragma once

#include <cstddef>
#include <utility>

#include "eqco/math.hpp"

namespace eqco {

/// Jointly Gaussian (q, k) with standard-normal marginals, independent
/// coordinates and per-coordinate correlation rho: k | q ~ N(rho q, (1 - rho^2) I).
struct CorrelatedGaussian {
  std::size_t dim = 1;
  double rho = 0.9;

  void validate() const;
  std::pair<RealVec, RealVec> sample_pair(SeededRng& rng) const;
  RealVec sample_marginal(SeededRng& rng) const;
};

/// Monte-Carlo estimate with its standard error (sample std / sqrt(n)).
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Loss / bound bookkeeping. Holds bound + loss == log_normalizer(tau, m, k).
struct BoundReport {
  std::size_t k = 0;
  double alpha = 0.0;
  double m = 0.0;
  double tau = 0.0;
  double loss = 0.0;
  double bound = 0.0;
  double true_mi = 0.0;
  bool has_true_mi = false;
};

/// -(d/2) ln(1 - rho^2) nats.
double true_mi(const CorrelatedGaussian& dist);

/// ln N(k; rho q, (1-rho^2) I) - ln N(k; 0, I).
double log_density_ratio(const CorrelatedGaussian& dist, const RealVec& q, const RealVec& k);

/// Loss of the Bayes-optimal critic:
///   E ln(1 + w * [P(k0)/P(k0|q)] * sum_i P(k_i|q)/P(k_i)),  w = e^{m/tau},
/// with (q, k0) from the joint and k_i from the marginal. n_samples >= 1000.
McEstimate optimal_loss_mc(const CorrelatedGaussian& dist, double weight, std::size_t k,
                           std::size_t n_samples, SeededRng& rng);

/// ln(1 + W) - E ln(1 + W P(k0)/P(k0|q)) over the positive joint, W = K e^{m/tau}.
/// n_samples >= 1000.
McEstimate theoretical_bound_mc(const CorrelatedGaussian& dist, double combined_weight,
                                std::size_t n_samples, SeededRng& rng);

/// ln(1 + K e^{m/tau}) - loss.
double empirical_bound(double loss_nce, double tau, double m, std::size_t k);

BoundReport make_bound_report(double loss_nce, double tau, double m, std::size_t k);

}  // namespace eqco
