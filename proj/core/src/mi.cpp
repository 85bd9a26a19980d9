#include "eqco/mi.hpp"

#include <cmath>
#include <vector>

#include "eqco/errors.hpp"
#include "eqco/infonce.hpp"

namespace eqco {
namespace {

constexpr std::size_t kMinMcSamples = 1000;

void check_samples(std::size_t n, const char* what) {
  if (n < kMinMcSamples) throw PreconditionError(std::string(what) + ": n_samples must be >= 1000");
}

}  // namespace

void CorrelatedGaussian::validate() const {
  if (dim == 0) throw DomainError("CorrelatedGaussian: dim must be positive");
  if (!(std::abs(rho) < 1.0)) throw DomainError("CorrelatedGaussian: |rho| must be < 1");
}

std::pair<RealVec, RealVec> CorrelatedGaussian::sample_pair(SeededRng& rng) const {
  const double cond_std = std::sqrt(1.0 - rho * rho);
  RealVec q = sample_std_gaussian(rng, dim);
  RealVec noise = sample_std_gaussian(rng, dim);
  RealVec k = rho * q + cond_std * noise;
  return {std::move(q), std::move(k)};
}

RealVec CorrelatedGaussian::sample_marginal(SeededRng& rng) const {
  return sample_std_gaussian(rng, dim);
}

double true_mi(const CorrelatedGaussian& dist) {
  dist.validate();
  return -0.5 * static_cast<double>(dist.dim) * std::log1p(-dist.rho * dist.rho);
}

double log_density_ratio(const CorrelatedGaussian& dist, const RealVec& q, const RealVec& k) {
  dist.validate();
  const auto d = static_cast<Eigen::Index>(dist.dim);
  if (q.size() != d || k.size() != d) throw DomainError("log_density_ratio: dimension mismatch");
  const double var = 1.0 - dist.rho * dist.rho;
  // Normalizing constants: -(d/2) ln var relative to the unit-variance marginal.
  const double cond_quad = (k - dist.rho * q).squaredNorm() / var;
  const double marg_quad = k.squaredNorm();
  return -0.5 * static_cast<double>(dist.dim) * std::log(var) - 0.5 * cond_quad + 0.5 * marg_quad;
}

McEstimate optimal_loss_mc(const CorrelatedGaussian& dist, double weight, std::size_t k,
                           std::size_t n_samples, SeededRng& rng) {
  dist.validate();
  check_samples(n_samples, "optimal_loss_mc");
  if (!(weight > 0.0) || !std::isfinite(weight)) throw DomainError("optimal_loss_mc: weight must be positive");
  if (k == 0) throw DomainError("optimal_loss_mc: k must be at least 1");
  const double log_w = std::log(weight);
  RunningStats stats;
  std::vector<double> neg_ratios(k);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const auto [q, k0] = dist.sample_pair(rng);
    for (std::size_t i = 0; i < k; ++i) {
      neg_ratios[i] = log_density_ratio(dist, q, dist.sample_marginal(rng));
    }
    // ln(1 + exp(ln w - ldr(k0) + lse_i ldr(k_i)))
    stats.add(softplus(log_w - log_density_ratio(dist, q, k0) + log_sum_exp(neg_ratios)));
  }
  return {stats.mean(), stats.std_error(), n_samples};
}

McEstimate theoretical_bound_mc(const CorrelatedGaussian& dist, double combined_weight,
                                std::size_t n_samples, SeededRng& rng) {
  dist.validate();
  check_samples(n_samples, "theoretical_bound_mc");
  if (!(combined_weight > 0.0) || !std::isfinite(combined_weight)) {
    throw DomainError("theoretical_bound_mc: weight must be positive");
  }
  const double log_w = std::log(combined_weight);
  const double normalizer = std::log1p(combined_weight);
  RunningStats stats;
  for (std::size_t n = 0; n < n_samples; ++n) {
    const auto [q, k0] = dist.sample_pair(rng);
    stats.add(normalizer - softplus(log_w - log_density_ratio(dist, q, k0)));
  }
  return {stats.mean(), stats.std_error(), n_samples};
}

double empirical_bound(double loss_nce, double tau, double m, std::size_t k) {
  if (!std::isfinite(loss_nce)) throw NumericError("empirical_bound: loss must be finite");
  return log_normalizer(tau, m, k) - loss_nce;
}

BoundReport make_bound_report(double loss_nce, double tau, double m, std::size_t k) {
  BoundReport r;
  r.k = k;
  r.tau = tau;
  r.m = m;
  r.alpha = static_cast<double>(k) * std::exp(m / tau);
  r.loss = loss_nce;
  r.bound = empirical_bound(loss_nce, tau, m, k);
  return r;
}

}  // namespace eqco
