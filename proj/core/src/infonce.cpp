#include "eqco/infonce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eqco/errors.hpp"

namespace eqco {
namespace {

constexpr double kUnitTolerance = 1e-9;

void check_unit(const RealVec& v, Eigen::Index dim, const char* what) {
  if (v.size() != dim) {
    throw DomainError(std::string("infonce: dimension mismatch in ") + what);
  }
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > kUnitTolerance) {
    throw DomainError(std::string("infonce: ") + what + " is not a unit vector");
  }
}

void check_instance(const QueryInstance& inst) {
  const Eigen::Index dim = inst.q.size();
  if (dim == 0) throw DomainError("infonce: empty query");
  check_unit(inst.q, dim, "q");
  check_unit(inst.k0, dim, "k0");
  if (inst.negs.empty()) throw DomainError("infonce: at least one negative is required");
  for (const auto& neg : inst.negs) check_unit(neg, dim, "negative key");
}

void check_tau_alpha(double tau, double alpha) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("infonce: tau must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("infonce: alpha must be positive");
}

std::vector<double> negative_similarities(const QueryInstance& inst) {
  std::vector<double> sims(inst.negs.size());
  for (std::size_t i = 0; i < sims.size(); ++i) sims[i] = inst.q.dot(inst.negs[i]);
  return sims;
}

// sigmoid(x) = 1 / (1 + e^{-x}) evaluated without overflow.
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("LossConfig: tau must be positive");
  if (k == 0) throw DomainError("LossConfig: k must be at least 1");
  if (const auto* eq = std::get_if<EqCoMargin>(&margin)) {
    if (!(eq->alpha > 0.0) || !std::isfinite(eq->alpha)) {
      throw DomainError("LossConfig: alpha must be positive");
    }
  } else if (!std::isfinite(std::get<FixedMargin>(margin).m)) {
    throw DomainError("LossConfig: margin must be finite");
  }
}

double LossConfig::effective_margin() const {
  if (const auto* eq = std::get_if<EqCoMargin>(&margin)) return eqco_margin(tau, eq->alpha, k);
  return std::get<FixedMargin>(margin).m;
}

double LossConfig::effective_alpha() const {
  if (const auto* eq = std::get_if<EqCoMargin>(&margin)) return eq->alpha;
  return static_cast<double>(k) * std::exp(std::get<FixedMargin>(margin).m / tau);
}

double eqco_margin(double tau, double alpha, std::size_t k) {
  check_tau_alpha(tau, alpha);
  if (k == 0) throw DomainError("eqco_margin: k must be at least 1");
  return tau * std::log(alpha / static_cast<double>(k));
}

double log_normalizer(double tau, double margin, std::size_t k) {
  if (!(tau > 0.0)) throw DomainError("log_normalizer: tau must be positive");
  if (k == 0) throw DomainError("log_normalizer: k must be at least 1");
  // ln(1 + e^{ln K + m/tau})
  return softplus(std::log(static_cast<double>(k)) + margin / tau);
}

SimilarityLoss infonce_from_similarities(double pos_sim, std::span<const double> neg_sims,
                                         const LossConfig& cfg) {
  cfg.validate();
  if (neg_sims.size() != cfg.k) {
    throw DomainError("infonce: negative count does not match LossConfig.k");
  }
  const double inv_tau = 1.0 / cfg.tau;
  std::vector<double> neg_logits(neg_sims.size());
  for (std::size_t i = 0; i < neg_sims.size(); ++i) neg_logits[i] = neg_sims[i] * inv_tau;
  const double neg_lse = log_sum_exp(neg_logits);

  // x = ln(weighted negative mass) - positive logit; loss = softplus(x).
  double x;
  if (const auto* eq = std::get_if<EqCoMargin>(&cfg.margin)) {
    x = neg_lse + std::log(eq->alpha / static_cast<double>(cfg.k)) - pos_sim * inv_tau;
  } else {
    x = neg_lse - (pos_sim - std::get<FixedMargin>(cfg.margin).m) * inv_tau;
  }
  if (std::isnan(x)) throw NumericError("infonce: non-finite logits");

  SimilarityLoss out;
  out.value = softplus(x);
  const double one_minus_p0 = sigmoid(x);
  out.p0 = sigmoid(-x);
  out.pos_coef = -one_minus_p0 * inv_tau;
  out.neg_coefs.resize(neg_sims.size());
  for (std::size_t i = 0; i < neg_sims.size(); ++i) {
    out.neg_coefs[i] = one_minus_p0 * std::exp(neg_logits[i] - neg_lse) * inv_tau;
  }
  return out;
}

double infonce_forward(const QueryInstance& inst, const LossConfig& cfg) {
  cfg.validate();
  check_instance(inst);
  if (inst.negs.size() != cfg.k) throw DomainError("infonce: negs length must equal k");
  const double m = cfg.effective_margin();
  const double pos_logit = (inst.q.dot(inst.k0) - m) / cfg.tau;
  std::vector<double> neg_logits = negative_similarities(inst);
  for (double& v : neg_logits) v /= cfg.tau;
  if (!std::isfinite(pos_logit)) throw NumericError("infonce: non-finite positive logit");
  // -ln softmax_0 = ln(1 + e^{lse(neg) - pos}); the softplus keeps tiny losses exact.
  return softplus(log_sum_exp(neg_logits) - pos_logit);
}

double infonce_forward_weighted(const QueryInstance& inst, double tau, double alpha) {
  check_tau_alpha(tau, alpha);
  check_instance(inst);
  const double k = static_cast<double>(inst.negs.size());
  const double pos_logit = inst.q.dot(inst.k0) / tau;
  const std::vector<double> sims = negative_similarities(inst);
  double shift = pos_logit;
  for (double s : sims) shift = std::max(shift, s / tau);
  const double s0 = std::exp(pos_logit - shift);
  double neg_mass = 0.0;
  for (double s : sims) neg_mass += std::exp(s / tau - shift);
  const double ratio = (alpha / k) * neg_mass / s0;
  if (!std::isfinite(ratio)) throw NumericError("infonce_forward_weighted: overflow");
  return std::log1p(ratio);
}

LossGrad infonce_grad(const QueryInstance& inst, const LossConfig& cfg) {
  check_instance(inst);
  if (inst.negs.size() != cfg.k) throw DomainError("infonce: negs length must equal k");
  const std::vector<double> sims = negative_similarities(inst);
  const SimilarityLoss terms = infonce_from_similarities(inst.q.dot(inst.k0), sims, cfg);

  LossGrad out;
  out.value = terms.value;
  out.p0 = terms.p0;
  out.grad_q = terms.pos_coef * inst.k0;
  out.grad_k0 = terms.pos_coef * inst.q;
  out.grad_negs.reserve(inst.negs.size());
  for (std::size_t i = 0; i < inst.negs.size(); ++i) {
    out.grad_q += terms.neg_coefs[i] * inst.negs[i];
    out.grad_negs.push_back(terms.neg_coefs[i] * inst.q);
  }
  if (!out.grad_q.allFinite()) throw NumericError("infonce_grad: non-finite gradient");
  return out;
}

double infonce_batch_mean(std::span<const QueryInstance> batch, const LossConfig& cfg) {
  if (batch.empty()) throw PreconditionError("infonce_batch_mean: empty batch");
  double sum = 0.0;
  for (const auto& inst : batch) sum += infonce_forward(inst, cfg);
  return sum / static_cast<double>(batch.size());
}

double grad_norm_bound_pointwise(const QueryInstance& inst, double tau, double alpha) {
  check_tau_alpha(tau, alpha);
  check_instance(inst);
  LossConfig cfg{tau, EqCoMargin{alpha}, inst.negs.size()};
  const auto terms = infonce_from_similarities(inst.q.dot(inst.k0), negative_similarities(inst), cfg);
  return 2.0 / tau * (1.0 - terms.p0);
}

ExpectationBound grad_norm_bound_expectation(const RealVec& q, const RealVec& k0,
                                             const KeySampler& key_sampler, double tau,
                                             double alpha, std::size_t k,
                                             std::size_t mc_samples, SeededRng& rng) {
  check_tau_alpha(tau, alpha);
  if (k == 0) throw DomainError("grad_norm_bound_expectation: k must be at least 1");
  if (mc_samples < 1000) {
    throw PreconditionError("grad_norm_bound_expectation: mc_samples must be >= 1000");
  }
  const Eigen::Index dim = q.size();
  check_unit(q, dim, "q");
  check_unit(k0, dim, "k0");

  const LossConfig cfg{tau, EqCoMargin{alpha}, k};
  const double pos_sim = q.dot(k0);
  RunningStats norms;
  RunningStats s_values;
  std::vector<double> sims(k);
  RealVec grad(dim);
  std::vector<RealVec> keys(k);
  for (std::size_t draw = 0; draw < mc_samples; ++draw) {
    for (std::size_t i = 0; i < k; ++i) {
      keys[i] = key_sampler(rng);
      check_unit(keys[i], dim, "sampled key");
      sims[i] = q.dot(keys[i]);
      s_values.add(std::exp(sims[i] / tau));
    }
    const auto terms = infonce_from_similarities(pos_sim, sims, cfg);
    grad = terms.pos_coef * k0;
    for (std::size_t i = 0; i < k; ++i) grad += terms.neg_coefs[i] * keys[i];
    norms.add(grad.norm());
  }

  ExpectationBound out;
  out.samples = mc_samples;
  out.mc_mean_norm = norms.mean();
  out.mc_std_error = norms.std_error();
  out.mean_s = s_values.mean();
  out.mean_s_std_error = s_values.std_error();
  const double s0 = std::exp(pos_sim / tau);
  const double denom = s0 + alpha * out.mean_s;
  out.theorem_bound = 2.0 / tau * (1.0 - s0 / denom);
  out.bound_std_error = 2.0 / tau * s0 * alpha / (denom * denom) * out.mean_s_std_error;
  return out;
}

}  // namespace eqco
