#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace eqco {

/// Dense fp64 vector used for embeddings, latents and gradients.
using RealVec = Eigen::VectorXd;
using RealMat = Eigen::MatrixXd;

/// Stateless seed mixer (SplitMix64 finalizer). Used to derive independent
/// per-task seeds: derive_seed(seed, i) for task i.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// xoshiro256** generator seeded through SplitMix64.
///
/// The stream is fully specified here, so sample sequences are identical on
/// every platform. One instance belongs to one logical thread; parallel work
/// takes `split(i)` children instead of sharing.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform double in (0, 1], safe as a log argument.
  double uniform_open_low();
  /// Unbiased integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);
  /// Standard normal draw, Box-Muller on the uniform stream.
  double normal();

  /// Independent child generator for task `stream`.
  SeededRng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// log(sum(exp(v))) with max subtraction. Throws PreconditionError on empty
/// input and NumericError on non-finite entries.
double log_sum_exp(std::span<const double> values);
double log_sum_exp(const RealVec& values);

/// log(1 + exp(x)) without overflow or loss of precision for small exp(x).
double softplus(double x);

/// v / ||v||. Throws DomainError for a zero (or non-finite) vector.
/// Vectors already unit-norm to within 1e-14 are returned unchanged, which
/// makes the operation exactly idempotent.
RealVec l2_normalize(const RealVec& v);

/// n i.i.d. standard normal draws. Throws PreconditionError when n == 0.
RealVec sample_std_gaussian(SeededRng& rng, std::size_t n);

/// k distinct indices drawn uniformly from [0, n), in draw order
/// (partial Fisher-Yates). Requires k <= n.
std::vector<std::size_t> sample_without_replacement(SeededRng& rng, std::size_t n,
                                                    std::size_t k);

bool all_finite(const RealVec& v);

/// Running mean / variance (Welford). Deterministic for a fixed input order.
class RunningStats {
 public:
  void add(double x);
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance; 0 when fewer than two samples.
  double variance() const;
  /// Population variance (divides by n).
  double population_variance() const;
  double std_error() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace eqco
