#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <utility>
#include <vector>

#include "eqco/math.hpp"

namespace eqco {

struct ToyDatasetConfig {
  std::size_t n_classes = 10;
  std::size_t n_instances = 5000;
  std::size_t latent_dim = 16;
  /// Class centers are i.i.d. N(0, I) scaled by this factor.
  double center_scale = 3.0;
  /// Std of the per-instance perturbation around its class center.
  double center_spread = 1.0;
  double aug_noise_std = 0.3;

  void validate() const;
};

struct ToyInstance {
  RealVec latent;
  std::size_t class_id = 0;
};

/// Gaussian-mixture instance-discrimination data. Class ids are only for
/// evaluation; the contrastive trainer reads latents alone.
struct ToyInstanceDataset {
  ToyDatasetConfig config;
  std::vector<RealVec> class_centers;
  std::vector<ToyInstance> instances;

  static ToyInstanceDataset make(const ToyDatasetConfig& config, std::uint64_t seed);

  std::size_t size() const { return instances.size(); }
  std::vector<std::size_t> labels() const;
};

/// Two independent Gaussian perturbations of `latent`.
std::pair<RealVec, RealVec> make_views(const RealVec& latent, double aug_noise_std, SeededRng& rng);

/// Fixed-capacity FIFO of key embeddings; the oldest key is evicted first.
class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity);

  void enqueue(RealVec key);
  std::size_t size() const { return keys_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return keys_.size() == capacity_; }
  /// Oldest first.
  const std::deque<RealVec>& keys() const { return keys_; }
  const RealVec& operator[](std::size_t i) const { return keys_[i]; }

 private:
  std::size_t capacity_;
  std::deque<RealVec> keys_;
};

/// Indices into `bank.keys()` for K negatives. When k equals the bank size
/// every key is returned in queue order; otherwise k distinct keys are drawn
/// uniformly. Throws PreconditionError when the bank holds fewer than k keys
/// (the trainer skips such bootstrap steps).
std::vector<std::size_t> negatives_from_bank(const MemoryBank& bank, std::size_t k, SeededRng& rng);

/// Indices of k in-batch negatives for query `query_index` among `batch_size`
/// keys, never including the query's own key. k == batch_size - 1 returns all
/// others in order without consuming randomness. Throws ConfigError if k > N - 1.
std::vector<std::size_t> negatives_in_batch(std::size_t batch_size, std::size_t query_index,
                                            std::size_t k, SeededRng& rng);

}  // namespace eqco
