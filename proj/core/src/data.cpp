#include "eqco/data.hpp"

#include <cmath>

#include "eqco/errors.hpp"

namespace eqco {

void ToyDatasetConfig::validate() const {
  if (n_classes < 2) throw ConfigError("dataset: need at least two classes");
  if (n_instances < n_classes) throw ConfigError("dataset: fewer instances than classes");
  if (latent_dim == 0) throw ConfigError("dataset: latent_dim must be positive");
  if (!(center_scale >= 0.0) || !(center_spread >= 0.0) || !(aug_noise_std >= 0.0)) {
    throw ConfigError("dataset: scales must be non-negative");
  }
}

ToyInstanceDataset ToyInstanceDataset::make(const ToyDatasetConfig& config, std::uint64_t seed) {
  config.validate();
  SeededRng rng(seed);
  ToyInstanceDataset ds;
  ds.config = config;
  ds.class_centers.reserve(config.n_classes);
  for (std::size_t c = 0; c < config.n_classes; ++c) {
    ds.class_centers.push_back(config.center_scale * sample_std_gaussian(rng, config.latent_dim));
  }
  ds.instances.reserve(config.n_instances);
  for (std::size_t i = 0; i < config.n_instances; ++i) {
    // Round-robin keeps classes balanced.
    const std::size_t cls = i % config.n_classes;
    RealVec latent =
        ds.class_centers[cls] + config.center_spread * sample_std_gaussian(rng, config.latent_dim);
    ds.instances.push_back({std::move(latent), cls});
  }
  return ds;
}

std::vector<std::size_t> ToyInstanceDataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.class_id);
  return out;
}

std::pair<RealVec, RealVec> make_views(const RealVec& latent, double aug_noise_std, SeededRng& rng) {
  if (!(aug_noise_std >= 0.0)) throw PreconditionError("make_views: noise std must be >= 0");
  const auto n = static_cast<std::size_t>(latent.size());
  if (aug_noise_std == 0.0) return {latent, latent};
  RealVec a = latent + aug_noise_std * sample_std_gaussian(rng, n);
  RealVec b = latent + aug_noise_std * sample_std_gaussian(rng, n);
  return {std::move(a), std::move(b)};
}

MemoryBank::MemoryBank(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("MemoryBank: capacity must be positive");
}

void MemoryBank::enqueue(RealVec key) {
  if (keys_.size() == capacity_) keys_.pop_front();
  keys_.push_back(std::move(key));
}

std::vector<std::size_t> negatives_from_bank(const MemoryBank& bank, std::size_t k, SeededRng& rng) {
  if (k == 0) throw PreconditionError("negatives_from_bank: k must be positive");
  if (bank.size() < k) throw PreconditionError("negatives_from_bank: bank holds fewer than k keys");
  if (bank.size() == k) {
    std::vector<std::size_t> all(k);
    for (std::size_t i = 0; i < k; ++i) all[i] = i;
    return all;
  }
  return sample_without_replacement(rng, bank.size(), k);
}

std::vector<std::size_t> negatives_in_batch(std::size_t batch_size, std::size_t query_index,
                                            std::size_t k, SeededRng& rng) {
  if (query_index >= batch_size) throw PreconditionError("negatives_in_batch: query index out of range");
  if (k == 0 || k + 1 > batch_size) throw ConfigError("negatives_in_batch: k must lie in [1, N-1]");
  std::vector<std::size_t> out;
  out.reserve(k);
  if (k + 1 == batch_size) {
    for (std::size_t i = 0; i < batch_size; ++i) {
      if (i != query_index) out.push_back(i);
    }
    return out;
  }
  // Sample from the N-1 other slots, then shift past the query.
  for (std::size_t idx : sample_without_replacement(rng, batch_size - 1, k)) {
    out.push_back(idx >= query_index ? idx + 1 : idx);
  }
  return out;
}

}  // namespace eqco
