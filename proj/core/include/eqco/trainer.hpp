#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eqco/data.hpp"
#include "eqco/encoder.hpp"
#include "eqco/infonce.hpp"

namespace eqco {

enum class NegativeSource {
  Bank,              // FIFO memory bank of momentum-encoder keys (MoCo)
  InBatch,           // other keys of the current batch, one shared pool per step
  InBatchSubsample,  // other keys of the current batch, drawn per query
};

const char* to_string(NegativeSource source);
NegativeSource negative_source_from_string(const std::string& name);

struct TrainConfig {
  std::size_t n_queries = 256;
  /// loss.k is the number of negatives per query.
  LossConfig loss{0.2, FixedMargin{0.0}, 255};
  NegativeSource neg_source = NegativeSource::InBatch;
  /// Learning rate at n_ref queries per batch.
  double base_lr = 0.03;
  std::size_t n_ref = 256;
  /// Apply the linear scaling rule; false keeps base_lr for any N.
  bool scale_lr = true;
  std::size_t epochs = 50;
  double warmup_frac = 0.1;
  double sgd_momentum = 0.9;
  /// Momentum-encoder EMA coefficient.
  double beta = 0.999;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t embed_dim = 32;
  std::uint64_t seed = 0;

  /// Throws ConfigError for inconsistent settings (e.g. InBatch with K > N - 1).
  void validate() const;
  double peak_lr() const;
  /// Bank capacity: K when K >= N, otherwise N so that K keys are drawn from
  /// the previous batch.
  std::size_t bank_capacity() const;
};

/// No memory bank, in-batch negatives from the momentum encoder, warm-up on.
TrainConfig simo_preset(std::size_t n_queries, std::size_t k, double alpha);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  /// Bank bootstrap step: keys were enqueued but no loss was computed.
  bool skipped = false;
  double lr = 0.0;
  double loss = 0.0;
  double f_hat_bound = 0.0;
  /// ||dL_j / dq_j|| statistics across the batch (population variance).
  double grad_norm_mean = 0.0;
  double grad_norm_var = 0.0;
  /// Batch mean of (2/tau)(1 - s0 / (s0 + alpha_eff * mean_pool(s))).
  double theorem2_bound = 0.0;
  std::size_t n_queries = 0;
};

enum class TrainStatus { Ok, NumericFailure };

struct TrainResult {
  MlpParams encoder;
  MomentumEncoder key_encoder;
  std::vector<StepRecord> log;
  TrainStatus status = TrainStatus::Ok;
  std::string message;
  /// Index of the last step that finished with finite values.
  std::size_t last_good_step = 0;
};

/// Observer invoked after each momentum update, with the key encoder before
/// and after the update and the query encoder that drove it.
using MomentumObserver =
    std::function<void(std::size_t step, const MlpParams& query, const MlpParams& key_before,
                       const MlpParams& key_after)>;

/// Contrastive training of a query encoder with a momentum key encoder.
/// Only latents of `dataset` are read. Key encoders receive no gradient.
TrainResult train(const TrainConfig& config, const ToyInstanceDataset& dataset,
                  const MomentumObserver& observer = {});

/// Per-epoch summary pooled over the epoch's non-skipped steps.
struct EpochSummary {
  std::size_t epoch = 0;
  std::size_t last_step = 0;
  double loss = 0.0;
  double f_hat_bound = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_var = 0.0;
  double theorem2_bound = 0.0;
  std::size_t samples = 0;
};

std::vector<EpochSummary> summarize_epochs(const std::vector<StepRecord>& log);

/// Embeds every instance latent (no augmentation) with `encoder`.
std::vector<RealVec> embed_dataset(const MlpParams& encoder, const ToyInstanceDataset& dataset);

}  // namespace eqco
