#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eqco/encoder.hpp"
#include "eqco/infonce.hpp"
#include "eqco/mi.hpp"

namespace eqco {

/// Separable critic on CorrelatedGaussian pairs: query network f(q), key
/// network g(k), score f(q).g(k)/tau. Negatives are fresh marginal draws
/// shared by the queries of a step. Both networks are trained (key
/// gradients included).
///
/// The per-epoch loss is measured on a fixed held-out set whose draws depend
/// only on the seed: queries are grouped in chunks of `eval_chunk`, each chunk
/// owning a list of negatives of which the first K are used. Runs that differ
/// only in K or margin therefore share evaluation data, and positives during
/// training come from a stream that does not depend on K.
struct CriticConfig {
  CorrelatedGaussian dist{1, 0.9};
  LossConfig loss{0.2, FixedMargin{0.0}, 64};
  std::size_t n_queries = 64;
  std::size_t steps_per_epoch = 50;
  std::size_t epochs = 30;
  double lr = 0.05;
  double sgd_momentum = 0.9;
  double warmup_frac = 0.05;
  std::vector<std::size_t> hidden_dims{32, 32};
  std::size_t embed_dim = 16;
  std::uint64_t seed = 0;
  std::size_t eval_queries = 8192;
  std::size_t eval_chunk = 64;
  /// Negatives stored per evaluation chunk; must be >= loss.k.
  std::size_t eval_pool = 512;
  /// Evaluate every this many steps; 0 evaluates once at the end of each epoch.
  std::size_t eval_every = 0;

  void validate() const;
};

struct CriticEpochRecord {
  std::size_t step = 0;  // step after which the record was taken
  std::size_t epoch = 0;
  /// Held-out L_NCE and f_hat at that point.
  double loss_nce = 0.0;
  double f_hat_bound = 0.0;
  /// Mean training loss over the steps since the previous record.
  double train_loss = 0.0;
};

struct CriticResult {
  std::vector<CriticEpochRecord> epochs;
  MlpParams query_net;
  MlpParams key_net;
  bool ok = true;
  std::string message;

  double final_loss() const { return epochs.empty() ? 0.0 : epochs.back().loss_nce; }
  double final_f_hat() const { return epochs.empty() ? 0.0 : epochs.back().f_hat_bound; }
};

CriticResult train_critic(const CriticConfig& config);

}  // namespace eqco
