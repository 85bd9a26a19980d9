#include "eqco/trainer.hpp"

#include <cmath>
#include <optional>

#include "eqco/errors.hpp"
#include "eqco/schedule.hpp"

namespace eqco {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::size_t> encoder_dims(const TrainConfig& cfg, std::size_t input_dim) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.embed_dim);
  return dims;
}

}  // namespace

const char* to_string(NegativeSource source) {
  switch (source) {
    case NegativeSource::Bank:
      return "bank";
    case NegativeSource::InBatch:
      return "batch";
    case NegativeSource::InBatchSubsample:
      return "subsample";
  }
  return "unknown";
}

NegativeSource negative_source_from_string(const std::string& name) {
  if (name == "bank") return NegativeSource::Bank;
  if (name == "batch") return NegativeSource::InBatch;
  if (name == "subsample") return NegativeSource::InBatchSubsample;
  throw ConfigError("unknown negative source '" + name + "' (expected bank, batch or subsample)");
}

void TrainConfig::validate() const {
  try {
    loss.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (n_queries < 2) throw ConfigError("train: n_queries must be at least 2");
  if (n_ref == 0) throw ConfigError("train: n_ref must be positive");
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("train: base_lr must be positive");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw ConfigError("train: warmup_frac must lie in [0, 1)");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw ConfigError("train: sgd_momentum must lie in [0, 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("train: beta must lie in [0, 1]");
  if (embed_dim == 0) throw ConfigError("train: embed_dim must be positive");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("train: hidden widths must be positive");
  }
  if ((neg_source == NegativeSource::InBatch || neg_source == NegativeSource::InBatchSubsample) &&
      loss.k + 1 > n_queries) {
    throw ConfigError("train: in-batch negatives require K <= N - 1");
  }
}

double TrainConfig::peak_lr() const {
  return scale_lr ? scaled_lr(base_lr, n_queries, n_ref) : base_lr;
}

std::size_t TrainConfig::bank_capacity() const { return std::max(loss.k, n_queries); }

TrainConfig simo_preset(std::size_t n_queries, std::size_t k, double alpha) {
  TrainConfig cfg;
  cfg.n_queries = n_queries;
  cfg.loss = LossConfig{0.2, EqCoMargin{alpha}, k};
  cfg.neg_source = NegativeSource::InBatch;
  cfg.warmup_frac = 0.1;
  return cfg;
}

TrainResult train(const TrainConfig& cfg, const ToyInstanceDataset& dataset,
                  const MomentumObserver& observer) {
  cfg.validate();
  const std::size_t n_total = dataset.size();
  const std::size_t n = cfg.n_queries;
  if (n_total < n) throw ConfigError("train: dataset smaller than one batch");
  const std::size_t k = cfg.loss.k;
  const double tau = cfg.loss.tau;
  const double inv_tau = 1.0 / tau;
  const double log_alpha = std::log(cfg.loss.effective_alpha());
  const double normalizer = log_normalizer(tau, cfg.loss.effective_margin(), k);
  const auto in_dim = static_cast<Eigen::Index>(dataset.config.latent_dim);

  SeededRng init_rng(derive_seed(cfg.seed, 1));
  SeededRng data_rng(derive_seed(cfg.seed, 2));
  SeededRng neg_rng(derive_seed(cfg.seed, 3));

  TrainResult result;
  const auto dims = encoder_dims(cfg, dataset.config.latent_dim);
  MlpParams query = init_params(init_rng, dims);
  result.key_encoder = MomentumEncoder{query, cfg.beta};
  MlpParams velocity = MlpParams::zeros_like(query);

  std::optional<MemoryBank> bank;
  if (cfg.neg_source == NegativeSource::Bank) bank.emplace(cfg.bank_capacity());

  const std::size_t steps_per_epoch = n_total / n;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const double peak = cfg.peak_lr();
  result.log.reserve(total_steps);

  RealMat view_a(in_dim, static_cast<Eigen::Index>(n));
  RealMat view_b(in_dim, static_cast<Eigen::Index>(n));
  std::vector<double> neg_sims(k);
  std::vector<std::size_t> neg_cols(k);

  std::size_t step = 0;
  bool failed = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !failed; ++epoch) {
    const auto order = sample_without_replacement(data_rng, n_total, n_total);
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr_at_step(step, total_steps, cfg.warmup_frac, peak);

      for (std::size_t j = 0; j < n; ++j) {
        const auto& latent = dataset.instances[order[b * n + j]].latent;
        auto [a, v] = make_views(latent, dataset.config.aug_noise_std, data_rng);
        view_a.col(static_cast<Eigen::Index>(j)) = a;
        view_b.col(static_cast<Eigen::Index>(j)) = v;
      }

      BatchEncoding queries;
      RealMat keys;
      try {
        queries = encode_batch(query, view_a);
        keys = encode_batch(result.key_encoder.params, view_b).embeddings;
      } catch (const NumericError& e) {
        result.status = TrainStatus::NumericFailure;
        result.message = e.what();
        failed = true;
        break;
      }

      // Candidate pool of negatives: bank draw or the batch's own keys.
      RealMat pool;
      if (bank) {
        if (bank->size() < k) {
          rec.skipped = true;
          for (Eigen::Index j = 0; j < keys.cols(); ++j) bank->enqueue(keys.col(j));
          result.log.push_back(rec);
          continue;
        }
        const auto idx = negatives_from_bank(*bank, k, neg_rng);
        pool.resize(keys.rows(), static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i) pool.col(static_cast<Eigen::Index>(i)) = (*bank)[idx[i]];
      } else {
        pool = keys;
      }
      const RealMat& q = queries.embeddings;
      const RealMat sims = q.transpose() * pool;  // n x pool
      const RealVec pos = q.cwiseProduct(keys).colwise().sum().transpose();

      std::vector<std::size_t> shared;
      if (cfg.neg_source == NegativeSource::InBatch && k + 1 < n) {
        shared = sample_without_replacement(neg_rng, n, k + 1);
      }

      RealMat d_q(q.rows(), q.cols());
      RunningStats norms;
      double loss_sum = 0.0;
      double bound_sum = 0.0;
      std::vector<double> pool_logits;
      for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        switch (cfg.neg_source) {
          case NegativeSource::Bank:
            for (std::size_t i = 0; i < k; ++i) neg_cols[i] = i;
            break;
          case NegativeSource::InBatch:
            if (shared.empty()) {
              neg_cols = negatives_in_batch(n, j, k, neg_rng);
            } else {
              std::size_t filled = 0;
              for (std::size_t c : shared) {
                if (c != j && filled < k) neg_cols[filled++] = c;
              }
            }
            break;
          case NegativeSource::InBatchSubsample:
            neg_cols = negatives_in_batch(n, j, k, neg_rng);
            break;
        }
        for (std::size_t i = 0; i < k; ++i) neg_sims[i] = sims(jj, static_cast<Eigen::Index>(neg_cols[i]));
        const auto terms = infonce_from_similarities(pos[jj], neg_sims, cfg.loss);

        RealVec g = terms.pos_coef * keys.col(jj);
        for (std::size_t i = 0; i < k; ++i) {
          g += terms.neg_coefs[i] * pool.col(static_cast<Eigen::Index>(neg_cols[i]));
        }
        norms.add(g.norm());
        d_q.col(jj) = g / static_cast<double>(n);
        loss_sum += terms.value;

        // Expectation bound with E[s] estimated from the whole candidate pool,
        // excluding the query's own positive key.
        pool_logits.clear();
        for (Eigen::Index c = 0; c < pool.cols(); ++c) {
          if (!bank && c == jj) continue;
          pool_logits.push_back(sims(jj, c) * inv_tau);
        }
        const double log_mean_s =
            log_sum_exp(pool_logits) - std::log(static_cast<double>(pool_logits.size()));
        bound_sum += 2.0 * inv_tau * sigmoid(log_alpha + log_mean_s - pos[jj] * inv_tau);
      }

      rec.n_queries = n;
      rec.loss = loss_sum / static_cast<double>(n);
      rec.f_hat_bound = normalizer - rec.loss;
      rec.grad_norm_mean = norms.mean();
      rec.grad_norm_var = norms.population_variance();
      rec.theorem2_bound = bound_sum / static_cast<double>(n);

      const auto back = encode_batch_backward(query, queries.cache, d_q);
      if (!std::isfinite(rec.loss) || !back.param_grads.all_finite()) {
        result.status = TrainStatus::NumericFailure;
        result.message = "non-finite loss or gradient at step " + std::to_string(step);
        failed = true;
        break;
      }

      velocity.scale(cfg.sgd_momentum);
      velocity.add_scaled(back.param_grads, 1.0);
      query.add_scaled(velocity, -rec.lr);
      if (!query.all_finite()) {
        result.status = TrainStatus::NumericFailure;
        result.message = "non-finite parameters after step " + std::to_string(step);
        failed = true;
        break;
      }

      if (observer) {
        const MlpParams before = result.key_encoder.params;
        momentum_update(result.key_encoder, query);
        observer(step, query, before, result.key_encoder.params);
      } else {
        momentum_update(result.key_encoder, query);
      }
      if (bank) {
        for (Eigen::Index j = 0; j < keys.cols(); ++j) bank->enqueue(keys.col(j));
      }
      result.log.push_back(rec);
      result.last_good_step = step;
    }
  }
  result.encoder = std::move(query);
  return result;
}

std::vector<EpochSummary> summarize_epochs(const std::vector<StepRecord>& log) {
  std::vector<EpochSummary> out;
  std::size_t i = 0;
  while (i < log.size()) {
    EpochSummary s;
    s.epoch = log[i].epoch;
    double loss_sum = 0.0, bound_sum = 0.0, norm_sum = 0.0, norm_sq_sum = 0.0, fhat_sum = 0.0;
    std::size_t steps = 0;
    for (; i < log.size() && log[i].epoch == s.epoch; ++i) {
      const auto& r = log[i];
      s.last_step = r.step;
      if (r.skipped) continue;
      const double w = static_cast<double>(r.n_queries);
      ++steps;
      loss_sum += r.loss;
      fhat_sum += r.f_hat_bound;
      bound_sum += r.theorem2_bound * w;
      norm_sum += r.grad_norm_mean * w;
      norm_sq_sum += (r.grad_norm_var + r.grad_norm_mean * r.grad_norm_mean) * w;
      s.samples += r.n_queries;
    }
    if (steps > 0) {
      const double total = static_cast<double>(s.samples);
      s.loss = loss_sum / static_cast<double>(steps);
      s.f_hat_bound = fhat_sum / static_cast<double>(steps);
      s.grad_norm_mean = norm_sum / total;
      s.grad_norm_var = std::max(0.0, norm_sq_sum / total - s.grad_norm_mean * s.grad_norm_mean);
      s.theorem2_bound = bound_sum / total;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<RealVec> embed_dataset(const MlpParams& encoder, const ToyInstanceDataset& dataset) {
  RealMat latents(static_cast<Eigen::Index>(dataset.config.latent_dim),
                  static_cast<Eigen::Index>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    latents.col(static_cast<Eigen::Index>(i)) = dataset.instances[i].latent;
  }
  const RealMat emb = encode_batch(encoder, latents).embeddings;
  std::vector<RealVec> out;
  out.reserve(dataset.size());
  for (Eigen::Index c = 0; c < emb.cols(); ++c) out.emplace_back(emb.col(c));
  return out;
}

}  // namespace eqco
