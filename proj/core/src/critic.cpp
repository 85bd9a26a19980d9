#include "eqco/critic.hpp"

#include <cmath>

#include "eqco/errors.hpp"
#include "eqco/schedule.hpp"

namespace eqco {
namespace {

struct EvalSet {
  RealMat queries;    // dim x eval_queries
  RealMat positives;  // dim x eval_queries
  RealMat negatives;  // dim x (chunks * pool)
  std::size_t chunk = 0;
  std::size_t pool = 0;
};

EvalSet make_eval_set(const CriticConfig& cfg) {
  SeededRng rng(derive_seed(cfg.seed, 13));
  const auto dim = static_cast<Eigen::Index>(cfg.dist.dim);
  const std::size_t chunks = (cfg.eval_queries + cfg.eval_chunk - 1) / cfg.eval_chunk;
  EvalSet set;
  set.chunk = cfg.eval_chunk;
  set.pool = cfg.eval_pool;
  set.queries.resize(dim, static_cast<Eigen::Index>(cfg.eval_queries));
  set.positives.resize(dim, static_cast<Eigen::Index>(cfg.eval_queries));
  for (std::size_t j = 0; j < cfg.eval_queries; ++j) {
    auto [q, k0] = cfg.dist.sample_pair(rng);
    set.queries.col(static_cast<Eigen::Index>(j)) = q;
    set.positives.col(static_cast<Eigen::Index>(j)) = k0;
  }
  set.negatives.resize(dim, static_cast<Eigen::Index>(chunks * cfg.eval_pool));
  for (Eigen::Index c = 0; c < set.negatives.cols(); ++c) set.negatives.col(c) = cfg.dist.sample_marginal(rng);
  return set;
}

double evaluate(const CriticConfig& cfg, const CriticResult& state, const EvalSet& set) {
  const RealMat q = encode_batch(state.query_net, set.queries).embeddings;
  const RealMat kp = encode_batch(state.key_net, set.positives).embeddings;
  const RealMat kn = encode_batch(state.key_net, set.negatives).embeddings;
  const std::size_t k = cfg.loss.k;
  std::vector<double> neg_sims(k);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const auto base = static_cast<Eigen::Index>((static_cast<std::size_t>(j) / set.chunk) * set.pool);
    for (std::size_t i = 0; i < k; ++i) neg_sims[i] = q.col(j).dot(kn.col(base + static_cast<Eigen::Index>(i)));
    sum += infonce_from_similarities(q.col(j).dot(kp.col(j)), neg_sims, cfg.loss).value;
  }
  return sum / static_cast<double>(q.cols());
}

}  // namespace

void CriticConfig::validate() const {
  try {
    dist.validate();
    loss.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (n_queries == 0 || steps_per_epoch == 0 || epochs == 0) {
    throw ConfigError("critic: n_queries, steps_per_epoch and epochs must be positive");
  }
  if (!(lr > 0.0)) throw ConfigError("critic: lr must be positive");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw ConfigError("critic: sgd_momentum must lie in [0, 1)");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw ConfigError("critic: warmup_frac must lie in [0, 1)");
  if (embed_dim == 0) throw ConfigError("critic: embed_dim must be positive");
  if (eval_queries == 0 || eval_chunk == 0) throw ConfigError("critic: evaluation set must be non-empty");
  if (eval_pool < loss.k) throw ConfigError("critic: eval_pool must be >= K");
}

CriticResult train_critic(const CriticConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_queries;
  const std::size_t k = cfg.loss.k;
  const auto dim = static_cast<Eigen::Index>(cfg.dist.dim);
  const double normalizer = log_normalizer(cfg.loss.tau, cfg.loss.effective_margin(), k);

  std::vector<std::size_t> dims{cfg.dist.dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.embed_dim);

  SeededRng init_rng(derive_seed(cfg.seed, 11));
  SeededRng pos_rng(derive_seed(cfg.seed, 12));
  SeededRng neg_rng(derive_seed(cfg.seed, 14));
  const EvalSet eval_set = make_eval_set(cfg);

  CriticResult result;
  result.query_net = init_params(init_rng, dims);
  result.key_net = init_params(init_rng, dims);
  MlpParams vel_q = MlpParams::zeros_like(result.query_net);
  MlpParams vel_k = MlpParams::zeros_like(result.key_net);

  const std::size_t total_steps = cfg.steps_per_epoch * cfg.epochs;
  RealMat xq(dim, static_cast<Eigen::Index>(n));
  RealMat xk(dim, static_cast<Eigen::Index>(n));
  RealMat xneg(dim, static_cast<Eigen::Index>(k));
  std::vector<double> neg_sims(k);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::size_t step = 0;
  try {
    double window_loss = 0.0;
    std::size_t window_steps = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
        const double lr = lr_at_step(step, total_steps, cfg.warmup_frac, cfg.lr);
        for (std::size_t j = 0; j < n; ++j) {
          auto [q, k0] = cfg.dist.sample_pair(pos_rng);
          xq.col(static_cast<Eigen::Index>(j)) = q;
          xk.col(static_cast<Eigen::Index>(j)) = k0;
        }
        for (std::size_t i = 0; i < k; ++i) {
          xneg.col(static_cast<Eigen::Index>(i)) = cfg.dist.sample_marginal(neg_rng);
        }

        const BatchEncoding eq = encode_batch(result.query_net, xq);
        const BatchEncoding ek = encode_batch(result.key_net, xk);
        const BatchEncoding en = encode_batch(result.key_net, xneg);
        const RealMat& q = eq.embeddings;
        const RealMat& kp = ek.embeddings;
        const RealMat& kn = en.embeddings;
        const RealMat sims = q.transpose() * kn;  // n x k

        RealMat d_q = RealMat::Zero(q.rows(), q.cols());
        RealMat d_kp = RealMat::Zero(kp.rows(), kp.cols());
        RealMat d_kn = RealMat::Zero(kn.rows(), kn.cols());
        double loss_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          for (std::size_t i = 0; i < k; ++i) neg_sims[i] = sims(jj, static_cast<Eigen::Index>(i));
          const auto terms = infonce_from_similarities(q.col(jj).dot(kp.col(jj)), neg_sims, cfg.loss);
          loss_sum += terms.value;
          d_q.col(jj) += terms.pos_coef * inv_n * kp.col(jj);
          d_kp.col(jj) += terms.pos_coef * inv_n * q.col(jj);
          for (std::size_t i = 0; i < k; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double c = terms.neg_coefs[i] * inv_n;
            d_q.col(jj) += c * kn.col(ii);
            d_kn.col(ii) += c * q.col(jj);
          }
        }
        const double loss = loss_sum * inv_n;
        if (!std::isfinite(loss)) throw NumericError("non-finite critic loss at step " + std::to_string(step));
        window_loss += loss;
        ++window_steps;

        auto gq = encode_batch_backward(result.query_net, eq.cache, d_q).param_grads;
        auto gk = encode_batch_backward(result.key_net, ek.cache, d_kp).param_grads;
        gk.add_scaled(encode_batch_backward(result.key_net, en.cache, d_kn).param_grads, 1.0);

        vel_q.scale(cfg.sgd_momentum);
        vel_q.add_scaled(gq, 1.0);
        result.query_net.add_scaled(vel_q, -lr);
        vel_k.scale(cfg.sgd_momentum);
        vel_k.add_scaled(gk, 1.0);
        result.key_net.add_scaled(vel_k, -lr);
        if (!result.query_net.all_finite() || !result.key_net.all_finite()) {
          throw NumericError("non-finite critic parameters at step " + std::to_string(step));
        }
        const bool epoch_end = s + 1 == cfg.steps_per_epoch;
        if (cfg.eval_every > 0 ? (step + 1) % cfg.eval_every == 0 || (epoch_end && epoch + 1 == cfg.epochs)
                               : epoch_end) {
          CriticEpochRecord rec;
          rec.step = step;
          rec.epoch = epoch;
          rec.train_loss = window_loss / static_cast<double>(window_steps);
          rec.loss_nce = evaluate(cfg, result, eval_set);
          rec.f_hat_bound = normalizer - rec.loss_nce;
          result.epochs.push_back(rec);
          window_loss = 0.0;
          window_steps = 0;
        }
      }
    }
  } catch (const NumericError& e) {
    result.ok = false;
    result.message = e.what();
  }
  return result;
}

}  // namespace eqco
