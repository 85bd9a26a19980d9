#include "eqco/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "eqco/errors.hpp"

namespace eqco {

double linear_probe(std::span<const RealVec> embeddings, std::span<const std::size_t> labels,
                    double train_frac, SeededRng& rng, const ProbeOptions& options) {
  if (embeddings.size() != labels.size() || embeddings.empty()) {
    throw PreconditionError("linear_probe: embeddings and labels must be non-empty and aligned");
  }
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw PreconditionError("linear_probe: train_frac must lie in (0, 1)");
  }
  const std::size_t n = embeddings.size();
  const auto dim = embeddings.front().size();
  const auto n_classes = static_cast<Eigen::Index>(*std::max_element(labels.begin(), labels.end()) + 1);

  const auto order = sample_without_replacement(rng, n, n);
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw PreconditionError("linear_probe: empty train or test split");

  std::set<std::size_t> train_classes;
  RealMat x_train(dim, static_cast<Eigen::Index>(n_train));
  RealMat y_train = RealMat::Zero(n_classes, static_cast<Eigen::Index>(n_train));
  for (std::size_t i = 0; i < n_train; ++i) {
    const std::size_t src = order[i];
    if (embeddings[src].size() != dim) throw DomainError("linear_probe: embedding dimension mismatch");
    x_train.col(static_cast<Eigen::Index>(i)) = embeddings[src];
    y_train(static_cast<Eigen::Index>(labels[src]), static_cast<Eigen::Index>(i)) = 1.0;
    train_classes.insert(labels[src]);
  }
  if (train_classes.size() < 2) throw DomainError("linear_probe: training split has a single class");

  RealMat w = RealMat::Zero(n_classes, dim);
  RealVec b = RealVec::Zero(n_classes);
  const double inv_n = 1.0 / static_cast<double>(n_train);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    RealMat logits = w * x_train;
    logits.colwise() += b;
    // Column-wise softmax.
    const Eigen::RowVectorXd peak = logits.colwise().maxCoeff();
    RealMat probs = (logits.rowwise() - peak).array().exp().matrix();
    const Eigen::RowVectorXd mass = probs.colwise().sum();
    probs = probs.array().rowwise() / mass.array();
    const RealMat residual = (probs - y_train) * inv_n;
    w -= options.lr * residual * x_train.transpose();
    b -= options.lr * residual.rowwise().sum();
  }

  std::size_t correct = 0;
  for (std::size_t i = n_train; i < n; ++i) {
    const std::size_t src = order[i];
    const RealVec scores = w * embeddings[src] + b;
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.size(); ++c) {
      if (scores[c] > scores[best]) best = c;
    }
    if (static_cast<std::size_t>(best) == labels[src]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

}  // namespace eqco
