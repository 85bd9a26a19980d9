#pragma once

#include <cstddef>
#include <span>

#include "eqco/math.hpp"

namespace eqco {

struct ProbeOptions {
  std::size_t iterations = 500;
  double lr = 0.1;
};

/// Linear evaluation: multinomial logistic regression fitted by full-batch
/// gradient descent (zero init, no regularization) on a random
/// `train_frac` split of frozen embeddings. Returns held-out accuracy.
/// Prediction ties resolve to the lowest class index.
/// Throws DomainError when the training split holds fewer than two classes.
double linear_probe(std::span<const RealVec> embeddings, std::span<const std::size_t> labels,
                    double train_frac, SeededRng& rng, const ProbeOptions& options = {});

}  // namespace eqco
