#include "eqco/schedule.hpp"

#include <cmath>
#include <numbers>

#include "eqco/errors.hpp"

namespace eqco {

double scaled_lr(double base_lr, std::size_t n, std::size_t n_ref) {
  if (n == 0 || n_ref == 0) throw PreconditionError("scaled_lr: n and n_ref must be >= 1");
  return base_lr * static_cast<double>(n) / static_cast<double>(n_ref);
}

double lr_at_step(std::size_t step, std::size_t total_steps, double warmup_frac, double peak_lr) {
  if (step >= total_steps) throw PreconditionError("lr_at_step: step must be < total_steps");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) {
    throw PreconditionError("lr_at_step: warmup_frac must lie in [0, 1)");
  }
  const auto warmup = static_cast<std::size_t>(std::floor(warmup_frac * static_cast<double>(total_steps)));
  if (step < warmup) {
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace eqco
