#pragma once

#include <cstddef>

namespace eqco {

/// Linear scaling rule over queries per batch: base_lr * n / n_ref.
double scaled_lr(double base_lr, std::size_t n, std::size_t n_ref);

/// Linear warm-up from 0 to `peak_lr` over floor(warmup_frac * total_steps)
/// steps, then half-cosine decay:
///   lr(s) = peak * s / W                                for s < W
///   lr(s) = peak * (1 + cos(pi * (s - W) / (T - W))) / 2 for s >= W
/// so lr(0) = 0 (when W > 0), lr(W) = peak, and the last step
/// s = T - 1 gives peak * (1 + cos(pi * (T - 1 - W) / (T - W))) / 2 > 0.
double lr_at_step(std::size_t step, std::size_t total_steps, double warmup_frac, double peak_lr);

}  // namespace eqco
