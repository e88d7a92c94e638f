#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cnsc {

/// State for one Adam-managed parameter set. Moment buffers are flat and
/// cover the concatenation of all parameter blocks passed to adam_step.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n, double learning_rate = 1e-3)
      : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update on one contiguous block.
/// Throws NumericError on non-finite gradients; parameters are untouched then.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state);

/// Same update over an ordered list of blocks sharing one state; the step
/// counter advances by exactly 1 per call.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state);

}  // namespace cnsc
