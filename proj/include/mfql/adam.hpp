#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfql/tensor.hpp"

namespace mfql {

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Zeroed moments shaped like `params`.
AdamState make_adam_state(std::span<const Tensor* const> params, double learning_rate);

/// Clips the global gradient norm to `max_grad_norm` (no clipping when it is
/// not positive), then applies one bias-corrected Adam update in place.
/// Returns the pre-clip global norm. Non-finite gradients throw NumericError
/// and leave params and state untouched.
double adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                 double max_grad_norm);

/// Global L2 norm over a list of tensors.
double global_norm(std::span<const Tensor* const> tensors);

}  // namespace mfql
