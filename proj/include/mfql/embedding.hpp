#pragma once

#include "mfql/tensor.hpp"

namespace mfql {

/// Interleaved sinusoidal features of a scalar time:
/// out[2i] = sin(t * w_i), out[2i+1] = cos(t * w_i), w_i = 10000^(-2i/dim).
Tensor sinusoidal_embed(double t, std::size_t dim);

/// d/dt of `sinusoidal_embed(t, dim)`.
Tensor sinusoidal_embed_derivative(double t, std::size_t dim);

}  // namespace mfql
