#include "mfql/embedding.hpp"

#include <cmath>

#include "mfql/errors.hpp"

namespace mfql {

namespace {

void check_dim(std::size_t dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("time embedding dim must be even and >= 2, got " + std::to_string(dim));
}

double frequency(std::size_t i, std::size_t dim) {
  return std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
}

}  // namespace

Tensor sinusoidal_embed(double t, std::size_t dim) {
  check_dim(dim);
  Tensor out({dim});
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double w = frequency(i, dim);
    out[2 * i] = std::sin(t * w);
    out[2 * i + 1] = std::cos(t * w);
  }
  return out;
}

Tensor sinusoidal_embed_derivative(double t, std::size_t dim) {
  check_dim(dim);
  Tensor out({dim});
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double w = frequency(i, dim);
    out[2 * i] = w * std::cos(t * w);
    out[2 * i + 1] = -w * std::sin(t * w);
  }
  return out;
}

}  // namespace mfql
