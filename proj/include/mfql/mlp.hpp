#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfql/tensor.hpp"

namespace mfql {

enum class Activation { SiLU };
enum class FinalInit { Zero, KaimingSmall };

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::SiLU;
  bool use_layer_norm = false;
  FinalInit final_init = FinalInit::Zero;

  /// Throws ConfigError on fewer than two sizes or a zero size.
  void validate() const;
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
};

/// One affine layer. Weights are stored `[in, out]` so a batch maps as `x W + b`.
/// Hidden layers additionally carry layer-norm gain/shift when enabled.
struct DenseLayer {
  Tensor weight;
  Tensor bias;
  Tensor ln_gain;
  Tensor ln_shift;

  bool has_norm() const { return !ln_gain.empty(); }
};

struct MlpParams {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  /// Names parallel to `tensors()`, e.g. "layer0.weight".
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;
  /// Same structure with every entry zero; used as a gradient accumulator.
  MlpParams zeros_like() const;
};

struct LayerCache {
  Tensor input;             // [B, in]
  Tensor normalized;        // [B, out], hidden layers with layer norm only
  Tensor inv_std;           // [B]
  Tensor activation_input;  // [B, out], argument of the nonlinearity
};

/// Intermediates recorded by a forward pass for the matching backward pass.
struct MlpCache {
  std::size_t batch = 0;
  std::vector<LayerCache> layers;
};

struct MlpForward {
  Tensor y;
  MlpCache cache;
};

struct MlpBackward {
  MlpParams grads;
  Tensor dx;
};

struct MlpJvp {
  Tensor y;
  Tensor dy;
  MlpCache cache;
};

inline constexpr double kLayerNormEpsilon = 1e-5;

MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed);

MlpForward mlp_forward(const MlpParams& params, const Tensor& x);

/// Reverse-mode gradients of `sum(y * dl_dy)` with respect to parameters and input.
MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache, const Tensor& dl_dy);

/// Forward pass carrying a tangent through every layer. `y` and `cache` are
/// identical to those of `mlp_forward(params, x.primal)`.
MlpJvp mlp_jvp(const MlpParams& params, const DualTensor& x);

}  // namespace mfql
