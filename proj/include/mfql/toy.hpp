#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "mfql/adam.hpp"
#include "mfql/data_env.hpp"
#include "mfql/meanflow.hpp"
#include "mfql/metrics.hpp"
#include "mfql/nets.hpp"

namespace mfql {

/// Unconditional generative training on a 2-D toy density with the MFI loss
/// alone; the state input is a constant zero column.
struct ToyTrainConfig {
  VariantId variant = VariantId::Residual_At;
  ToyDistribution dist;
  std::size_t steps = 30000;
  std::size_t batch = 256;
  double lr = 1e-4;
  double grad_clip = 1.0;
  std::vector<std::size_t> hidden = {256, 256, 256};
  std::size_t time_embed_dim = 32;
  TimeSampler sampler{TimeStrategy::Discrete, 50};
  LossWeighting weighting;
  std::uint64_t seed = 0;
  std::size_t w2_samples = 512;
  std::vector<std::size_t> dump_steps = {0, 10000, 20000, 30000};
  std::size_t log_interval = 1000;
};

struct ToyTrainResult {
  PolicyNet policy;
  std::vector<MetricsRow> rows;
  std::map<std::size_t, Tensor> dumps;  // step -> generated samples
  double final_w2 = 0.0;
};

/// Called after each optimizer step with (step, loss).
using ToyProgress = std::function<void(std::size_t, double)>;

ToyTrainResult train_toy(const ToyTrainConfig& config, const ToyProgress& progress = {});

/// n one-step samples from an unconditional toy policy.
Tensor generate_toy_samples(const PolicyNet& policy, std::size_t n, Rng& rng);

}  // namespace mfql
