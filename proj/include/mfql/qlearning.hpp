#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "mfql/adam.hpp"
#include "mfql/data_env.hpp"
#include "mfql/meanflow.hpp"
#include "mfql/metrics.hpp"
#include "mfql/nets.hpp"

namespace mfql {

struct AlphaSchedulerConfig {
  std::size_t interval = 2000;
  std::size_t window = 20;
  double threshold_hi = 5.0;
  double threshold_lo = 0.2;
  double up = 1.2;
  double down = 0.8;
};

/// Multiplicative controller for the behaviour-cloning weight.
struct AlphaScheduler {
  double alpha = 1.0;
  std::deque<double> history;
  std::size_t steps_since_update = 0;
  AlphaSchedulerConfig config;
};

/// The piecewise rule alone: up * alpha if l_q > hi * mean, down * alpha if
/// l_q < lo * mean, alpha otherwise.
double apply_alpha_rule(double alpha, double l_q, double mean, const AlphaSchedulerConfig& config);

/// Counts a step; every `interval` steps compares `l_q` with the mean of the
/// history recorded so far. `l_q` is then appended (history capped at `window`).
void adaptive_alpha_update(AlphaScheduler& sched, double l_q);

struct TrainConfig {
  VariantId variant = VariantId::Residual_At;
  double alpha0 = 1.0;
  bool adaptive_alpha = true;
  std::size_t k = 5;
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t batch = 256;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double grad_clip = 1.0;
  TimeSampler sampler{TimeStrategy::Discrete, 50};
  LossWeighting weighting;
  std::size_t total_steps = 100000;
  std::size_t log_interval = 100;
  std::size_t eval_interval = 10000;
  std::size_t eval_episodes = 50;
  AlphaSchedulerConfig alpha_schedule;
  std::vector<std::size_t> actor_hidden = {256, 256, 256};
  std::vector<std::size_t> critic_hidden = {512, 512, 512, 512};
  bool critic_layer_norm = true;
  std::size_t ensemble_size = 2;
  std::size_t time_embed_dim = 32;
  std::uint64_t seed = 0;

  /// Throws ConfigError on K == 0, gamma outside [0,1), non-positive rates.
  void validate() const;
};

struct TrainState {
  PolicyNet policy;
  CriticEnsemble critic;
  TargetCritic target;
  AdamState actor_adam;
  AdamState critic_adam;
  AlphaScheduler alpha;
  Rng rng;
  std::size_t step = 0;
};

TrainState make_train_state(const TrainConfig& config, std::size_t state_dim, std::size_t action_dim);

struct BestOfK {
  Tensor actions;            // [B, A]
  Tensor q;                  // [B] aggregate Q of the chosen candidates
  std::vector<std::size_t> chosen;  // candidate index per state
};

/// Draws K one-step candidates per state and keeps the one with the highest
/// aggregate Q; ties go to the lowest candidate index.
BestOfK select_best_of_k(const PolicyNet& policy, const CriticEnsemble& critic, const Tensor& s, std::size_t k,
                         Rng& rng);

struct CriticLoss {
  double loss = 0.0;
  std::vector<MlpParams> grads;
  Tensor target;  // Bellman targets y, [B]
};

/// Bellman regression of every ensemble member onto
/// y = r + gamma (1 - done) Qbar(s', a'), with a' best-of-K under the target critic.
CriticLoss critic_loss(TrainState& state, const TrainConfig& config, const TransitionBatch& batch);

struct ActorLoss {
  double total = 0.0;
  double l_q = 0.0;
  double l_mfi = 0.0;
  double bound_loss = 0.0;
  MlpParams grads;
  Tensor a_pi;
};

/// L_Q + alpha * L_MFI with L_Q = -mean Q(s, a_pi) for a single fresh one-step
/// sample per state. Critic parameters are not updated.
ActorLoss actor_loss(TrainState& state, const TrainConfig& config, const TransitionBatch& batch);

/// Mean over all entries of max(|a| - 1, 0).
double bound_loss(const Tensor& actions);

struct StepMetrics {
  std::size_t step = 0;
  double loss_mfi = 0.0;
  double loss_q = 0.0;
  double loss_critic = 0.0;
  double alpha = 0.0;
  double bound_loss = 0.0;
};

/// Critic update, actor update, Polyak averaging, then the alpha controller.
StepMetrics train_step(TrainState& state, const TrainConfig& config, const TransitionBatch& batch);

/// Success rate of best-of-K one-step actions in the point-reach task.
double rollout_eval(const PolicyNet& policy, const CriticEnsemble& critic, const PointReachEnv& env,
                    std::size_t episodes, std::size_t k, Rng& rng);

struct TrainHooks {
  /// Evaluation hook invoked every `eval_interval` steps; returns the success rate.
  std::function<double(const TrainState&)> evaluate;
  /// Called with every logged row (after evaluation fields are filled).
  std::function<void(const TrainState&, const MetricsRow&)> on_row;
};

/// Artifact locations; unset paths are not written.
struct TrainOutputs {
  std::optional<std::filesystem::path> metrics_csv;
  std::optional<std::filesystem::path> checkpoint;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> rows;
};

/// Offline training with uniform-with-replacement batches. The checkpoint is
/// written at initialization, after every evaluation and at the end; the
/// metrics CSV after every evaluation and at the end. A NumericError leaves
/// the last checkpoint in place and flushes the rows logged so far.
TrainResult train(const TrainConfig& config, const OfflineDataset& dataset, const TrainHooks& hooks = {},
                  const TrainOutputs& outputs = {});

}  // namespace mfql
