#include "mfql/toy.hpp"

#include <algorithm>

#include "mfql/errors.hpp"

namespace mfql {

namespace {

constexpr std::size_t kToyStateDim = 1;

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor e({rows, cols});
  for (double& x : e.values()) x = rng.normal();
  return e;
}

}  // namespace

Tensor generate_toy_samples(const PolicyNet& policy, std::size_t n, Rng& rng) {
  const Tensor e = standard_normal(n, policy.action_dim, rng);
  return one_step_action(policy, Tensor({n, kToyStateDim}, 0.0), e);
}

ToyTrainResult train_toy(const ToyTrainConfig& config, const ToyProgress& progress) {
  if (config.batch == 0) throw ConfigError("batch must be positive");
  if (config.w2_samples == 0) throw ConfigError("w2_samples must be positive");
  if (config.log_interval == 0) throw ConfigError("log_interval must be positive");

  PolicyConfig pc;
  pc.state_dim = kToyStateDim;
  pc.action_dim = 2;
  pc.hidden = config.hidden;
  pc.time_embed_dim = config.time_embed_dim;
  pc.variant = config.variant;
  ToyTrainResult result{make_policy(pc, config.seed), {}, {}, 0.0};
  PolicyNet& policy = result.policy;

  Rng rng(config.seed);
  Rng data_rng = rng.split();
  Rng eval_rng = rng.split();

  std::vector<Tensor*> params = policy.mlp.tensors();
  std::vector<const Tensor*> const_params(params.begin(), params.end());
  AdamState adam = make_adam_state(const_params, config.lr);

  auto evaluate = [&](std::size_t step) {
    Tensor generated = generate_toy_samples(policy, config.w2_samples, eval_rng);
    Tensor truth = sample_toy(config.dist, config.w2_samples, eval_rng);
    const double w2 = wasserstein2(SampleSet(generated), SampleSet(std::move(truth)));
    result.dumps[step] = std::move(generated);
    return w2;
  };
  auto is_dump = [&](std::size_t step) {
    return std::find(config.dump_steps.begin(), config.dump_steps.end(), step) != config.dump_steps.end();
  };

  if (is_dump(0)) {
    MetricsRow row;
    row.step = 0;
    row.eval_w2 = evaluate(0);
    result.rows.push_back(row);
  }

  const Tensor s({config.batch, kToyStateDim}, 0.0);
  Tensor b({config.batch});
  Tensor t({config.batch});
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const Tensor a = sample_toy(config.dist, config.batch, data_rng);
    const Tensor e = standard_normal(config.batch, 2, data_rng);
    for (std::size_t i = 0; i < config.batch; ++i) std::tie(b[i], t[i]) = sample_times(config.sampler, data_rng);

    MfiObjective obj = mfi_objective(policy, s, a, e, b, t, config.weighting);
    std::vector<const Tensor*> grads;
    for (const Tensor* g : std::as_const(obj.grads).tensors()) grads.push_back(g);
    adam_step(adam, params, grads, config.grad_clip);
    if (progress) progress(step, obj.loss);

    const bool dump = is_dump(step) || step == config.steps;
    if (step % config.log_interval == 0 || dump) {
      MetricsRow row;
      row.step = step;
      row.loss_mfi = obj.loss;
      if (dump) row.eval_w2 = evaluate(step);
      result.rows.push_back(row);
    }
  }

  if (config.steps == 0 && !is_dump(0)) {
    MetricsRow row;
    row.eval_w2 = evaluate(0);
    result.rows.push_back(row);
  }
  result.final_w2 = result.rows.empty() || !result.rows.back().eval_w2 ? 0.0 : *result.rows.back().eval_w2;
  return result;
}

}  // namespace mfql
