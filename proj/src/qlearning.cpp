#include "mfql/qlearning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfql/checkpoint.hpp"
#include "mfql/errors.hpp"

namespace mfql {

namespace {

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor e({rows, cols});
  for (double& x : e.values()) x = rng.normal();
  return e;
}

std::vector<const Tensor*> const_view(const std::vector<Tensor*>& v) { return {v.begin(), v.end()}; }

// d action / d g_out of the variant's one-step decoding rule (constant per variant).
double decode_slope(VariantId variant) {
  const VariantSpec& spec = variant_spec(variant);
  return spec.inference_formula(0.0, 1.0) - spec.inference_formula(0.0, 0.0);
}

}  // namespace

double apply_alpha_rule(double alpha, double l_q, double mean, const AlphaSchedulerConfig& config) {
  if (l_q > config.threshold_hi * mean) return config.up * alpha;
  if (l_q < config.threshold_lo * mean) return config.down * alpha;
  return alpha;
}

void adaptive_alpha_update(AlphaScheduler& sched, double l_q) {
  const AlphaSchedulerConfig& cfg = sched.config;
  sched.steps_since_update += 1;
  if (sched.steps_since_update >= cfg.interval && !sched.history.empty()) {
    double mean = 0.0;
    for (double h : sched.history) mean += h;
    mean /= static_cast<double>(sched.history.size());
    sched.alpha = apply_alpha_rule(sched.alpha, l_q, mean, cfg);
    sched.steps_since_update = 0;
  }
  sched.history.push_back(l_q);
  while (sched.history.size() > cfg.window) sched.history.pop_front();
}

void TrainConfig::validate() const {
  if (k == 0) throw ConfigError("K must be a positive integer");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (!(alpha0 > 0.0)) throw ConfigError("alpha0 must be positive");
  if (eval_interval == 0 || log_interval == 0) throw ConfigError("log and eval intervals must be positive");
  if (alpha_schedule.interval == 0 || alpha_schedule.window == 0) {
    throw ConfigError("alpha schedule interval and window must be positive");
  }
  if (!(weighting.p >= 0.0 && weighting.p < 1.0) || !(weighting.c > 0.0)) {
    throw ConfigError("loss weighting needs p in [0, 1) and c > 0");
  }
  if (ensemble_size == 0) throw ConfigError("ensemble_size must be positive");
}

TrainState make_train_state(const TrainConfig& config, std::size_t state_dim, std::size_t action_dim) {
  config.validate();
  PolicyConfig pc;
  pc.state_dim = state_dim;
  pc.action_dim = action_dim;
  pc.hidden = config.actor_hidden;
  pc.time_embed_dim = config.time_embed_dim;
  pc.variant = config.variant;
  CriticConfig cc;
  cc.state_dim = state_dim;
  cc.action_dim = action_dim;
  cc.hidden = config.critic_hidden;
  cc.layer_norm = config.critic_layer_norm;
  cc.ensemble_size = config.ensemble_size;

  Rng root(config.seed);
  const std::uint64_t policy_seed = root.engine()();
  const std::uint64_t critic_seed = root.engine()();
  PolicyNet policy = make_policy(pc, policy_seed);
  CriticEnsemble critic = make_critic(cc, critic_seed);
  TargetCritic target{critic, config.tau};
  AdamState actor_adam = make_adam_state(const_view(policy.mlp.tensors()), config.actor_lr);
  AdamState critic_adam = make_adam_state(const_view(critic.tensors()), config.critic_lr);
  AlphaScheduler alpha;
  alpha.alpha = config.alpha0;
  alpha.config = config.alpha_schedule;
  return TrainState{std::move(policy), std::move(critic), std::move(target), std::move(actor_adam),
                    std::move(critic_adam), std::move(alpha), root.split(), 0};
}

BestOfK select_best_of_k(const PolicyNet& policy, const CriticEnsemble& critic, const Tensor& s, std::size_t k,
                         Rng& rng) {
  if (k == 0) throw ConfigError("K must be a positive integer");
  require_matrix(s, policy.state_dim, "best-of-K state");
  const std::size_t batch = s.rows();
  const std::size_t a_dim = policy.action_dim;
  // Candidate j of state i sits in row i * k + j.
  const Tensor s_rep = repeat_rows(s, k);
  const Tensor e = standard_normal(batch * k, a_dim, rng);
  const Tensor cand = one_step_action(policy, s_rep, e);
  const Tensor q = critic_forward(critic, s_rep, cand).aggregate;

  BestOfK out{Tensor({batch, a_dim}), Tensor({batch}), std::vector<std::size_t>(batch, 0)};
  for (std::size_t i = 0; i < batch; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (q[i * k + j] > q[i * k + best]) best = j;
    }
    out.chosen[i] = best;
    out.q[i] = q[i * k + best];
    for (std::size_t d = 0; d < a_dim; ++d) out.actions(i, d) = cand(i * k + best, d);
  }
  return out;
}

CriticLoss critic_loss(TrainState& state, const TrainConfig& config, const TransitionBatch& batch) {
  const std::size_t n = batch.s.rows();
  const BestOfK next = select_best_of_k(state.policy, state.target.net, batch.s_next, config.k, state.rng);
  CriticLoss out{0.0, {}, Tensor({n})};
  for (std::size_t i = 0; i < n; ++i) {
    out.target[i] = batch.r[i] + config.gamma * (1.0 - batch.done[i]) * next.q[i];
  }
  if (!all_finite(out.target.values())) {
    throw NumericError("non-finite Bellman target at step " + std::to_string(state.step + 1));
  }

  const CriticForward fwd = critic_forward(state.critic, batch.s, batch.a);
  const std::size_t members = state.critic.members.size();
  const double scale = 1.0 / static_cast<double>(n * members);
  Tensor dl({n, members});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < members; ++m) {
      const double d = fwd.per_member(i, m) - out.target[i];
      out.loss += d * d * scale;
      dl(i, m) = 2.0 * d * scale;
    }
  }
  out.grads = critic_backward(state.critic, fwd, dl).grads;
  return out;
}

double bound_loss(const Tensor& actions) {
  if (actions.size() == 0) return 0.0;
  double sum = 0.0;
  for (double a : actions.values()) sum += std::max(std::abs(a) - 1.0, 0.0);
  return sum / static_cast<double>(actions.size());
}

ActorLoss actor_loss(TrainState& state, const TrainConfig& config, const TransitionBatch& batch) {
  const PolicyNet& policy = state.policy;
  const std::size_t n = batch.s.rows();
  const std::size_t a_dim = policy.action_dim;

  Tensor b({n});
  Tensor t({n});
  const Tensor e = standard_normal(n, a_dim, state.rng);
  for (std::size_t i = 0; i < n; ++i) std::tie(b[i], t[i]) = sample_times(config.sampler, state.rng);
  MfiObjective mfi = mfi_objective(policy, batch.s, batch.a, e, b, t, config.weighting);

  const Tensor e_pi = standard_normal(n, a_dim, state.rng);
  const MlpForward g = mlp_forward(policy.mlp, policy_input(policy, batch.s, e_pi, Tensor({n}, 0.0), Tensor({n}, 1.0)));
  Tensor a_pi = decode_action(policy.variant, e_pi, g.y);
  const CriticForward q = critic_forward(state.critic, batch.s, a_pi);
  double l_q = 0.0;
  for (std::size_t i = 0; i < n; ++i) l_q -= q.aggregate[i] / static_cast<double>(n);
  const Tensor dl_dmember = aggregate_gradient(state.critic, Tensor({n}, -1.0 / static_cast<double>(n)));
  const Tensor d_action = critic_backward(state.critic, q, dl_dmember).d_action;
  const Tensor d_g = scale(d_action, decode_slope(policy.variant));
  MlpParams grads = mlp_backward(policy.mlp, g.cache, d_g).grads;

  const double alpha = state.alpha.alpha;
  std::vector<Tensor*> dst = grads.tensors();
  std::vector<const Tensor*> src = std::as_const(mfi.grads).tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) axpy(alpha, *src[i], *dst[i]);

  ActorLoss out;
  out.l_q = l_q;
  out.l_mfi = mfi.loss;
  out.total = l_q + alpha * mfi.loss;
  out.bound_loss = bound_loss(a_pi);
  out.grads = std::move(grads);
  out.a_pi = std::move(a_pi);
  return out;
}

StepMetrics train_step(TrainState& state, const TrainConfig& config, const TransitionBatch& batch) {
  const std::size_t step = state.step + 1;
  auto numeric_context = [step](const NumericError& err) {
    return NumericError(std::string(err.what()) + " (step " + std::to_string(step) + ")");
  };
  try {
    CriticLoss cl = critic_loss(state, config, batch);
    std::vector<const Tensor*> cgrads;
    for (const MlpParams& g : cl.grads) {
      for (const Tensor* t : g.tensors()) cgrads.push_back(t);
    }
    adam_step(state.critic_adam, state.critic.tensors(), cgrads, config.grad_clip);

    ActorLoss al = actor_loss(state, config, batch);
    if (!std::isfinite(al.total)) throw NumericError("non-finite actor loss");
    adam_step(state.actor_adam, state.policy.mlp.tensors(), std::as_const(al.grads).tensors(), config.grad_clip);

    polyak_update(state.target, state.critic, config.tau);
    if (config.adaptive_alpha) adaptive_alpha_update(state.alpha, al.l_q);
    state.step = step;
    return {step, al.l_mfi, al.l_q, cl.loss, state.alpha.alpha, al.bound_loss};
  } catch (const NumericError& err) {
    throw numeric_context(err);
  }
}

double rollout_eval(const PolicyNet& policy, const CriticEnsemble& critic, const PointReachEnv& env,
                    std::size_t episodes, std::size_t k, Rng& rng) {
  const ActionFn act = [&](const Tensor& states, Rng& r) {
    return select_best_of_k(policy, critic, states, k, r).actions;
  };
  return rollout_eval(env, act, episodes, rng);
}

TrainResult train(const TrainConfig& config, const OfflineDataset& dataset, const TrainHooks& hooks,
                  const TrainOutputs& outputs) {
  if (dataset.transitions.empty()) throw DataError("cannot train on an empty dataset");
  TrainResult result{make_train_state(config, dataset.state_dim, dataset.action_dim), {}};
  TrainState& state = result.state;
  Rng data_rng = state.rng.split();
  auto write_metrics = [&] {
    if (outputs.metrics_csv) write_metrics_csv(*outputs.metrics_csv, result.rows);
  };
  auto write_checkpoint = [&] {
    if (outputs.checkpoint) save_model(*outputs.checkpoint, state.policy, state.critic);
  };
  write_checkpoint();
  try {
    for (std::size_t step = 1; step <= config.total_steps; ++step) {
      const TransitionBatch batch = sample_batch(dataset, config.batch, data_rng);
      const StepMetrics m = train_step(state, config, batch);
      const bool eval_now = step % config.eval_interval == 0 || step == config.total_steps;
      if (step % config.log_interval != 0 && !eval_now) continue;
      MetricsRow row;
      row.step = m.step;
      row.loss_mfi = m.loss_mfi;
      row.loss_q = m.loss_q;
      row.loss_critic = m.loss_critic;
      row.alpha = m.alpha;
      row.bound_loss = m.bound_loss;
      if (eval_now && hooks.evaluate) row.eval_success = hooks.evaluate(state);
      result.rows.push_back(row);
      if (hooks.on_row) hooks.on_row(state, row);
      if (eval_now) {
        write_checkpoint();
        write_metrics();
      }
    }
  } catch (const NumericError&) {
    write_metrics();
    throw;
  }
  write_metrics();
  return result;
}

}  // namespace mfql
