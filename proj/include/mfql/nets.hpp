#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfql/mlp.hpp"
#include "mfql/tensor.hpp"
#include "mfql/variant.hpp"

namespace mfql {

/// g(s, a_t, b, t): an MLP over [s | a_t | embed(b) | embed(t)] whose output
/// is the residual-form quantity of `variant` directly.
struct PolicyNet {
  MlpParams mlp;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t time_embed_dim = 32;
  VariantId variant = VariantId::Residual_At;

  std::size_t input_width() const { return state_dim + action_dim + 2 * time_embed_dim; }
};

struct PolicyConfig {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::vector<std::size_t> hidden = {256, 256, 256};
  std::size_t time_embed_dim = 32;
  VariantId variant = VariantId::Residual_At;
  FinalInit final_init = FinalInit::Zero;
};

PolicyNet make_policy(const PolicyConfig& config, std::uint64_t seed);

/// Builds the network input matrix. `b` and `t` are length-B vectors.
Tensor policy_input(const PolicyNet& g, const Tensor& s, const Tensor& a_t, const Tensor& b, const Tensor& t);

Tensor policy_forward(const PolicyNet& g, const Tensor& s, const Tensor& a_t, const Tensor& b, const Tensor& t);

struct PolicyJvp {
  Tensor g_out;
  Tensor dgdt;
  MlpCache cache;  // forward cache of the primal pass, for backprop through g_out
};

/// Total time derivative along (ds, da_t, db, dt) = (0, v, 0, 1) in one dual pass.
PolicyJvp policy_jvp(const PolicyNet& g, const Tensor& s, const Tensor& a_t, const Tensor& b, const Tensor& t,
                     const Tensor& v);

enum class Aggregation { Mean };

/// Q(s, a) as an ensemble of MLPs over [s | a] with scalar outputs.
struct CriticEnsemble {
  std::vector<MlpParams> members;
  Aggregation aggregation = Aggregation::Mean;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

struct CriticConfig {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::vector<std::size_t> hidden = {512, 512, 512, 512};
  bool layer_norm = true;
  std::size_t ensemble_size = 2;
};

CriticEnsemble make_critic(const CriticConfig& config, std::uint64_t seed);

struct CriticForward {
  Tensor per_member;  // [B, members]
  Tensor aggregate;   // [B]
  std::vector<MlpCache> caches;
};

CriticForward critic_forward(const CriticEnsemble& q, const Tensor& s, const Tensor& a);

struct CriticBackward {
  std::vector<MlpParams> grads;  // per member
  Tensor d_action;               // [B, action_dim]
};

/// Backprop of sum(per_member * dl_dmember). `dl_dmember` is [B, members].
CriticBackward critic_backward(const CriticEnsemble& q, const CriticForward& fwd, const Tensor& dl_dmember);

/// Gradient of sum(aggregate * dl_dagg) spread over members according to the aggregation.
Tensor aggregate_gradient(const CriticEnsemble& q, const Tensor& dl_dagg);

struct TargetCritic {
  CriticEnsemble net;
  double tau = 0.005;
};

/// target <- (1 - tau) * target + tau * online, elementwise.
void polyak_update(TargetCritic& target, const CriticEnsemble& online, double tau);

}  // namespace mfql
