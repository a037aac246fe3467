#include "mfql/nets.hpp"

#include "mfql/embedding.hpp"
#include "mfql/errors.hpp"

namespace mfql {

namespace {

void check_time_vector(const Tensor& v, std::size_t batch, const char* what) {
  if (v.size() != batch) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(batch) + " entries, got " +
                     shape_string(v.shape()));
  }
}

void check_policy_args(const PolicyNet& g, const Tensor& s, const Tensor& a_t, const Tensor& b, const Tensor& t) {
  require_matrix(s, g.state_dim, "policy state");
  require_matrix(a_t, g.action_dim, "policy action");
  if (s.rows() != a_t.rows()) throw ShapeError("policy: state and action batch sizes differ");
  check_time_vector(b, s.rows(), "policy b");
  check_time_vector(t, s.rows(), "policy t");
}

}  // namespace

PolicyNet make_policy(const PolicyConfig& config, std::uint64_t seed) {
  PolicyNet g;
  g.state_dim = config.state_dim;
  g.action_dim = config.action_dim;
  g.time_embed_dim = config.time_embed_dim;
  g.variant = config.variant;
  if (config.time_embed_dim < 2 || config.time_embed_dim % 2 != 0) {
    throw ConfigError("time_embed_dim must be even and >= 2");
  }
  MlpSpec spec;
  spec.layer_sizes.push_back(g.input_width());
  spec.layer_sizes.insert(spec.layer_sizes.end(), config.hidden.begin(), config.hidden.end());
  spec.layer_sizes.push_back(config.action_dim);
  spec.final_init = config.final_init;
  g.mlp = init_mlp(spec, seed);
  return g;
}

Tensor policy_input(const PolicyNet& g, const Tensor& s, const Tensor& a_t, const Tensor& b, const Tensor& t) {
  check_policy_args(g, s, a_t, b, t);
  const std::size_t batch = s.rows();
  const std::size_t e = g.time_embed_dim;
  Tensor x({batch, g.input_width()});
  for (std::size_t r = 0; r < batch; ++r) {
    auto xr = x.row(r);
    std::size_t c = 0;
    for (double v : s.row(r)) xr[c++] = v;
    for (double v : a_t.row(r)) xr[c++] = v;
    const Tensor eb = sinusoidal_embed(b[r], e);
    const Tensor et = sinusoidal_embed(t[r], e);
    for (double v : eb.values()) xr[c++] = v;
    for (double v : et.values()) xr[c++] = v;
  }
  return x;
}

Tensor policy_forward(const PolicyNet& g, const Tensor& s, const Tensor& a_t, const Tensor& b, const Tensor& t) {
  return mlp_forward(g.mlp, policy_input(g, s, a_t, b, t)).y;
}

PolicyJvp policy_jvp(const PolicyNet& g, const Tensor& s, const Tensor& a_t, const Tensor& b, const Tensor& t,
                     const Tensor& v) {
  Tensor x = policy_input(g, s, a_t, b, t);
  require_same_shape(a_t, v, "policy_jvp direction");
  const std::size_t batch = s.rows();
  const std::size_t e = g.time_embed_dim;
  // Tangent: 0 for s and b, v for a_t, d embed(t)/dt for the t block.
  Tensor dx({batch, g.input_width()});
  for (std::size_t r = 0; r < batch; ++r) {
    auto dr = dx.row(r);
    std::size_t c = g.state_dim;
    for (double vi : v.row(r)) dr[c++] = vi;
    c += e;
    const Tensor det = sinusoidal_embed_derivative(t[r], e);
    for (double d : det.values()) dr[c++] = d;
  }
  MlpJvp jvp = mlp_jvp(g.mlp, DualTensor(std::move(x), std::move(dx)));
  return {std::move(jvp.y), std::move(jvp.dy), std::move(jvp.cache)};
}

std::vector<Tensor*> CriticEnsemble::tensors() {
  std::vector<Tensor*> out;
  for (MlpParams& m : members) {
    for (Tensor* t : m.tensors()) out.push_back(t);
  }
  return out;
}

std::vector<const Tensor*> CriticEnsemble::tensors() const {
  std::vector<const Tensor*> out;
  for (const MlpParams& m : members) {
    for (const Tensor* t : m.tensors()) out.push_back(t);
  }
  return out;
}

CriticEnsemble make_critic(const CriticConfig& config, std::uint64_t seed) {
  if (config.ensemble_size == 0) throw ConfigError("critic ensemble needs at least one member");
  CriticEnsemble q;
  q.state_dim = config.state_dim;
  q.action_dim = config.action_dim;
  MlpSpec spec;
  spec.layer_sizes.push_back(config.state_dim + config.action_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), config.hidden.begin(), config.hidden.end());
  spec.layer_sizes.push_back(1);
  spec.use_layer_norm = config.layer_norm;
  spec.final_init = FinalInit::KaimingSmall;
  for (std::size_t m = 0; m < config.ensemble_size; ++m) q.members.push_back(init_mlp(spec, seed + 7919 * (m + 1)));
  return q;
}

CriticForward critic_forward(const CriticEnsemble& q, const Tensor& s, const Tensor& a) {
  require_matrix(s, q.state_dim, "critic state");
  require_matrix(a, q.action_dim, "critic action");
  if (s.rows() != a.rows()) throw ShapeError("critic: state and action batch sizes differ");
  const Tensor x = hcat({&s, &a});
  const std::size_t batch = s.rows();
  const std::size_t n = q.members.size();
  CriticForward out{Tensor({batch, n}), Tensor({batch}), {}};
  for (std::size_t m = 0; m < n; ++m) {
    MlpForward f = mlp_forward(q.members[m], x);
    for (std::size_t r = 0; r < batch; ++r) out.per_member(r, m) = f.y[r];
    out.caches.push_back(std::move(f.cache));
  }
  for (std::size_t r = 0; r < batch; ++r) {
    double sum = 0.0;
    for (std::size_t m = 0; m < n; ++m) sum += out.per_member(r, m);
    out.aggregate[r] = sum / static_cast<double>(n);
  }
  return out;
}

Tensor aggregate_gradient(const CriticEnsemble& q, const Tensor& dl_dagg) {
  const std::size_t n = q.members.size();
  Tensor out({dl_dagg.size(), n});
  for (std::size_t r = 0; r < dl_dagg.size(); ++r) {
    for (std::size_t m = 0; m < n; ++m) out(r, m) = dl_dagg[r] / static_cast<double>(n);
  }
  return out;
}

CriticBackward critic_backward(const CriticEnsemble& q, const CriticForward& fwd, const Tensor& dl_dmember) {
  const std::size_t n = q.members.size();
  if (dl_dmember.rank() != 2 || dl_dmember.cols() != n || dl_dmember.rows() != fwd.per_member.rows()) {
    throw ShapeError("critic backward: upstream gradient shape " + shape_string(dl_dmember.shape()));
  }
  const std::size_t batch = dl_dmember.rows();
  CriticBackward out{{}, Tensor({batch, q.action_dim})};
  for (std::size_t m = 0; m < n; ++m) {
    Tensor g({batch, 1});
    for (std::size_t r = 0; r < batch; ++r) g[r] = dl_dmember(r, m);
    MlpBackward b = mlp_backward(q.members[m], fwd.caches[m], g);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t j = 0; j < q.action_dim; ++j) out.d_action(r, j) += b.dx(r, q.state_dim + j);
    }
    out.grads.push_back(std::move(b.grads));
  }
  return out;
}

void polyak_update(TargetCritic& target, const CriticEnsemble& online, double tau) {
  std::vector<Tensor*> dst = target.net.tensors();
  std::vector<const Tensor*> src = online.tensors();
  if (dst.size() != src.size()) throw ShapeError("polyak: target and online critics differ in structure");
  for (std::size_t i = 0; i < dst.size(); ++i) require_same_shape(*dst[i], *src[i], "polyak");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    Tensor& d = *dst[i];
    const Tensor& s = *src[i];
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = (1.0 - tau) * d[k] + tau * s[k];
  }
}

}  // namespace mfql
