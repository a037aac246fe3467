#include "mfql/adam.hpp"

#include <cmath>

#include "mfql/errors.hpp"

namespace mfql {

AdamState make_adam_state(std::span<const Tensor* const> params, double learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  for (const Tensor* p : params) {
    state.first_moment.emplace_back(p->shape());
    state.second_moment.emplace_back(p->shape());
  }
  return state;
}

double global_norm(std::span<const Tensor* const> tensors) {
  double sq = 0.0;
  for (const Tensor* t : tensors) {
    for (double g : t->values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                 double max_grad_norm) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], *grads[i], "adam gradient");
    require_same_shape(*params[i], state.first_moment[i], "adam state");
    if (!all_finite(grads[i]->values())) throw NumericError("adam: non-finite gradient, step rejected");
  }

  const double norm = global_norm(grads);
  const double clip = (max_grad_norm > 0.0 && norm > max_grad_norm) ? max_grad_norm / norm : 1.0;

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k] * clip;
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  return norm;
}

}  // namespace mfql
