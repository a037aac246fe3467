#include "mfql/meanflow.hpp"

#include <cmath>

#include "mfql/errors.hpp"

namespace mfql {

namespace {

// phi = 0: u = v - (t - b) du/dt.
double target_plain_u(const TargetInputs& x) { return x.v - (x.t - x.b) * x.dgdt; }
double target_residual_at(const TargetInputs& x) { return x.a_t + (x.t - x.b - 1.0) * x.v - (x.t - x.b) * x.dgdt; }
// e - v = a, so the phi = e target needs no noise term.
double target_e_minus_u(const TargetInputs& x) { return x.a + (x.t - x.b) * x.dgdt; }
double target_et_minus_u(const TargetInputs& x) {
  return (2.0 * x.t - x.b) * x.e - x.v - (x.t - x.b) * x.dgdt;
}
double target_const2(const TargetInputs& x) { return 2.0 - x.v - (x.t - x.b) * x.dgdt; }
double target_time_t(const TargetInputs& x) { return 2.0 * x.t - x.b - x.v - (x.t - x.b) * x.dgdt; }
double target_two_at(const TargetInputs& x) {
  return 2.0 * x.a_t + (2.0 * x.t - 2.0 * x.b - 1.0) * x.v - (x.t - x.b) * x.dgdt;
}

double decode_noise_minus(double e, double g) { return e - g; }
double decode_identity(double, double g) { return g; }
double decode_const2(double e, double g) { return e - (2.0 - g); }
double decode_time_t(double e, double g) { return e - (1.0 - g); }
double decode_two_at(double e, double g) { return g - e; }

const VariantSpec kSpecs[] = {
    {VariantId::PlainU, target_plain_u, decode_noise_minus},
    {VariantId::Residual_At, target_residual_at, decode_identity},
    {VariantId::E_minus_U, target_e_minus_u, decode_identity},
    {VariantId::Et_minus_U, target_et_minus_u, decode_identity},
    {VariantId::Const2, target_const2, decode_const2},
    {VariantId::TimeT, target_time_t, decode_time_t},
    {VariantId::TwoAt, target_two_at, decode_two_at},
};

double row_value(const Tensor& v, std::size_t r, std::size_t batch, const char* what) {
  if (v.size() != batch) throw ShapeError(std::string(what) + " must hold one value per row");
  return v[r];
}

}  // namespace

const VariantSpec& variant_spec(VariantId id) {
  for (const VariantSpec& s : kSpecs) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown variant");
}

std::pair<double, double> sample_times(const TimeSampler& sampler, Rng& rng) {
  switch (sampler.strategy) {
    case TimeStrategy::Continuous: {
      double b = rng.uniform();
      double t = rng.uniform();
      if (b > t) std::swap(b, t);
      return {b, t};
    }
    case TimeStrategy::ContinuousBZero:
      return {0.0, rng.uniform()};
    case TimeStrategy::Discrete: {
      const std::size_t n = sampler.steps == 0 ? 1 : sampler.steps;
      return {0.0, static_cast<double>(rng.index(n) + 1) / static_cast<double>(n)};
    }
  }
  return {0.0, 1.0};
}

Interpolation interpolate(const Tensor& a, const Tensor& e, const Tensor& t) {
  require_same_shape(a, e, "interpolate");
  Interpolation out{Tensor(a.shape()), Tensor(a.shape())};
  const std::size_t batch = a.rows();
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < batch; ++r) {
    const double tr = row_value(t, r, batch, "interpolate t");
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = r * cols + j;
      out.a_t[k] = (1.0 - tr) * a[k] + tr * e[k];
      out.v[k] = e[k] - a[k];
    }
  }
  return out;
}

Interpolation interpolate(const Tensor& a, const Tensor& e, double t) {
  return interpolate(a, e, Tensor({a.rows()}, t));
}

Tensor mfi_target(VariantId variant, const Tensor& a, const Tensor& e, const Tensor& a_t, const Tensor& v,
                  const Tensor& b, const Tensor& t, const Tensor& dgdt) {
  const VariantSpec& spec = variant_spec(variant);
  require_same_shape(a, e, "mfi_target e");
  require_same_shape(a, a_t, "mfi_target a_t");
  require_same_shape(a, v, "mfi_target v");
  require_same_shape(a, dgdt, "mfi_target dgdt");
  const std::size_t batch = a.rows();
  const std::size_t cols = a.cols();
  Tensor out(a.shape());
  for (std::size_t r = 0; r < batch; ++r) {
    const double br = row_value(b, r, batch, "mfi_target b");
    const double tr = row_value(t, r, batch, "mfi_target t");
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = r * cols + j;
      out[k] = spec.target_formula({a[k], e[k], a_t[k], v[k], br, tr, dgdt[k]});
    }
  }
  check_finite(out, "mfi target");
  return out;
}

MfiLoss mfi_loss(const Tensor& g_pred, const Tensor& g_tgt, const LossWeighting& weighting) {
  require_same_shape(g_pred, g_tgt, "mfi_loss");
  const std::size_t batch = g_pred.rows();
  const std::size_t cols = g_pred.cols();
  MfiLoss out{0.0, Tensor(g_pred.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = g_pred(r, j) - g_tgt(r, j);
      sq += d * d;
    }
    const double w = weighting.p == 0.0 ? 1.0 : std::pow(sq + weighting.c, -weighting.p);
    out.loss += w * sq * inv_batch;
    for (std::size_t j = 0; j < cols; ++j) out.d_pred(r, j) = 2.0 * w * (g_pred(r, j) - g_tgt(r, j)) * inv_batch;
  }
  if (!std::isfinite(out.loss)) throw NumericError("mfi loss is not finite");
  return out;
}

Tensor decode_action(VariantId variant, const Tensor& e, const Tensor& g_out) {
  require_same_shape(e, g_out, "decode_action");
  const VariantSpec& spec = variant_spec(variant);
  Tensor a(e.shape());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = spec.inference_formula(e[k], g_out[k]);
  return a;
}

Tensor one_step_action(const PolicyNet& g, const Tensor& s, const Tensor& e) {
  const std::size_t batch = s.rows();
  const Tensor g_out = policy_forward(g, s, e, Tensor({batch}, 0.0), Tensor({batch}, 1.0));
  return decode_action(g.variant, e, g_out);
}

Tensor naive_two_step_action(const PolicyNet& u_net, const Tensor& s, const Tensor& e) {
  const std::size_t batch = s.rows();
  const Tensor v_ave = policy_forward(u_net, s, e, Tensor({batch}, 0.0), Tensor({batch}, 1.0));
  return sub(e, v_ave);
}

double flow_matching_loss(const PolicyNet& v_net, const Tensor& s, const Tensor& a, const Tensor& e, const Tensor& t) {
  const Interpolation path = interpolate(a, e, t);
  const Tensor pred = policy_forward(v_net, s, path.a_t, t, t);
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - path.v[k];
    loss += d * d;
  }
  return loss / static_cast<double>(a.rows());
}

MfiObjective mfi_objective(const PolicyNet& g, const Tensor& s, const Tensor& a, const Tensor& e, const Tensor& b,
                           const Tensor& t, const LossWeighting& weighting) {
  const Interpolation path = interpolate(a, e, t);
  PolicyJvp jvp = policy_jvp(g, s, path.a_t, b, t, path.v);
  const Tensor target = mfi_target(g.variant, a, e, path.a_t, path.v, b, t, jvp.dgdt);
  MfiLoss loss = mfi_loss(jvp.g_out, target, weighting);
  MlpBackward back = mlp_backward(g.mlp, jvp.cache, loss.d_pred);
  return {loss.loss, std::move(back.grads), std::move(jvp.g_out)};
}

double softsign(double x) { return x / (1.0 + std::abs(x)); }

double inv_softsign(double a, double eps) {
  if (!(std::abs(a) < 1.0)) throw DomainError("inv_softsign requires |a| < 1, got " + std::to_string(a));
  return a / (1.0 - std::abs(a) + eps);
}

}  // namespace mfql
