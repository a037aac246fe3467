#pragma once

#include <utility>

#include "mfql/nets.hpp"
#include "mfql/rng.hpp"
#include "mfql/tensor.hpp"
#include "mfql/variant.hpp"

namespace mfql {

/// Per-element inputs of a regression target. `b` and `t` are per sample.
struct TargetInputs {
  double a, e, a_t, v, b, t, dgdt;
};

/// A residual reformulation: its regression target and its one-step decoding
/// rule expressed per scalar element.
struct VariantSpec {
  VariantId id;
  double (*target_formula)(const TargetInputs&);
  /// Action from noise `e` and the network output g(e, 0, 1).
  double (*inference_formula)(double e, double g_out);
};

const VariantSpec& variant_spec(VariantId id);

enum class TimeStrategy { Continuous, ContinuousBZero, Discrete };

struct TimeSampler {
  TimeStrategy strategy = TimeStrategy::Continuous;
  std::size_t steps = 50;  // N for Discrete
};

/// Draws (b, t) with 0 <= b <= t <= 1.
std::pair<double, double> sample_times(const TimeSampler& sampler, Rng& rng);

/// Adaptive weight w = (|delta|^2 + c)^-p.
struct LossWeighting {
  double p = 0.2;
  double c = 1e-4;
};

struct Interpolation {
  Tensor a_t;
  Tensor v;
};

/// a_t = (1 - t) a + t e and v = e - a; `t` holds one entry per row.
Interpolation interpolate(const Tensor& a, const Tensor& e, const Tensor& t);
Interpolation interpolate(const Tensor& a, const Tensor& e, double t);

/// Regression target of `variant` for each element. Callers treat the result as a constant.
Tensor mfi_target(VariantId variant, const Tensor& a, const Tensor& e, const Tensor& a_t, const Tensor& v,
                  const Tensor& b, const Tensor& t, const Tensor& dgdt);

struct MfiLoss {
  double loss = 0.0;
  Tensor d_pred;  // gradient with respect to g_pred; the weight is held constant
};

/// mean_i sg(w_i) * |g_pred_i - g_tgt_i|^2.
MfiLoss mfi_loss(const Tensor& g_pred, const Tensor& g_tgt, const LossWeighting& weighting);

/// Decodes actions from noise with one network evaluation at (b, t) = (0, 1).
/// The policy's own variant selects the decoding rule. No clipping.
Tensor one_step_action(const PolicyNet& g, const Tensor& s, const Tensor& e);
Tensor decode_action(VariantId variant, const Tensor& e, const Tensor& g_out);

/// Velocity-then-integrate inference: a = e - u(s, e, 0, 1).
Tensor naive_two_step_action(const PolicyNet& u_net, const Tensor& s, const Tensor& e);

/// Flow-matching regression mean |v_net(s, a_t, t) - (e - a)|^2, evaluated with b = t.
double flow_matching_loss(const PolicyNet& v_net, const Tensor& s, const Tensor& a, const Tensor& e, const Tensor& t);

struct MfiObjective {
  double loss = 0.0;
  MlpParams grads;
  Tensor g_pred;
};

/// One MFI regression evaluation: interpolate, run the policy JVP, build the
/// variant target from it, and backpropagate the weighted loss through the
/// primal output only.
MfiObjective mfi_objective(const PolicyNet& g, const Tensor& s, const Tensor& a, const Tensor& e, const Tensor& b,
                           const Tensor& t, const LossWeighting& weighting);

inline constexpr double kInvSoftsignEpsilon = 1e-8;

double softsign(double x);
/// Throws DomainError when |a| >= 1.
double inv_softsign(double a, double eps = kInvSoftsignEpsilon);

}  // namespace mfql
