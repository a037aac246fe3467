#include <cmath>

#include "doctest.h"
#include "mfql/adam.hpp"
#include "mfql/embedding.hpp"
#include "mfql/errors.hpp"
#include "mfql/mlp.hpp"
#include "oracles.hpp"

using namespace mfql;

namespace {

MlpParams single_linear(double w) {
  MlpSpec spec{{1, 1}};
  MlpParams p = init_mlp(spec, 0);
  p.layers[0].weight[0] = w;
  return p;
}

double scalarized(const MlpParams& p, const Tensor& x, const Tensor& dl_dy) {
  return dot(mlp_forward(p, x).y, dl_dy);
}

}  // namespace

TEST_CASE("init_mlp: zero final layer, determinism and Kaiming variance") {
  MlpSpec spec{{2, 4, 1}};
  const MlpParams p = init_mlp(spec, 3);
  for (double v : p.layers.back().weight.values()) CHECK(v == 0.0);
  for (double v : p.layers.back().bias.values()) CHECK(v == 0.0);

  const MlpParams q = init_mlp(spec, 3);
  CHECK(p.layers[0].weight == q.layers[0].weight);

  MlpSpec wide{{3, 8, 8, 2}};
  const MlpParams r = init_mlp(wide, 7);
  // 8x8 = 64 draws, expected variance 2/fan_in = 0.25.
  double sq = 0.0;
  for (double v : r.layers[1].weight.values()) sq += v * v;
  const double var = sq / 64.0;
  CHECK(var == doctest::Approx(0.25).epsilon(0.3));

  MlpSpec small{{3, 8, 2}};
  small.final_init = FinalInit::KaimingSmall;
  const MlpParams k = init_mlp(small, 1);
  double max_abs = 0.0;
  for (double v : k.layers.back().weight.values()) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs > 0.0);
  CHECK(max_abs < 0.05);
}

TEST_CASE("init_mlp rejects invalid specs") {
  CHECK_THROWS_AS(init_mlp(MlpSpec{{2, 0, 1}}, 0), ConfigError);
  CHECK_THROWS_AS(init_mlp(MlpSpec{{2}}, 0), ConfigError);
}

TEST_CASE("mlp_forward: linear map, zero init, hand-evaluated composition") {
  const MlpParams lin = single_linear(2.0);
  CHECK(mlp_forward(lin, Tensor::matrix(1, 1, {3.0})).y[0] == 6.0);

  const MlpParams zero = init_mlp(MlpSpec{{3, 5, 2}}, 11);
  Rng rng(1);
  const Tensor x = oracle::random_matrix(4, 3, rng);
  const Tensor y0 = mlp_forward(zero, x).y;
  for (double v : y0.values()) CHECK(v == 0.0);

  for (bool ln : {false, true}) {
    MlpSpec spec{{3, 6, 5, 2}};
    spec.use_layer_norm = ln;
    MlpParams p = init_mlp(spec, 5);
    oracle::randomize(p, rng);
    const Tensor y = mlp_forward(p, x).y;
    const Tensor ref = oracle::eval_mlp(p, x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(mlp_forward(zero, Tensor({4, 2})), ShapeError);
}

TEST_CASE("mlp_backward: linear case and zero upstream gradient") {
  const MlpParams lin = single_linear(2.0);
  const Tensor x = Tensor::matrix(1, 1, {3.0});
  const MlpForward f = mlp_forward(lin, x);
  const MlpBackward b = mlp_backward(lin, f.cache, Tensor::matrix(1, 1, {1.0}));
  CHECK(b.grads.layers[0].weight[0] == 3.0);
  CHECK(b.dx[0] == 2.0);

  MlpSpec spec{{3, 4, 2}};
  spec.use_layer_norm = true;
  MlpParams p = init_mlp(spec, 2);
  Rng rng(4);
  oracle::randomize(p, rng);
  const MlpForward fp = mlp_forward(p, oracle::random_matrix(5, 3, rng));
  const MlpBackward zb = mlp_backward(p, fp.cache, Tensor({5, 2}));
  for (const Tensor* g : zb.grads.tensors()) {
    for (double v : g->values()) CHECK(v == 0.0);
  }
}

TEST_CASE("mlp_backward rejects stale caches") {
  MlpParams p = init_mlp(MlpSpec{{3, 4, 2}}, 2);
  const MlpForward f = mlp_forward(p, Tensor({5, 3}));
  MlpParams other = init_mlp(MlpSpec{{3, 4, 4, 2}}, 2);
  CHECK_THROWS_AS(mlp_backward(other, f.cache, Tensor({5, 2})), ShapeError);
  CHECK_THROWS_AS(mlp_backward(p, f.cache, Tensor({4, 2})), ShapeError);
}

TEST_CASE("mlp_backward matches central finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    MlpSpec spec{{3, 5, 4, 2}};
    spec.use_layer_norm = trial % 2 == 0;
    MlpParams p = init_mlp(spec, trial);
    oracle::randomize(p, rng);
    const Tensor x = oracle::random_matrix(3, 3, rng);
    const Tensor dl_dy = oracle::random_matrix(3, 2, rng);
    const MlpBackward b = mlp_backward(p, mlp_forward(p, x).cache, dl_dy);

    const double h = 1e-6;
    auto params = p.tensors();
    auto grads = b.grads.tensors();
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < params[k]->size(); ++i) {
        const double orig = (*params[k])[i];
        (*params[k])[i] = orig + h;
        const double up = scalarized(p, x, dl_dy);
        (*params[k])[i] = orig - h;
        const double down = scalarized(p, x, dl_dy);
        (*params[k])[i] = orig;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - (*grads[k])[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
    Tensor xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + h;
      const double up = scalarized(p, xp, dl_dy);
      xp[i] = x[i] - h;
      const double down = scalarized(p, xp, dl_dy);
      xp[i] = x[i];
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(fd - b.dx[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("mlp_jvp: linear, zero tangent, finite differences") {
  const MlpParams lin = single_linear(2.0);
  const MlpJvp j = mlp_jvp(lin, DualTensor(Tensor::matrix(1, 1, {3.0}), Tensor::matrix(1, 1, {1.0})));
  CHECK(j.dy[0] == 2.0);
  CHECK(j.y[0] == 6.0);

  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    MlpSpec spec{{4, 6, 6, 3}};
    spec.use_layer_norm = trial % 2 == 1;
    MlpParams p = init_mlp(spec, trial);
    oracle::randomize(p, rng);
    const Tensor x = oracle::random_matrix(2, 4, rng);
    const Tensor zero_jvp = mlp_jvp(p, DualTensor(x, Tensor(x.shape()))).dy;
    for (double v : zero_jvp.values()) CHECK(v == 0.0);

    const Tensor dir = oracle::random_matrix(2, 4, rng);
    const MlpJvp jv = mlp_jvp(p, DualTensor(x, dir));
    const Tensor primal = mlp_forward(p, x).y;
    CHECK(jv.y == primal);

    const double h = 1e-6;
    Tensor xp = x, xm = x;
    axpy(h, dir, xp);
    axpy(-h, dir, xm);
    const Tensor fd = scale(sub(oracle::eval_mlp(p, xp), oracle::eval_mlp(p, xm)), 1.0 / (2 * h));
    const double err = std::sqrt(squared_norm(sub(fd, jv.dy)));
    CHECK(err <= 1e-5 * std::max(1.0, std::sqrt(squared_norm(fd))));
  }
}

TEST_CASE("forward, backward and jvp are bitwise repeatable") {
  MlpSpec spec{{3, 8, 2}};
  spec.use_layer_norm = true;
  MlpParams p = init_mlp(spec, 9);
  Rng rng(2);
  oracle::randomize(p, rng);
  const Tensor x = oracle::random_matrix(6, 3, rng);
  const Tensor g = oracle::random_matrix(6, 2, rng);
  const MlpForward f1 = mlp_forward(p, x);
  const MlpForward f2 = mlp_forward(p, x);
  CHECK(f1.y == f2.y);
  CHECK(mlp_backward(p, f1.cache, g).dx == mlp_backward(p, f2.cache, g).dx);
  CHECK(mlp_jvp(p, DualTensor(x, x)).dy == mlp_jvp(p, DualTensor(x, x)).dy);
}

TEST_CASE("adam: clipping halves a norm-2 gradient") {
  Tensor p = Tensor::vector({0.0, 0.0});
  Tensor g = Tensor::vector({2.0, 0.0});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  const Tensor* cp[] = {&p};
  AdamState st = make_adam_state(cp, 0.1);
  const double norm = adam_step(st, params, grads, 1.0);
  CHECK(norm == 2.0);
  // Effective gradient 1.0: m = 0.1, v = 0.001, first bias-corrected step is -lr * sign.
  CHECK(st.first_moment[0][0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(st.second_moment[0][0] == doctest::Approx(0.001).epsilon(1e-15));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Tensor p = Tensor::vector({1.5, -2.0});
  Tensor g({2});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  const Tensor* cp[] = {&p};
  AdamState st = make_adam_state(cp, 0.1);
  adam_step(st, params, grads, 1.0);
  CHECK(p == Tensor::vector({1.5, -2.0}));
}

TEST_CASE("adam: three steps on a constant gradient match the hand-iterated recursion") {
  Tensor p = Tensor::vector({0.0});
  Tensor g = Tensor::vector({1.0});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  const Tensor* cp[] = {&p};
  AdamState st = make_adam_state(cp, 0.1);
  double m = 0.0, v = 0.0, x = 0.0;
  for (int k = 1; k <= 3; ++k) {
    adam_step(st, params, grads, 0.0);
    m = 0.9 * m + 0.1;
    v = 0.999 * v + 0.001;
    x -= 0.1 * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
    CHECK(std::abs(p[0] - x) <= 1e-12);
  }
  CHECK(st.step == 3);
}

TEST_CASE("adam: non-finite gradients are rejected without mutation") {
  Tensor p = Tensor::vector({1.0});
  Tensor g = Tensor::vector({std::nan("")});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  const Tensor* cp[] = {&p};
  AdamState st = make_adam_state(cp, 0.1);
  CHECK_THROWS_AS(adam_step(st, params, grads, 1.0), NumericError);
  CHECK(p[0] == 1.0);
  CHECK(st.step == 0);
}

TEST_CASE("gradient clipping never increases the norm") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor p({5});
    Tensor g = oracle::random_matrix(5, 1, rng, 0.1 + trial * 0.1);
    g = Tensor({5}, std::vector<double>(g.values().begin(), g.values().end()));
    Tensor* params[] = {&p};
    const Tensor* grads[] = {&g};
    const Tensor* cp[] = {&p};
    AdamState st = make_adam_state(cp, 0.0);
    const double norm = adam_step(st, params, grads, 1.0);
    // First moment after one step is (1 - beta1) * clipped gradient.
    const double clipped = std::sqrt(squared_norm(st.first_moment[0])) / 0.1;
    CHECK(clipped <= std::min(norm, 1.0) + 1e-12);
    if (norm <= 1.0) CHECK(clipped == doctest::Approx(norm).epsilon(1e-12));
  }
}

TEST_CASE("sinusoidal_embed") {
  const Tensor z = sinusoidal_embed(0.0, 8);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(z[2 * i] == 0.0);
    CHECK(z[2 * i + 1] == 1.0);
  }
  CHECK(sinusoidal_embed(0.3, 6) == sinusoidal_embed(0.3, 6));
  const Tensor e = sinusoidal_embed(0.5, 4);
  const double w1 = 1.0 / std::pow(10000.0, 2.0 / 4.0);
  CHECK(std::abs(e[0] - std::sin(0.5)) <= 1e-12);
  CHECK(std::abs(e[1] - std::cos(0.5)) <= 1e-12);
  CHECK(std::abs(e[2] - std::sin(0.5 * w1)) <= 1e-12);
  CHECK(std::abs(e[3] - std::cos(0.5 * w1)) <= 1e-12);
  CHECK_THROWS_AS(sinusoidal_embed(0.5, 3), ConfigError);

  const double h = 1e-6;
  const Tensor d = sinusoidal_embed_derivative(0.37, 8);
  const Tensor fd = scale(sub(sinusoidal_embed(0.37 + h, 8), sinusoidal_embed(0.37 - h, 8)), 1.0 / (2 * h));
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(d[i] - fd[i]) <= 1e-8);
}
