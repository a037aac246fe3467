#include "mfql/mlp.hpp"

#include <cmath>

#include <Eigen/Core>

#include "mfql/errors.hpp"
#include "mfql/rng.hpp"

namespace mfql {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMatMap as_mat(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }
MatMap as_mat(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Shared forward routine; the tangent is propagated when `dx` is non-null.
Tensor run_forward(const MlpParams& params, const Tensor& x, const Tensor* dx, Tensor* dy, MlpCache& cache) {
  const MlpSpec& spec = params.spec;
  require_matrix(x, spec.input_size(), "mlp input");
  const std::size_t batch = x.rows();
  cache.batch = batch;
  cache.layers.assign(params.layers.size(), {});

  Tensor h = x;
  Tensor dh;
  if (dx != nullptr) dh = *dx;

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const DenseLayer& layer = params.layers[l];
    const std::size_t out = layer.weight.cols();
    const bool last = l + 1 == params.layers.size();
    LayerCache& lc = cache.layers[l];

    Tensor z({batch, out});
    as_mat(z).noalias() = as_mat(h) * as_mat(layer.weight);
    as_mat(z).rowwise() += ConstVecMap(layer.bias.data(), out);
    Tensor dz;
    if (dx != nullptr) {
      dz = Tensor({batch, out});
      as_mat(dz).noalias() = as_mat(dh) * as_mat(layer.weight);
    }
    lc.input = std::move(h);

    if (last) {
      h = std::move(z);
      if (dx != nullptr) dh = std::move(dz);
      break;
    }

    if (layer.has_norm()) {
      lc.normalized = Tensor({batch, out});
      lc.inv_std = Tensor({batch});
      const double n = static_cast<double>(out);
      for (std::size_t r = 0; r < batch; ++r) {
        auto zr = z.row(r);
        double mean = 0.0;
        for (double v : zr) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : zr) var += (v - mean) * (v - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        lc.inv_std[r] = inv;
        auto xr = lc.normalized.row(r);
        for (std::size_t j = 0; j < out; ++j) xr[j] = (zr[j] - mean) * inv;
        if (dx != nullptr) {
          auto dzr = dz.row(r);
          double dmean = 0.0;
          for (double v : dzr) dmean += v;
          dmean /= n;
          double proj = 0.0;
          for (std::size_t j = 0; j < out; ++j) proj += xr[j] * (dzr[j] - dmean);
          proj /= n;
          for (std::size_t j = 0; j < out; ++j) dzr[j] = inv * (dzr[j] - dmean - xr[j] * proj);
        }
        for (std::size_t j = 0; j < out; ++j) {
          zr[j] = xr[j] * layer.ln_gain[j] + layer.ln_shift[j];
          if (dx != nullptr) dz(r, j) *= layer.ln_gain[j];
        }
      }
    }

    lc.activation_input = z;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double u = lc.activation_input[i];
      const double s = sigmoid(u);
      z[i] = u * s;
      if (dx != nullptr) dz[i] *= s * (1.0 + u * (1.0 - s));
    }
    h = std::move(z);
    if (dx != nullptr) dh = std::move(dz);
  }

  check_finite(h, "mlp output");
  if (dy != nullptr) {
    check_finite(dh, "mlp tangent output");
    *dy = std::move(dh);
  }
  return h;
}

void check_cache(const MlpParams& params, const MlpCache& cache, const Tensor& dl_dy) {
  if (cache.layers.size() != params.layers.size()) throw ShapeError("mlp cache does not match network depth");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerCache& lc = cache.layers[l];
    if (lc.input.rank() != 2 || lc.input.rows() != cache.batch || lc.input.cols() != params.layers[l].weight.rows()) {
      throw ShapeError("stale mlp cache at layer " + std::to_string(l));
    }
  }
  if (dl_dy.rank() != 2 || dl_dy.rows() != cache.batch || dl_dy.cols() != params.spec.output_size()) {
    throw ShapeError("mlp backward: upstream gradient shape " + shape_string(dl_dy.shape()) + " does not match output");
  }
}

}  // namespace

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("mlp spec needs at least input and output sizes");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ConfigError("mlp layer sizes must be positive");
  }
}

std::vector<Tensor*> MlpParams::tensors() {
  std::vector<Tensor*> out;
  for (DenseLayer& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.has_norm()) {
      out.push_back(&layer.ln_gain);
      out.push_back(&layer.ln_shift);
    }
  }
  return out;
}

std::vector<const Tensor*> MlpParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const DenseLayer& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.has_norm()) {
      out.push_back(&layer.ln_gain);
      out.push_back(&layer.ln_shift);
    }
  }
  return out;
}

std::vector<std::string> MlpParams::tensor_names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    out.push_back(p + "weight");
    out.push_back(p + "bias");
    if (layers[l].has_norm()) {
      out.push_back(p + "ln_gain");
      out.push_back(p + "ln_shift");
    }
  }
  return out;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z = *this;
  for (Tensor* t : z.tensors()) t->fill(0.0);
  return z;
}

MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  MlpParams params;
  params.spec = spec;
  const std::size_t n_layers = spec.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const bool last = l + 1 == n_layers;
    DenseLayer layer;
    layer.weight = Tensor({in, out});
    layer.bias = Tensor({out});
    double stddev = std::sqrt(2.0 / static_cast<double>(in));
    if (last) stddev = spec.final_init == FinalInit::Zero ? 0.0 : 0.01 * stddev;
    if (stddev > 0.0) {
      for (double& w : layer.weight.values()) w = stddev * rng.normal();
    }
    if (!last && spec.use_layer_norm) {
      layer.ln_gain = Tensor({out}, 1.0);
      layer.ln_shift = Tensor({out}, 0.0);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

MlpForward mlp_forward(const MlpParams& params, const Tensor& x) {
  MlpForward result;
  result.y = run_forward(params, x, nullptr, nullptr, result.cache);
  return result;
}

MlpJvp mlp_jvp(const MlpParams& params, const DualTensor& x) {
  MlpJvp result;
  result.y = run_forward(params, x.primal, &x.tangent, &result.dy, result.cache);
  return result;
}

MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache, const Tensor& dl_dy) {
  check_cache(params, cache, dl_dy);
  MlpBackward result{params.zeros_like(), Tensor()};
  const std::size_t batch = cache.batch;

  Tensor grad = dl_dy;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const DenseLayer& layer = params.layers[li];
    const LayerCache& lc = cache.layers[li];
    DenseLayer& g = result.grads.layers[li];
    const std::size_t out = layer.weight.cols();
    const bool last = li + 1 == params.layers.size();

    if (!last) {
      // grad arrives w.r.t. the activation output.
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double u = lc.activation_input[i];
        const double s = sigmoid(u);
        grad[i] *= s * (1.0 + u * (1.0 - s));
      }
      if (layer.has_norm()) {
        const double n = static_cast<double>(out);
        for (std::size_t r = 0; r < batch; ++r) {
          auto gr = grad.row(r);
          auto xr = lc.normalized.row(r);
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (std::size_t j = 0; j < out; ++j) {
            g.ln_gain[j] += gr[j] * xr[j];
            g.ln_shift[j] += gr[j];
            gr[j] *= layer.ln_gain[j];
            mean_g += gr[j];
            mean_gx += gr[j] * xr[j];
          }
          mean_g /= n;
          mean_gx /= n;
          const double inv = lc.inv_std[r];
          for (std::size_t j = 0; j < out; ++j) gr[j] = inv * (gr[j] - mean_g - xr[j] * mean_gx);
        }
      }
    }

    as_mat(g.weight).noalias() = as_mat(lc.input).transpose() * as_mat(grad);
    for (std::size_t r = 0; r < batch; ++r) {
      auto gr = grad.row(r);
      for (std::size_t j = 0; j < out; ++j) g.bias[j] += gr[j];
    }
    Tensor dx({batch, layer.weight.rows()});
    as_mat(dx).noalias() = as_mat(grad) * as_mat(layer.weight).transpose();
    grad = std::move(dx);
  }
  result.dx = std::move(grad);
  return result;
}

}  // namespace mfql
