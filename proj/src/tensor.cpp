#include "mfql/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mfql/errors.hpp"

namespace mfql {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

DualTensor::DualTensor(Tensor primal_value, Tensor tangent_value)
    : primal(std::move(primal_value)), tangent(std::move(tangent_value)) {
  require_same_shape(primal, tangent, "dual tensor tangent");
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& t, std::size_t cols, std::string_view what) {
  if (t.rank() != 2 || t.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected [batch," + std::to_string(cols) + "], got " +
                     shape_string(t.shape()));
  }
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

void check_finite(const Tensor& t, std::string_view what) {
  if (!all_finite(t.values())) throw NumericError(std::string(what) + " contains non-finite values");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double k) {
  Tensor out = a;
  for (double& x : out.values()) x *= k;
  return out;
}

void axpy(double k, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += k * x[i];
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const Tensor& a) { return dot(a, a); }

Tensor hcat(std::initializer_list<const Tensor*> parts) {
  if (parts.size() == 0) throw ShapeError("hcat of nothing");
  const std::size_t rows = (*parts.begin())->rows();
  std::size_t cols = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != 2 || p->rows() != rows) throw ShapeError("hcat: row count mismatch");
    cols += p->cols();
  }
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.data() + r * cols;
    for (const Tensor* p : parts) {
      auto src = p->row(r);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

Tensor column_slice(const Tensor& t, std::size_t begin, std::size_t count) {
  if (t.rank() != 2 || count == 0 || begin + count > t.cols()) {
    throw ShapeError("column_slice out of range for " + shape_string(t.shape()));
  }
  Tensor out({t.rows(), count});
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto src = t.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices) {
  if (t.rank() != 2) throw ShapeError("gather_rows expects a matrix");
  Tensor out({indices.size(), t.cols()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) throw ShapeError("gather_rows index out of range");
    auto src = t.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor repeat_rows(const Tensor& t, std::size_t times) {
  if (t.rank() != 2 || times == 0) throw ShapeError("repeat_rows expects a matrix and times >= 1");
  Tensor out({t.rows() * times, t.cols()});
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto src = t.row(r);
    for (std::size_t k = 0; k < times; ++k) std::copy(src.begin(), src.end(), out.row(r * times + k).begin());
  }
  return out;
}

}  // namespace mfql
