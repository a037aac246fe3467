#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfql {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles tagged with its shape.
///
/// Rank 1 tensors are treated as column vectors of length `rows()`, rank 2
/// tensors as `[rows, cols]` matrices (batch-major). Higher ranks are only
/// stored and serialized.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double v);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Primal value paired with a tangent of identical shape for forward-mode
/// differentiation.
struct DualTensor {
  DualTensor(Tensor primal_value, Tensor tangent_value);

  Tensor primal;
  Tensor tangent;
};

std::string shape_string(const Shape& shape);

/// Throws ShapeError unless `a` and `b` have the same shape.
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what);
void require_matrix(const Tensor& t, std::size_t cols, std::string_view what);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void check_finite(const Tensor& t, std::string_view what);
bool all_finite(std::span<const double> values);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
/// y += k * x
void axpy(double k, const Tensor& x, Tensor& y);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);

/// Concatenate matrices with equal row counts along columns.
Tensor hcat(std::initializer_list<const Tensor*> parts);
/// Columns [begin, begin + count) of a matrix.
Tensor column_slice(const Tensor& t, std::size_t begin, std::size_t count);
/// Rows selected by index.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices);
/// Repeat every row `times` times consecutively: row i lands at i*times..i*times+times-1.
Tensor repeat_rows(const Tensor& t, std::size_t times);

}  // namespace mfql
