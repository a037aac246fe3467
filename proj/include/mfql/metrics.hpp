#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfql/tensor.hpp"

namespace mfql {

/// A finite point cloud `[n, d]`, n >= 1.
struct SampleSet {
  explicit SampleSet(Tensor pts);
  Tensor points;
};

struct W2Options {
  std::size_t exact_limit = 512;
  std::size_t projections = 128;
  std::uint64_t projection_seed = 0;
};

/// 2-Wasserstein distance between equally sized sample sets. Exact optimal
/// assignment on squared Euclidean cost up to `exact_limit` points, sliced
/// estimate above it.
double wasserstein2(const SampleSet& x, const SampleSet& y, const W2Options& options = {});

/// Minimum-cost perfect matching of a square cost matrix [n, n]; returns the
/// column assigned to each row.
std::vector<std::size_t> solve_assignment(const Tensor& cost);

/// Sliced estimate sqrt(d * mean_theta W2^2(theta . x, theta . y)) over random unit directions.
double sliced_wasserstein2(const SampleSet& x, const SampleSet& y, std::size_t projections, std::uint64_t seed);

/// One logged row of a training run; unset fields are written empty.
struct MetricsRow {
  std::size_t step = 0;
  std::optional<double> loss_mfi;
  std::optional<double> loss_q;
  std::optional<double> loss_critic;
  std::optional<double> alpha;
  std::optional<double> bound_loss;
  std::optional<double> eval_success;
  std::optional<double> eval_w2;
};

inline constexpr const char* kMetricsHeader =
    "step,loss_mfi,loss_q,loss_critic,alpha,bound_loss,eval_success,eval_w2";

/// Writes header plus rows, numbers with 17 significant digits.
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

/// Parsed metrics CSV. Empty fields are stored as nullopt.
struct MetricsTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;

  /// Present (non-empty) values of `column` in row order; throws DataError if the column is unknown.
  std::vector<double> column(const std::string& name) const;
};

MetricsTable read_metrics_csv(const std::filesystem::path& path);

struct CurveSummary {
  double final_mean = 0.0;
  double window_median = 0.0;
};

/// Mean and median of the last `window` present values of `column`.
CurveSummary curve_summary(const MetricsTable& table, const std::string& column, std::size_t window);
CurveSummary curve_summary(std::span<const double> values, std::size_t window);

}  // namespace mfql
