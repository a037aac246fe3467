#include "mfql/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mfql/errors.hpp"
#include "mfql/rng.hpp"

namespace mfql {

SampleSet::SampleSet(Tensor pts) : points(std::move(pts)) {
  if (points.rank() != 2) throw ShapeError("sample set must be a [n, d] matrix");
  check_finite(points, "sample set");
}

std::vector<std::size_t> solve_assignment(const Tensor& cost) {
  if (cost.rank() != 2 || cost.rows() != cost.cols()) throw ShapeError("assignment needs a square cost matrix");
  // Shortest augmenting path with row/column potentials; 1-based with a
  // virtual column 0 holding the row being inserted.
  const std::size_t n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

double sliced_wasserstein2(const SampleSet& x, const SampleSet& y, std::size_t projections, std::uint64_t seed) {
  const std::size_t n = x.points.rows();
  const std::size_t d = x.points.cols();
  Rng rng(seed);
  std::vector<double> px(n), py(n), dir(d);
  double total = 0.0;
  for (std::size_t p = 0; p < projections; ++p) {
    double norm = 0.0;
    for (double& c : dir) {
      c = rng.normal();
      norm += c * c;
    }
    norm = std::sqrt(norm);
    for (double& c : dir) c /= norm;
    for (std::size_t i = 0; i < n; ++i) {
      px[i] = 0.0;
      py[i] = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        px[i] += x.points(i, k) * dir[k];
        py[i] += y.points(i, k) * dir[k];
      }
    }
    std::sort(px.begin(), px.end());
    std::sort(py.begin(), py.end());
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += (px[i] - py[i]) * (px[i] - py[i]);
    total += sq / static_cast<double>(n);
  }
  return std::sqrt(static_cast<double>(d) * total / static_cast<double>(projections));
}

double wasserstein2(const SampleSet& x, const SampleSet& y, const W2Options& options) {
  if (x.points.rows() != y.points.rows()) throw ShapeError("wasserstein2 needs equally sized sample sets");
  if (x.points.cols() != y.points.cols()) throw ShapeError("wasserstein2 sample dimensions differ");
  const std::size_t n = x.points.rows();
  const std::size_t d = x.points.cols();
  if (n > options.exact_limit) return sliced_wasserstein2(x, y, options.projections, options.projection_seed);

  Tensor cost({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double c = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x.points(i, k) - y.points(j, k);
        c += diff * diff;
      }
      cost(i, j) = c;
    }
  }
  const std::vector<std::size_t> assignment = solve_assignment(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost(i, assignment[i]);
  return std::sqrt(total / static_cast<double>(n));
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  auto field = [&out](const std::optional<double>& v) {
    out << ',';
    if (v.has_value()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", *v);
      out << buf;
    }
  };
  out << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    out << r.step;
    field(r.loss_mfi);
    field(r.loss_q);
    field(r.loss_critic);
    field(r.alpha);
    field(r.bound_loss);
    field(r.eval_success);
    field(r.eval_w2);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> MetricsTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("metrics column '" + name + "' not found");
  const std::size_t idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  for (const auto& row : rows) {
    if (idx < row.size() && row[idx].has_value()) out.push_back(*row[idx]);
  }
  return out;
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("metrics file has no header", 1);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::optional<double>> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      const std::string cell = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      if (cell.empty()) {
        row.emplace_back(std::nullopt);
      } else {
        try {
          row.emplace_back(std::stod(cell));
        } catch (const std::exception&) {
          throw ParseError("bad metrics value '" + cell + "'", line_no);
        }
      }
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (row.size() != table.header.size()) throw ParseError("metrics row width differs from header", line_no);
    table.rows.push_back(std::move(row));
  }
  return table;
}

CurveSummary curve_summary(std::span<const double> values, std::size_t window) {
  if (values.empty()) throw DataError("curve_summary: column has no values");
  if (window == 0) throw DataError("curve_summary: window must be positive");
  const std::size_t w = std::min(window, values.size());
  std::vector<double> tail(values.end() - static_cast<std::ptrdiff_t>(w), values.end());
  CurveSummary out;
  for (double v : tail) out.final_mean += v;
  out.final_mean /= static_cast<double>(w);
  std::sort(tail.begin(), tail.end());
  out.window_median = w % 2 == 1 ? tail[w / 2] : 0.5 * (tail[w / 2 - 1] + tail[w / 2]);
  return out;
}

CurveSummary curve_summary(const MetricsTable& table, const std::string& column, std::size_t window) {
  const std::vector<double> values = table.column(column);
  return curve_summary(values, window);
}

}  // namespace mfql
