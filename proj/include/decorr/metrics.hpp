#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "decorr/matrix.hpp"

namespace decorr {

// Norm threshold below which a dimension counts as constant (for Corr) or a
// row counts as zero (for SMV). Such entries are excluded from the averages
// and reported, never silently absorbed.
inline constexpr double kMetricEps = 1e-12;

/// Pearson correlation coefficient, clamped to [-1, 1]. Undefined (nullopt)
/// when either input is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "pearson: length mismatch");
  require(x.size() >= 2, "pearson: need at least two samples");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (std::sqrt(sxx) <= kMetricEps || std::sqrt(syy) <= kMetricEps) return std::nullopt;
  double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

struct CorrResult {
  std::optional<double> value;
  int excluded_dims = 0;
};

/// Mean |Pearson| over all pairs of distinct non-constant columns, computed
/// from the centered Gram matrix in one pass. Undefined when fewer than two
/// columns are non-constant.
inline CorrResult corr_metric_detail(const DenseMatrix& x) {
  require(x.cols >= 2, "corr_metric: need at least two dimensions");
  require(x.rows >= 2, "corr_metric: need at least two rows");
  DenseMatrix centered = x;
  for (int j = 0; j < x.cols; ++j) {
    double m = 0.0;
    for (int i = 0; i < x.rows; ++i) m += x(i, j);
    m /= static_cast<double>(x.rows);
    for (int i = 0; i < x.rows; ++i) centered(i, j) -= m;
  }
  DenseMatrix gramm = matmul_tn(centered, centered);
  std::vector<double> norm(x.cols);
  std::vector<char> ok(x.cols);
  int kept = 0;
  for (int j = 0; j < x.cols; ++j) {
    norm[j] = std::sqrt(gramm(j, j));
    ok[j] = norm[j] > kMetricEps;
    kept += ok[j];
  }
  CorrResult res;
  res.excluded_dims = x.cols - kept;
  if (kept < 2) return res;
  double acc = 0.0;
  for (int i = 0; i < x.cols; ++i) {
    if (!ok[i]) continue;
    for (int j = i + 1; j < x.cols; ++j) {
      if (!ok[j]) continue;
      acc += std::min(1.0, std::abs(gramm(i, j)) / (norm[i] * norm[j]));
    }
  }
  res.value = acc / (static_cast<double>(kept) * (kept - 1) / 2.0);
  return res;
}

inline std::optional<double> corr_metric(const DenseMatrix& x) {
  return corr_metric_detail(x).value;
}

/// Half the Euclidean distance between the unit-normalized vectors; always in
/// [0, 1]. Undefined when either vector has (near-)zero norm.
inline std::optional<double> normalized_euclidean(std::span<const double> x,
                                                  std::span<const double> y) {
  require(x.size() == y.size(), "normalized_euclidean: length mismatch");
  double nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  if (nx <= kMetricEps || ny <= kMetricEps) return std::nullopt;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] / nx - y[i] / ny;
    acc += d * d;
  }
  return 0.5 * std::sqrt(acc);
}

struct SmvResult {
  std::optional<double> value;
  int excluded_rows = 0;
};

/// Mean pairwise normalized Euclidean distance over distinct nonzero rows.
/// Exact all-pairs evaluation, blocked so the Gram matrix never fully
/// materializes. Undefined when fewer than two rows are nonzero.
inline SmvResult smv_detail(const DenseMatrix& x) {
  require(x.rows >= 2, "smv: need at least two rows");
  std::vector<int> keep;
  keep.reserve(x.rows);
  std::vector<double> inv_norm(x.rows, 0.0);
  for (int i = 0; i < x.rows; ++i) {
    double n2 = 0.0;
    for (int j = 0; j < x.cols; ++j) n2 += x(i, j) * x(i, j);
    const double n = std::sqrt(n2);
    if (n > kMetricEps) {
      keep.push_back(i);
      inv_norm[i] = 1.0 / n;
    }
  }
  SmvResult res;
  res.excluded_rows = x.rows - static_cast<int>(keep.size());
  const int m = static_cast<int>(keep.size());
  if (m < 2) return res;

  DenseMatrix unit(m, x.cols);
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < x.cols; ++j) unit(r, j) = x(keep[r], j) * inv_norm[keep[r]];

  const int block = 512;
  double acc = 0.0;
  for (int r0 = 0; r0 < m; r0 += block) {
    const int rows = std::min(block, m - r0);
    DenseMatrix chunk(rows, x.cols);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < x.cols; ++j) chunk(r, j) = unit(r0 + r, j);
    DenseMatrix dots = matmul_nt(chunk, unit);  // rows x m
    for (int r = 0; r < rows; ++r)
      for (int c = r0 + r + 1; c < m; ++c) {
        const double g = dots(r, c);
        // 2 - 2g cancels catastrophically once rows are within ~1e-7 angle;
        // such pairs contribute at most ~5e-8 and count as coincident, which
        // also makes identical rows give exactly 0
        if (g < 1.0 - 1e-15) acc += 0.5 * std::sqrt(std::max(0.0, 2.0 - 2.0 * g));
      }
  }
  res.value = acc / (static_cast<double>(m) * (m - 1) / 2.0);
  return res;
}

inline std::optional<double> smv(const DenseMatrix& x) { return smv_detail(x).value; }

/// Corr and SMV of one representation matrix together with the exclusion
/// counts of both metrics.
struct MetricReport {
  std::optional<double> corr;
  std::optional<double> smv;
  int excluded_dims = 0;
  int excluded_rows = 0;
};

inline MetricReport metric_report(const DenseMatrix& x) {
  CorrResult c = corr_metric_detail(x);
  SmvResult s = smv_detail(x);
  return {c.value, s.value, c.excluded_dims, s.excluded_rows};
}

}  // namespace decorr
