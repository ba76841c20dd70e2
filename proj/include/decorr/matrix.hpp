#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace decorr {

// Thrown when an input file or external data source violates its format.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("bad float literal: '" + std::string(s) + "'");
  return v;
}

/// Row-major dense matrix of 64-bit floats.
struct DenseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
    require(r >= 0 && c >= 0, "negative matrix dimension");
  }

  static DenseMatrix identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMajor>;
using EigenConstMap = Eigen::Map<const EigenRowMajor>;

inline EigenConstMap eigen_view(const DenseMatrix& m) {
  return EigenConstMap(m.data.data(), m.rows, m.cols);
}
inline EigenMap eigen_view(DenseMatrix& m) {
  return EigenMap(m.data.data(), m.rows, m.cols);
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  DenseMatrix out(a.rows, b.cols);
  eigen_view(out).noalias() = eigen_view(a) * eigen_view(b);
  return out;
}

// a^T * b without materializing the transpose.
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows == b.rows, "matmul_tn: row counts differ");
  DenseMatrix out(a.cols, b.cols);
  eigen_view(out).noalias() = eigen_view(a).transpose() * eigen_view(b);
  return out;
}

// a * b^T.
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols == b.cols, "matmul_nt: column counts differ");
  DenseMatrix out(a.rows, b.rows);
  eigen_view(out).noalias() = eigen_view(a) * eigen_view(b).transpose();
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row; duplicates are forbidden.
struct SparseCSR {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // length rows+1
  std::vector<int> col_idx;
  std::vector<double> values;

  SparseCSR() : row_ptr(1, 0) {}
  SparseCSR(int r, int c) : rows(r), cols(c), row_ptr(static_cast<std::size_t>(r) + 1, 0) {}

  int nnz() const { return static_cast<int>(values.size()); }

  static SparseCSR identity(int n) {
    SparseCSR s(n, n);
    s.col_idx.resize(n);
    s.values.assign(n, 1.0);
    for (int i = 0; i < n; ++i) {
      s.col_idx[i] = i;
      s.row_ptr[i + 1] = i + 1;
    }
    return s;
  }

  // Build from triplets; entries are sorted per row. Duplicate coordinates
  // are a contract violation.
  static SparseCSR from_triplets(int r, int c,
                                 std::vector<std::tuple<int, int, double>> t) {
    SparseCSR s(r, c);
    std::sort(t.begin(), t.end(), [](const auto& x, const auto& y) {
      return std::tie(std::get<0>(x), std::get<1>(x)) <
             std::tie(std::get<0>(y), std::get<1>(y));
    });
    s.col_idx.reserve(t.size());
    s.values.reserve(t.size());
    for (const auto& [i, j, v] : t) {
      require(i >= 0 && i < r && j >= 0 && j < c, "triplet index out of range");
      s.row_ptr[i + 1]++;
      s.col_idx.push_back(j);
      s.values.push_back(v);
    }
    for (int i = 0; i < r; ++i) s.row_ptr[i + 1] += s.row_ptr[i];
    s.validate();
    return s;
  }

  void validate() const {
    require(static_cast<int>(row_ptr.size()) == rows + 1, "csr: row_ptr length");
    require(row_ptr.front() == 0 && row_ptr.back() == nnz(), "csr: row_ptr endpoints");
    for (int i = 0; i < rows; ++i) {
      require(row_ptr[i] <= row_ptr[i + 1], "csr: row_ptr not non-decreasing");
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        require(col_idx[k] >= 0 && col_idx[k] < cols, "csr: column index out of range");
        if (k > row_ptr[i]) require(col_idx[k] > col_idx[k - 1], "csr: duplicate or unsorted column");
      }
    }
  }
};

inline SparseCSR csr_transpose(const SparseCSR& s) {
  SparseCSR t(s.cols, s.rows);
  t.col_idx.resize(s.values.size());
  t.values.resize(s.values.size());
  std::vector<int> count(static_cast<std::size_t>(s.cols), 0);
  for (int c : s.col_idx) count[c]++;
  for (int j = 0; j < s.cols; ++j) t.row_ptr[j + 1] = t.row_ptr[j] + count[j];
  std::vector<int> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (int i = 0; i < s.rows; ++i)
    for (int k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
      int pos = cursor[s.col_idx[k]]++;
      t.col_idx[pos] = i;
      t.values[pos] = s.values[k];
    }
  return t;
}

inline DenseMatrix densify(const SparseCSR& s) {
  DenseMatrix out(s.rows, s.cols);
  for (int i = 0; i < s.rows; ++i)
    for (int k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k)
      out(i, s.col_idx[k]) = s.values[k];
  return out;
}

inline DenseMatrix spmm(const SparseCSR& s, const DenseMatrix& d) {
  require(s.cols == d.rows, "spmm: inner dimensions differ");
  DenseMatrix out(s.rows, d.cols);
  for (int i = 0; i < s.rows; ++i) {
    double* orow = &out.data[static_cast<std::size_t>(i) * d.cols];
    for (int k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
      const double v = s.values[k];
      const double* drow = &d.data[static_cast<std::size_t>(s.col_idx[k]) * d.cols];
      for (int j = 0; j < d.cols; ++j) orow[j] += v * drow[j];
    }
  }
  return out;
}

}  // namespace decorr
