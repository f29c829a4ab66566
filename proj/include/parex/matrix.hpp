#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace parex {

// Dense row-major matrix of doubles. Hand-rolled on purpose: every product
// accumulates in a fixed (row, col, k) order, so two code paths that compute
// the same quantity produce bit-identical results. Desk-scale sizes only.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::int64_t rows, std::int64_t cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), 0.0) {}

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }

  double& operator()(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * cols_ + j)];
  }
  double operator()(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * cols_ + j)];
  }

  double* row(std::int64_t i) { return data_.data() + i * cols_; }
  const double* row(std::int64_t i) const { return data_.data() + i * cols_; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.rows());
  Matrix c(a.rows(), b.cols());
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::int64_t k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::int64_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// C = A * B^T
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.cols());
  Matrix c(a.rows(), b.rows());
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    for (std::int64_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (std::int64_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

// C = A^T * B
inline Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  assert(a.rows() == b.rows());
  Matrix c(a.cols(), b.cols());
  for (std::int64_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::int64_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i);
      for (std::int64_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

inline Matrix relu(const Matrix& a) {
  Matrix r(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    r.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return r;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = std::abs(a.data()[i] - b.data()[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace parex
