#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lexinmt/common.hpp"

namespace lexinmt::nnet {

// Dense row-major matrix of doubles. Everything in this codebase is 64-bit
// so finite-difference checks have headroom.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int i, int j) { return d[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return d[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return d.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return d.data() + static_cast<size_t>(i) * cols; }
  size_t size() const { return d.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : d)
      if (!std::isfinite(x)) return false;
    return true;
  }

  static Matrix zeros(int r, int c) { return Matrix(r, c); }
  static Matrix filled(int r, int c, double v) {
    Matrix m(r, c);
    for (auto& x : m.d) x = v;
    return m;
  }
  static Matrix row_vector(const std::vector<double>& v) {
    Matrix m(1, static_cast<int>(v.size()));
    m.d = v;
    return m;
  }
  static Matrix scalar(double v) {
    Matrix m(1, 1);
    m.d[0] = v;
    return m;
  }
};

// c += a @ b
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c);
// c += a @ b^T
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c);
// c += a^T @ b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

void add_inplace(Matrix& a, const Matrix& b);
void axpy_inplace(Matrix& a, double alpha, const Matrix& b);  // a += alpha*b
void scale_inplace(Matrix& a, double alpha);

// Row-wise stable softmax, in place.
void softmax_rows_inplace(Matrix& a);

double dot(const double* a, const double* b, int n);
double norm2(const double* a, int n);

}  // namespace lexinmt::nnet
