#include "lexinmt/matrix.hpp"

namespace lexinmt::nnet {

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    fail("matmul: shape mismatch");
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b.row(p);
      for (int j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    fail("matmul_nt: shape mismatch");
  const int n = a.rows, k = a.cols, m = b.rows;
  for (int i = 0; i < n; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int j = 0; j < m; ++j) cr[j] += dot(ar, b.row(j), k);
  }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    fail("matmul_tn: shape mismatch");
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int p = 0; p < n; ++p) {
    const double* ar = a.row(p);
    const double* br = b.row(p);
    for (int i = 0; i < k; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c.row(i);
      for (int j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  matmul_acc(a, b, c);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.rows);
  matmul_nt_acc(a, b, c);
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) fail("add: shape mismatch");
  for (size_t i = 0; i < a.d.size(); ++i) a.d[i] += b.d[i];
}

void axpy_inplace(Matrix& a, double alpha, const Matrix& b) {
  if (!a.same_shape(b)) fail("axpy: shape mismatch");
  for (size_t i = 0; i < a.d.size(); ++i) a.d[i] += alpha * b.d[i];
}

void scale_inplace(Matrix& a, double alpha) {
  for (auto& x : a.d) x *= alpha;
}

void softmax_rows_inplace(Matrix& a) {
  for (int i = 0; i < a.rows; ++i) {
    double* r = a.row(i);
    double mx = r[0];
    for (int j = 1; j < a.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < a.cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (int j = 0; j < a.cols; ++j) r[j] /= sum;
  }
}

double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm2(const double* a, int n) { return std::sqrt(dot(a, a, n)); }

}  // namespace lexinmt::nnet
