#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace freekd {

// Dense row-major matrix of doubles. Vectors are n x 1, scalars 1 x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative dims");
  }

  static Tensor from(int r, int c, std::initializer_list<double> v) {
    Tensor t(r, c);
    if (v.size() != t.data.size()) throw std::invalid_argument("Tensor::from: size mismatch");
    size_t k = 0;
    for (double x : v) t.data[k++] = x;
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }

  static Tensor identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Compressed sparse row matrix. Values are constants in this project
// (adjacency-derived operators), so only the dense operand carries gradients.
struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> indptr;   // rows + 1 entries
  std::vector<int> indices;  // column ids per nonzero
  std::vector<double> values;

  // y = A x
  Tensor multiply(const Tensor& x) const {
    if (x.rows != cols) throw std::invalid_argument("CsrMatrix::multiply: shape mismatch");
    Tensor y(rows, x.cols);
    for (int r = 0; r < rows; ++r) {
      for (int k = indptr[r]; k < indptr[r + 1]; ++k) {
        const int c = indices[k];
        const double v = values[k];
        const double* xr = &x.data[static_cast<size_t>(c) * x.cols];
        double* yr = &y.data[static_cast<size_t>(r) * x.cols];
        for (int j = 0; j < x.cols; ++j) yr[j] += v * xr[j];
      }
    }
    return y;
  }

  // y = A^T g
  Tensor multiply_transposed(const Tensor& g) const {
    if (g.rows != rows) throw std::invalid_argument("CsrMatrix::multiply_transposed: shape mismatch");
    Tensor y(cols, g.cols);
    for (int r = 0; r < rows; ++r) {
      for (int k = indptr[r]; k < indptr[r + 1]; ++k) {
        const int c = indices[k];
        const double v = values[k];
        const double* gr = &g.data[static_cast<size_t>(r) * g.cols];
        double* yr = &y.data[static_cast<size_t>(c) * g.cols];
        for (int j = 0; j < g.cols; ++j) yr[j] += v * gr[j];
      }
    }
    return y;
  }

  Tensor to_dense() const {
    Tensor d(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int k = indptr[r]; k < indptr[r + 1]; ++k) d.at(r, indices[k]) += values[k];
    return d;
  }
};

}  // namespace freekd
