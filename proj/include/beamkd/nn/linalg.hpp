#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace beamkd::nn {

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Raw-pointer products over contiguous row-major operands.  `accumulate`
// selects C += ... versus C = ....

/// C[m x n] = A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

/// C[m x n] = A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

/// C[m x n] = A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

/// Matrix conveniences; `c` is resized when not accumulating.
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

/// out[cols x rows] = in^T
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out);

}  // namespace beamkd::nn
