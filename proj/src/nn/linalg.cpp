#include "beamkd/nn/linalg.hpp"

#include <algorithm>

#include "beamkd/errors.hpp"
#include "beamkd/simd/kernels.hpp"

namespace beamkd::nn {

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (m == 0 || n == 0 || k == 0) return;
  simd::active().gemm(m, n, k, a, k, b, n, c, n);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (m == 0 || n == 0 || k == 0) return;
  // Narrow outputs are cheaper as dot products than as a transposed gemm.
  if (n < 8) {
    const auto& kt = simd::active();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += kt.dot(a + i * k, b + j * k, k);
    return;
  }
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  transpose(n, k, b, bt.data());
  simd::active().gemm(m, n, k, a, k, bt.data(), n, c, n);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (m == 0 || n == 0 || k == 0) return;
  thread_local std::vector<double> at;
  at.resize(m * k);
  transpose(k, m, a, at.data());
  simd::active().gemm(m, n, k, at.data(), k, b, n, c, n);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols != b.rows) throw UsageError("matmul: inner dimensions differ");
  if (!accumulate) c = Matrix(a.rows, b.cols);
  else if (c.rows != a.rows || c.cols != b.cols) throw UsageError("matmul: output shape");
  gemm_nn(a.rows, b.cols, a.cols, a.data.data(), b.data.data(), c.data.data(), true);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols != b.cols) throw UsageError("matmul_nt: inner dimensions differ");
  if (!accumulate) c = Matrix(a.rows, b.rows);
  else if (c.rows != a.rows || c.cols != b.rows) throw UsageError("matmul_nt: output shape");
  gemm_nt(a.rows, b.rows, a.cols, a.data.data(), b.data.data(), c.data.data(), true);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.rows != b.rows) throw UsageError("matmul_tn: inner dimensions differ");
  if (!accumulate) c = Matrix(a.cols, b.cols);
  else if (c.rows != a.cols || c.cols != b.cols) throw UsageError("matmul_tn: output shape");
  gemm_tn(a.cols, b.cols, a.rows, a.data.data(), b.data.data(), c.data.data(), true);
}

}  // namespace beamkd::nn
