#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision kernels used by every hot loop in the network code.
//
// Each kernel has a portable scalar reference and (on x86-64) an AVX2+FMA
// variant.  The active table is chosen once at first use from the CPU
// features, and can be pinned with BEAMKD_SIMD={scalar,avx2,auto}.

namespace beamkd::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;

  /// sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  /// y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  /// C[m x n] += A[m x k] * B[k x n], all row-major with leading dimensions.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc);
};

const KernelTable& scalar_kernels();

/// nullptr when the build has no AVX2 variant or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

/// Table used by the library.  Selection is fixed for the process lifetime
/// unless overridden with set_active().
const KernelTable& active();

/// Pins the active table (tests and benchmarks).  Returns false if the
/// requested ISA is unavailable, leaving the selection unchanged.
bool set_active(Isa isa);

}  // namespace beamkd::simd
