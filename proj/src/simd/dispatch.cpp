#include <atomic>
#include <cstdlib>
#include <string_view>

#include "beamkd/simd/kernels.hpp"

namespace beamkd::simd {

#if !defined(BEAMKD_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif

namespace {

const KernelTable* select_initial() {
  const char* env = std::getenv("BEAMKD_SIMD");
  const std::string_view want = env ? env : "auto";
  if (want == "scalar") return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{select_initial()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

bool set_active(Isa isa) {
  const KernelTable* t = isa == Isa::kScalar ? &scalar_kernels() : avx2_kernels();
  if (t == nullptr) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

}  // namespace beamkd::simd
