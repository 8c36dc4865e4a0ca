#include <cstdlib>
#include <string_view>

#include "mixalign/kernels.hpp"

namespace mixalign::kernels {

#if defined(MIXALIGN_HAVE_AVX2)
const KernelTable& avx2_kernels_impl();
#endif

const KernelTable* avx2_table() {
#if defined(MIXALIGN_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_kernels_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* select_default() {
  const char* env = std::getenv("MIXALIGN_KERNELS");
  const std::string_view choice = env != nullptr ? env : "auto";
  if (choice == "scalar") return &scalar_table();
  if (const KernelTable* simd = avx2_table(); simd != nullptr) return simd;
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = select_default();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

void set_active(const KernelTable& table) { current() = &table; }

}  // namespace mixalign::kernels
