#pragma once

// Data-parallel inner loops used by the tensor engine.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA variant. The active table is chosen once at
// startup from the CPU feature bits; MIXALIGN_KERNELS=scalar|avx2 overrides
// the choice. Variants agree to rounding, not bitwise: FMA contraction and
// lane-wise partial sums change the last bits.

#include <cstddef>
#include <string_view>

namespace mixalign::kernels {

enum class Trans { No, Yes };

struct KernelTable {
  std::string_view name;

  // C = alpha * op(A) * op(B) + beta * C, row-major, op(A) is M x K, op(B) is K x N.
  void (*gemm)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
               const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
               double* c, std::size_t ldc);

  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out = a (op) b, all length n
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  void (*sub)(std::size_t n, const double* a, const double* b, double* out);
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  void (*div)(std::size_t n, const double* a, const double* b, double* out);
  // out = a * s
  void (*scale)(std::size_t n, const double* a, double s, double* out);
  // out = max(a, 0)
  void (*relu)(std::size_t n, const double* a, double* out);
  // gin += (x > 0) ? gout : 0
  void (*relu_backward)(std::size_t n, const double* x, const double* gout, double* gin);
  double (*sum)(std::size_t n, const double* a);
  double (*dot)(std::size_t n, const double* a, const double* b);
};

const KernelTable& scalar_table();
// nullptr when the binary or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table selected for this process.
const KernelTable& active();

// Replaces the active table; used by equivalence tests and benchmarks.
void set_active(const KernelTable& table);

}  // namespace mixalign::kernels
