// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here runs unless dispatch found the features.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "mixalign/kernels.hpp"

namespace mixalign::kernels {
namespace {

constexpr std::size_t kBlockN = 128;
constexpr std::size_t kBlockK = 128;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> buffers[2];
  return buffers[slot];
}

void transpose_into(const double* src, std::size_t rows, std::size_t cols, std::size_t ld,
                    std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = src + r * ld;
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = s[c];
  }
}

// C[m x n] += alpha * A[m x k] * B[k x n] over one (k, n) block.
void gemm_nn_block(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
                   std::size_t lda, const double* b, std::size_t ldb, double* c,
                   std::size_t ldc) {
  const __m256d valpha = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * lda;
    const double* a1 = a + (i + 1) * lda;
    const double* a2 = a + (i + 2) * lda;
    const double* a3 = a + (i + 3) * lda;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a1 + p);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a2 + p);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a3 + p);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      double* r0 = c + (i + 0) * ldc + j;
      double* r1 = c + (i + 1) * ldc + j;
      double* r2 = c + (i + 2) * ldc + j;
      double* r3 = c + (i + 3) * ldc + j;
      _mm256_storeu_pd(r0, _mm256_fmadd_pd(valpha, c00, _mm256_loadu_pd(r0)));
      _mm256_storeu_pd(r0 + 4, _mm256_fmadd_pd(valpha, c01, _mm256_loadu_pd(r0 + 4)));
      _mm256_storeu_pd(r1, _mm256_fmadd_pd(valpha, c10, _mm256_loadu_pd(r1)));
      _mm256_storeu_pd(r1 + 4, _mm256_fmadd_pd(valpha, c11, _mm256_loadu_pd(r1 + 4)));
      _mm256_storeu_pd(r2, _mm256_fmadd_pd(valpha, c20, _mm256_loadu_pd(r2)));
      _mm256_storeu_pd(r2 + 4, _mm256_fmadd_pd(valpha, c21, _mm256_loadu_pd(r2 + 4)));
      _mm256_storeu_pd(r3, _mm256_fmadd_pd(valpha, c30, _mm256_loadu_pd(r3)));
      _mm256_storeu_pd(r3 + 4, _mm256_fmadd_pd(valpha, c31, _mm256_loadu_pd(r3 + 4)));
    }
    for (; j < n; ++j) {
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = b[p * ldb + j];
        s0 += a0[p] * bv;
        s1 += a1[p] * bv;
        s2 += a2[p] * bv;
        s3 += a3[p] * bv;
      }
      c[(i + 0) * ldc + j] += alpha * s0;
      c[(i + 1) * ldc + j] += alpha * s1;
      c[(i + 2) * ldc + j] += alpha * s2;
      c[(i + 3) * ldc + j] += alpha * s3;
    }
  }
  for (; i < m; ++i) {
    const double* arow = a + i * lda;
    double* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * ldb + j),
                              acc);
      }
      _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(valpha, acc, _mm256_loadu_pd(crow + j)));
    }
    for (; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * ldb + j];
      crow[j] += alpha * s;
    }
  }
}

void gemm_avx2(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
               const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
               double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0) return;
  if (ta == Trans::Yes) {
    // stored as k x m
    transpose_into(a, k, m, lda, scratch(0));
    a = scratch(0).data();
    lda = k;
  }
  if (tb == Trans::Yes) {
    // stored as n x k
    transpose_into(b, n, k, ldb, scratch(1));
    b = scratch(1).data();
    ldb = n;
  }
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t nb = std::min(kBlockN, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t kb = std::min(kBlockK, k - p0);
      gemm_nn_block(m, nb, kb, alpha, a + p0, lda, b + p0 * ldb + j0, ldb, c + j0, ldc);
    }
  }
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename VecOp, typename ScalarOp>
inline void binary_loop(std::size_t n, const double* a, const double* b, double* out, VecOp vop,
                        ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add_avx2(std::size_t n, const double* a, const double* b, double* out) {
  binary_loop(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
              [](double x, double y) { return x + y; });
}

void sub_avx2(std::size_t n, const double* a, const double* b, double* out) {
  binary_loop(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
              [](double x, double y) { return x - y; });
}

void mul_avx2(std::size_t n, const double* a, const double* b, double* out) {
  binary_loop(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
              [](double x, double y) { return x * y; });
}

void div_avx2(std::size_t n, const double* a, const double* b, double* out) {
  binary_loop(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_div_pd(x, y); },
              [](double x, double y) { return x / y; });
}

void scale_avx2(std::size_t n, const double* a, double s, double* out) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void relu_avx2(std::size_t n, const double* a, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    // zero only lanes that compare below zero so NaN passes through
    const __m256d x = _mm256_loadu_pd(a + i);
    const __m256d mask = _mm256_cmp_pd(x, zero, _CMP_LT_OQ);
    _mm256_storeu_pd(out + i, _mm256_andnot_pd(mask, x));
  }
  for (; i < n; ++i) out[i] = a[i] < 0.0 ? 0.0 : a[i];
}

void relu_backward_avx2(std::size_t n, const double* x, const double* gout, double* gin) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(gout + i));
    _mm256_storeu_pd(gin + i, _mm256_add_pd(_mm256_loadu_pd(gin + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gin[i] += gout[i];
  }
}

double sum_avx2(std::size_t n, const double* a) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i];
  return s;
}

double dot_avx2(std::size_t n, const double* a, const double* b) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

const KernelTable& avx2_kernels_impl() {
  static const KernelTable table{
      "avx2",   gemm_avx2,  axpy_avx2, add_avx2,           sub_avx2, mul_avx2,
      div_avx2, scale_avx2, relu_avx2, relu_backward_avx2, sum_avx2, dot_avx2,
  };
  return table;
}

}  // namespace mixalign::kernels
