#include "mixalign/kernels.hpp"

namespace mixalign::kernels {
namespace {

void gemm_scalar(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = alpha * (ta == Trans::No ? a[i * lda + p] : a[p * lda + i]);
      if (tb == Trans::No) {
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      }
    }
  }
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void div_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

void scale_scalar(std::size_t n, const double* a, double s, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void relu_scalar(std::size_t n, const double* a, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] < 0.0 ? 0.0 : a[i];
}

void relu_backward_scalar(std::size_t n, const double* x, const double* gout, double* gin) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) gin[i] += gout[i];
  }
}

double sum_scalar(std::size_t n, const double* a) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

double dot_scalar(std::size_t n, const double* a, const double* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",      gemm_scalar,          axpy_scalar, add_scalar, sub_scalar, mul_scalar,
      div_scalar,    scale_scalar,         relu_scalar, relu_backward_scalar,   sum_scalar,
      dot_scalar,
  };
  return table;
}

}  // namespace mixalign::kernels
