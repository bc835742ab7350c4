#include "mbssl/kernels.hpp"

#include <algorithm>

namespace mbssl::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void gemm_scalar(const GemmArgs& g) {
  if (!g.accumulate) {
    for (std::size_t i = 0; i < g.m; ++i) std::fill_n(g.c + i * g.ldc, g.n, 0.0);
  }
  if (!g.trans_a && !g.trans_b) {
    for (std::size_t i = 0; i < g.m; ++i) {
      double* crow = g.c + i * g.ldc;
      for (std::size_t p = 0; p < g.k; ++p) {
        axpy_scalar(g.a[i * g.lda + p], g.b + p * g.ldb, crow, g.n);
      }
    }
  } else if (!g.trans_a && g.trans_b) {
    for (std::size_t i = 0; i < g.m; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) {
        g.c[i * g.ldc + j] += dot_scalar(g.a + i * g.lda, g.b + j * g.ldb, g.k);
      }
    }
  } else if (g.trans_a && !g.trans_b) {
    for (std::size_t p = 0; p < g.k; ++p) {
      const double* arow = g.a + p * g.lda;
      const double* brow = g.b + p * g.ldb;
      for (std::size_t i = 0; i < g.m; ++i) axpy_scalar(arow[i], brow, g.c + i * g.ldc, g.n);
    }
  } else {
    for (std::size_t i = 0; i < g.m; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) {
        double sum = 0.0;
        for (std::size_t p = 0; p < g.k; ++p) sum += g.a[p * g.lda + i] * g.b[j * g.ldb + p];
        g.c[i * g.ldc + j] += sum;
      }
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, "scalar", dot_scalar, axpy_scalar, mul_scalar,
                                 gemm_scalar};
  return table;
}

}  // namespace mbssl::kernels
