// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include "mbssl/kernels.hpp"

#if defined(__x86_64__) && defined(MBSSL_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>

namespace mbssl::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  }
  double sum = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

// One row of C against a 16-wide column panel of B, accumulators kept in registers.
inline void nn_panel16(const double* arow, std::size_t k, const double* b, std::size_t ldb,
                       double* c) {
  __m256d c0 = _mm256_loadu_pd(c);
  __m256d c1 = _mm256_loadu_pd(c + 4);
  __m256d c2 = _mm256_loadu_pd(c + 8);
  __m256d c3 = _mm256_loadu_pd(c + 12);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d av = _mm256_set1_pd(arow[p]);
    const double* brow = b + p * ldb;
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
    c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
    c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
  _mm256_storeu_pd(c + 8, c2);
  _mm256_storeu_pd(c + 12, c3);
}

void gemm_avx2(const GemmArgs& g) {
  if (!g.accumulate) {
    for (std::size_t i = 0; i < g.m; ++i) std::fill_n(g.c + i * g.ldc, g.n, 0.0);
  }
  if (!g.trans_a && !g.trans_b) {
    for (std::size_t i = 0; i < g.m; ++i) {
      const double* arow = g.a + i * g.lda;
      double* crow = g.c + i * g.ldc;
      std::size_t j = 0;
      for (; j + 16 <= g.n; j += 16) nn_panel16(arow, g.k, g.b + j, g.ldb, crow + j);
      for (; j + 4 <= g.n; j += 4) {
        __m256d acc = _mm256_loadu_pd(crow + j);
        for (std::size_t p = 0; p < g.k; ++p) {
          acc = _mm256_fmadd_pd(_mm256_set1_pd(arow[p]), _mm256_loadu_pd(g.b + p * g.ldb + j), acc);
        }
        _mm256_storeu_pd(crow + j, acc);
      }
      for (; j < g.n; ++j) {
        double sum = crow[j];
        for (std::size_t p = 0; p < g.k; ++p) sum += arow[p] * g.b[p * g.ldb + j];
        crow[j] = sum;
      }
    }
  } else if (!g.trans_a && g.trans_b) {
    for (std::size_t i = 0; i < g.m; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) {
        g.c[i * g.ldc + j] += dot_avx2(g.a + i * g.lda, g.b + j * g.ldb, g.k);
      }
    }
  } else if (g.trans_a && !g.trans_b) {
    for (std::size_t p = 0; p < g.k; ++p) {
      const double* arow = g.a + p * g.lda;
      const double* brow = g.b + p * g.ldb;
      for (std::size_t i = 0; i < g.m; ++i) {
        if (arow[i] != 0.0) axpy_avx2(arow[i], brow, g.c + i * g.ldc, g.n);
      }
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

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, "avx2", dot_avx2, axpy_avx2, mul_avx2, gemm_avx2};
  return &table;
}

}  // namespace mbssl::kernels

#else

namespace mbssl::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace mbssl::kernels

#endif
