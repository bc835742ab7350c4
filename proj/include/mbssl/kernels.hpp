#pragma once
// Dense double-precision kernels with a portable scalar reference and an
// AVX2/FMA variant chosen at runtime.

#include <cstddef>
#include <span>
#include <string_view>

namespace mbssl::kernels {

enum class Isa { scalar, avx2 };

// Row-major C (m x n) = op(A) * op(B), optionally accumulated into C.
// op(A) is m x k; op(B) is k x n. lda/ldb/ldc are the row strides of the
// stored (untransposed) arrays.
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0, n = 0, k = 0;
  const double* a = nullptr;
  std::size_t lda = 0;
  const double* b = nullptr;
  std::size_t ldb = 0;
  double* c = nullptr;
  std::size_t ldc = 0;
  bool accumulate = false;
};

struct KernelTable {
  Isa isa;
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a * b elementwise
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*gemm)(const GemmArgs& args);
};

const KernelTable& scalar_table();

// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

// Best ISA supported by both the build and the running CPU. The environment
// variable MBSSL_KERNELS=scalar forces the reference path.
Isa detect();

const KernelTable& active();

// Overrides the active table; throws if the ISA is unavailable.
void select(Isa isa);

bool available(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  active().mul(a.data(), b.data(), out.data(), a.size());
}

inline void gemm(const GemmArgs& args) { active().gemm(args); }

}  // namespace mbssl::kernels
