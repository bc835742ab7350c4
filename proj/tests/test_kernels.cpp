#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mbssl/kernels.hpp"

using namespace mbssl::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double rel_close(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("scalar table is always available") {
  CHECK(available(Isa::scalar));
  CHECK(scalar_table().isa == Isa::scalar);
}

TEST_CASE("active table matches detection") {
  CHECK(active().isa == detect());
}

TEST_CASE("simd variant agrees with scalar reference") {
  if (!available(Isa::avx2)) {
    MESSAGE("AVX2 not available; equivalence test skipped");
    return;
  }
  const KernelTable& ref = scalar_table();
  const KernelTable& simd = *avx2_table();
  std::mt19937_64 rng(7);

  SUBCASE("dot, axpy and mul across tail lengths") {
    for (std::size_t n : {0, 1, 3, 4, 5, 15, 16, 17, 33, 64, 127}) {
      auto a = random_vector(n, rng);
      auto b = random_vector(n, rng);
      CHECK(rel_close(simd.dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n)) < 1e-13);

      auto y1 = random_vector(n, rng);
      auto y2 = y1;
      ref.axpy(0.37, a.data(), y1.data(), n);
      simd.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(rel_close(y2[i], y1[i]) < 1e-14);

      std::vector<double> m1(n), m2(n);
      ref.mul(a.data(), b.data(), m1.data(), n);
      simd.mul(a.data(), b.data(), m2.data(), n);
      CHECK(m1 == m2);
    }
  }

  SUBCASE("gemm in every transpose mode") {
    for (int trial = 0; trial < 40; ++trial) {
      std::uniform_int_distribution<std::size_t> dim(1, 37);
      const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
      for (int mode = 0; mode < 4; ++mode) {
        const bool ta = mode & 1;
        const bool tb = mode & 2;
        auto a = random_vector(m * k, rng);
        auto b = random_vector(k * n, rng);
        auto c0 = random_vector(m * n, rng);
        for (bool accumulate : {false, true}) {
          auto c1 = c0;
          auto c2 = c0;
          GemmArgs g{ta, tb, m, n, k, a.data(), ta ? m : k, b.data(), tb ? k : n, c1.data(), n, accumulate};
          ref.gemm(g);
          g.c = c2.data();
          simd.gemm(g);
          for (std::size_t i = 0; i < m * n; ++i) CHECK(rel_close(c2[i], c1[i]) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("gemm reference matches a naive triple loop") {
  std::mt19937_64 rng(11);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = random_vector(m * k, rng);
  auto b = random_vector(k * n, rng);
  std::vector<double> c(m * n);
  scalar_table().gemm({false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, false});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("select switches the active table") {
  const Isa before = active().isa;
  select(Isa::scalar);
  CHECK(active().isa == Isa::scalar);
  select(before);
  CHECK(active().isa == before);
}
