#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mbssl/kernels.hpp"

namespace mbssl::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable*& current() {
  static const KernelTable* table = nullptr;
  return table;
}

}  // namespace

bool available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

Isa detect() {
  if (const char* env = std::getenv("MBSSL_KERNELS"); env != nullptr && std::string(env) == "scalar") {
    return Isa::scalar;
  }
  return available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

void select(Isa isa) {
  if (!available(isa)) throw std::runtime_error("kernel ISA not available on this build/CPU");
  current() = isa == Isa::avx2 ? avx2_table() : &scalar_table();
}

const KernelTable& active() {
  if (current() == nullptr) select(detect());
  return *current();
}

}  // namespace mbssl::kernels
