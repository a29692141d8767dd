#include "polylin/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace polylin::kernels {

bool supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(__i386__)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const Table& table(Isa isa) {
  return isa == Isa::Avx2 && supported(Isa::Avx2) ? detail::avx2_table : detail::scalar_table;
}

Isa active_isa() {
  static const Isa chosen = [] {
    const char* force = std::getenv("POLYLIN_FORCE_SCALAR");
    if (force && std::strcmp(force, "0") != 0) return Isa::Scalar;
    return supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
  }();
  return chosen;
}

std::string_view name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

}  // namespace polylin::kernels
