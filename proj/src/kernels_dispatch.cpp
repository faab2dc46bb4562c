#include <atomic>
#include <cstdlib>
#include <stdexcept>

#include "afree/kernels.hpp"

namespace afree::kern {

namespace {

bool cpu_has_avx2() {
#if defined(AFREE_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("AFREE_KERNELS")) {
    std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && cpu_has_avx2()) return Isa::avx2;
    return Isa::scalar;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa> g_isa{detect()};

} // namespace

bool avx2_supported() { return cpu_has_avx2(); }

Isa active_isa() { return g_isa.load(); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2())
    throw std::runtime_error("AVX2 kernels unavailable on this host");
  g_isa.store(isa);
}

std::string isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& active() {
#ifdef AFREE_HAVE_AVX2
  if (g_isa.load() == Isa::avx2) return avx2_table();
#endif
  return scalar_table();
}

} // namespace afree::kern
