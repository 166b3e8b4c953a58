#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "soup/kernels.hpp"

namespace soup::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "neon") return Isa::neon;
  throw std::invalid_argument("unknown kernel variant '" + std::string(name) + "'");
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(SOUP_HAVE_AVX2_TU)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(SOUP_HAVE_NEON_TU)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel variant '" + std::string(isa_name(isa)) +
                                "' is not available on this machine");
  }
  switch (isa) {
#if defined(SOUP_HAVE_AVX2_TU)
    case Isa::avx2: return detail::avx2_table;
#endif
#if defined(SOUP_HAVE_NEON_TU)
    case Isa::neon: return detail::neon_table;
#endif
    default: return detail::scalar_table;
  }
}

Isa detect_isa() {
  if (const char* env = std::getenv("SOUP_KERNELS"); env != nullptr && *env != '\0') {
    const Isa wanted = parse_isa(env);
    if (!isa_supported(wanted)) {
      throw std::invalid_argument(std::string("SOUP_KERNELS=") + env +
                                  " is not available on this machine");
    }
    return wanted;
  }
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  if (isa_supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

namespace {
std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{&table_for(detect_isa())};
  return table;
}
}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void force_isa(Isa isa) { current().store(&table_for(isa), std::memory_order_release); }

}  // namespace soup::kernels
