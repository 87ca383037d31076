#include <cstdlib>
#include <string>

#include "mgcr/error.hpp"
#include "mgcr/simd/kernels.hpp"

namespace mgcr::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      return detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa))
    throw ConfigError("SIMD kernels '" + std::string(isa_name(isa)) +
                      "' are not available on this CPU/build");
  switch (isa) {
    case Isa::avx2: return *detail::avx2_table();
    case Isa::neon: return *detail::neon_table();
    case Isa::scalar: break;
  }
  return detail::scalar_table();
}

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("MGCR_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
      if (want == isa_name(isa)) return kernels_for(isa);
    throw ConfigError("MGCR_SIMD must be one of scalar, avx2, neon (got '" + want + "')");
  }
  for (Isa isa : {Isa::avx2, Isa::neon})
    if (isa_supported(isa)) return kernels_for(isa);
  return detail::scalar_table();
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace mgcr::simd
