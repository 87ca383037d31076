#pragma once

// Dense double-precision inner loops with a scalar reference and SIMD
// variants selected at runtime.
//
// Every variant performs, for each output element, the same sequence of
// IEEE operations as the scalar reference (vectorization runs across
// independent output elements, never across a reduction, and no fused
// multiply-add is used). Variants are therefore bitwise interchangeable.

#include <cstddef>
#include <string_view>

namespace mgcr::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // c[m x n] = a[m x k] * b[k x n], all row-major, c overwritten.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  void (*relu)(const double* a, double* out, std::size_t n);
  void (*abs)(const double* a, double* out, std::size_t n);
  // out[i] = g[i] where a[i] > 0, else 0
  void (*relu_backward)(const double* a, const double* g, double* out,
                        std::size_t n);
};

bool isa_supported(Isa isa);

// Table for a specific ISA; throws mgcr::ConfigError if unsupported here.
const KernelTable& kernels_for(Isa isa);

// Process-wide table. Picks the best supported ISA unless the environment
// variable MGCR_SIMD is set to "scalar", "avx2" or "neon".
const KernelTable& kernels();

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
}  // namespace detail

}  // namespace mgcr::simd
