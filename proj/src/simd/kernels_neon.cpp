// NEON (AArch64) variants, two doubles per vector. Same per-element
// operation order as the scalar reference.

#include "mgcr/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace mgcr::simd {
namespace {

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      float64x2_t c0 = vdupq_n_f64(0.0), c1 = vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(arow[p]);
        const double* brow = b + p * n + j;
        c0 = vaddq_f64(c0, vmulq_f64(av, vld1q_f64(brow)));
        c1 = vaddq_f64(c1, vmulq_f64(av, vld1q_f64(brow + 2)));
      }
      vst1q_f64(crow + j, c0);
      vst1q_f64(crow + j + 2, c1);
    }
    for (std::size_t jj = j; jj < n; ++jj) crow[jj] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      for (std::size_t jj = j; jj < n; ++jj) crow[jj] += av * b[p * n + jj];
    }
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(av, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t sv = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), sv));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void relu(const double* a, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t x = vld1q_f64(a + i);
    const uint64x2_t m = vcgtq_f64(x, zero);
    vst1q_f64(out + i, vreinterpretq_f64_u64(vandq_u64(m, vreinterpretq_u64_f64(x))));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void abs(const double* a, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t x = vld1q_f64(a + i);
    vst1q_f64(out + i, vbslq_f64(vcltq_f64(x, zero), vnegq_f64(x), x));
  }
  for (; i < n; ++i) out[i] = a[i] < 0.0 ? -a[i] : a[i];
}

void relu_backward(const double* a, const double* g, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t m = vcgtq_f64(vld1q_f64(a + i), zero);
    vst1q_f64(out + i, vreinterpretq_f64_u64(vandq_u64(m, vreinterpretq_u64_f64(vld1q_f64(g + i)))));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? g[i] : 0.0;
}

const KernelTable kTable{Isa::neon, gemm, axpy, add, sub, mul,
                         scale,     relu, abs,  relu_backward};

}  // namespace

const KernelTable* detail::neon_table() { return &kTable; }

}  // namespace mgcr::simd

#else

namespace mgcr::simd {
const KernelTable* detail::neon_table() { return nullptr; }
}  // namespace mgcr::simd

#endif
