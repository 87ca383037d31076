// AVX2 variants. This translation unit is compiled with -mavx2 and is only
// entered after a runtime CPU check; keep it free of shared inline templates.

#include "mgcr/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace mgcr::simd {
namespace {

inline void gemm_tail_scalar(const double* arow, const double* b, double* crow,
                             std::size_t k, std::size_t n, std::size_t j0,
                             std::size_t j1) {
  for (std::size_t j = j0; j < j1; ++j) crow[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
  }
}

// One row, columns [j0, j0 + 4*nv) handled as nv vectors, nv <= 4.
template <int NV>
inline void gemm_row_block(const double* arow, const double* b, double* crow,
                           std::size_t k, std::size_t n, std::size_t j0) {
  __m256d acc[NV];
  for (int v = 0; v < NV; ++v) acc[v] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d av = _mm256_broadcast_sd(arow + p);
    const double* brow = b + p * n + j0;
    for (int v = 0; v < NV; ++v)
      acc[v] = _mm256_add_pd(acc[v], _mm256_mul_pd(av, _mm256_loadu_pd(brow + 4 * v)));
  }
  for (int v = 0; v < NV; ++v) _mm256_storeu_pd(crow + j0 + 4 * v, acc[v]);
}

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n) {
  const std::size_t n8 = n - n % 8;
  std::size_t i = 0;
  // 4 rows x 8 columns register tile.
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * k;
    const double* a1 = a + (i + 1) * k;
    const double* a2 = a + (i + 2) * k;
    const double* a3 = a + (i + 3) * k;
    for (std::size_t j = 0; j < n8; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n + j;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p);
        c00 = _mm256_add_pd(c00, _mm256_mul_pd(av, b0));
        c01 = _mm256_add_pd(c01, _mm256_mul_pd(av, b1));
        av = _mm256_broadcast_sd(a1 + p);
        c10 = _mm256_add_pd(c10, _mm256_mul_pd(av, b0));
        c11 = _mm256_add_pd(c11, _mm256_mul_pd(av, b1));
        av = _mm256_broadcast_sd(a2 + p);
        c20 = _mm256_add_pd(c20, _mm256_mul_pd(av, b0));
        c21 = _mm256_add_pd(c21, _mm256_mul_pd(av, b1));
        av = _mm256_broadcast_sd(a3 + p);
        c30 = _mm256_add_pd(c30, _mm256_mul_pd(av, b0));
        c31 = _mm256_add_pd(c31, _mm256_mul_pd(av, b1));
      }
      _mm256_storeu_pd(c + (i + 0) * n + j, c00);
      _mm256_storeu_pd(c + (i + 0) * n + j + 4, c01);
      _mm256_storeu_pd(c + (i + 1) * n + j, c10);
      _mm256_storeu_pd(c + (i + 1) * n + j + 4, c11);
      _mm256_storeu_pd(c + (i + 2) * n + j, c20);
      _mm256_storeu_pd(c + (i + 2) * n + j + 4, c21);
      _mm256_storeu_pd(c + (i + 3) * n + j, c30);
      _mm256_storeu_pd(c + (i + 3) * n + j + 4, c31);
    }
    for (std::size_t r = 0; r < 4; ++r) {
      const double* arow = a + (i + r) * k;
      double* crow = c + (i + r) * n;
      std::size_t j = n8;
      if (j + 4 <= n) {
        gemm_row_block<1>(arow, b, crow, k, n, j);
        j += 4;
      }
      gemm_tail_scalar(arow, b, crow, k, n, j, n);
    }
  }
  for (; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) gemm_row_block<4>(arow, b, crow, k, n, j);
    for (; j + 4 <= n; j += 4) gemm_row_block<1>(arow, b, crow, k, n, j);
    gemm_tail_scalar(arow, b, crow, k, n, j, n);
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i),
                                          _mm256_mul_pd(av, _mm256_loadu_pd(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  for (; i < n; ++i) out[i] = a[i] * s;
}

// Mask-and rather than max_pd so NaN and -0.0 map exactly like the scalar path.
void relu(const double* a, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(a + i);
    _mm256_storeu_pd(out + i, _mm256_and_pd(_mm256_cmp_pd(x, zero, _CMP_GT_OQ), x));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void abs(const double* a, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(a + i);
    const __m256d neg = _mm256_cmp_pd(x, zero, _CMP_LT_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(x, _mm256_xor_pd(x, sign), neg));
  }
  for (; i < n; ++i) out[i] = a[i] < 0.0 ? -a[i] : a[i];
}

void relu_backward(const double* a, const double* g, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(a + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? g[i] : 0.0;
}

const KernelTable kTable{Isa::avx2, gemm, axpy, add, sub, mul,
                         scale,     relu, abs,  relu_backward};

}  // namespace

const KernelTable* detail::avx2_table() { return &kTable; }

}  // namespace mgcr::simd

#else

namespace mgcr::simd {
const KernelTable* detail::avx2_table() { return nullptr; }
}  // namespace mgcr::simd

#endif
