#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "helpers.hpp"
#include "mgcr/error.hpp"
#include "mgcr/simd/kernels.hpp"

using namespace mgcr;
using mgcr::testutil::bitwise_equal;
using simd::Isa;

namespace {

std::vector<Isa> vector_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::avx2, Isa::neon})
    if (simd::isa_supported(isa)) out.push_back(isa);
  return out;
}

std::vector<double> random_vec(nn::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// Sizes that exercise full vectors, register tiles and every tail length.
const std::size_t kLengths[] = {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 100};

}  // namespace

TEST(Simd, ScalarAlwaysAvailable) {
  EXPECT_TRUE(simd::isa_supported(Isa::scalar));
  EXPECT_EQ(simd::kernels_for(Isa::scalar).isa, Isa::scalar);
}

TEST(Simd, UnsupportedIsaIsConfigError) {
  for (Isa isa : {Isa::avx2, Isa::neon})
    if (!simd::isa_supported(isa)) EXPECT_THROW(simd::kernels_for(isa), ConfigError);
}

TEST(Simd, GemmMatchesNaiveLoopBitwise) {
  nn::Rng rng(11);
  const auto& ref = simd::kernels_for(Isa::scalar);
  for (std::size_t m : {1, 3, 4, 5, 9})
    for (std::size_t k : {1, 2, 7, 16})
      for (std::size_t n : {1, 5, 8, 13, 24}) {
        const auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
        std::vector<double> naive(m * n), c(m * n, 99.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            naive[i * n + j] = acc;
          }
        ref.gemm(a.data(), b.data(), c.data(), m, k, n);
        EXPECT_TRUE(bitwise_equal(c, naive)) << m << "x" << k << "x" << n;
      }
}

TEST(Simd, VariantsMatchScalarBitwise) {
  const auto isas = vector_isas();
  if (isas.empty()) GTEST_SKIP() << "no vector ISA on this machine";
  const auto& ref = simd::kernels_for(Isa::scalar);
  nn::Rng rng(5);
  for (Isa isa : isas) {
    const auto& k = simd::kernels_for(isa);
    for (std::size_t n : kLengths) {
      const auto a = random_vec(rng, n), b = random_vec(rng, n);
      std::vector<double> r(n), v(n);
      ref.add(a.data(), b.data(), r.data(), n);
      k.add(a.data(), b.data(), v.data(), n);
      EXPECT_TRUE(bitwise_equal(r, v)) << "add " << n;
      ref.sub(a.data(), b.data(), r.data(), n);
      k.sub(a.data(), b.data(), v.data(), n);
      EXPECT_TRUE(bitwise_equal(r, v)) << "sub " << n;
      ref.mul(a.data(), b.data(), r.data(), n);
      k.mul(a.data(), b.data(), v.data(), n);
      EXPECT_TRUE(bitwise_equal(r, v)) << "mul " << n;
      ref.scale(a.data(), -0.37, r.data(), n);
      k.scale(a.data(), -0.37, v.data(), n);
      EXPECT_TRUE(bitwise_equal(r, v)) << "scale " << n;
      ref.relu(a.data(), r.data(), n);
      k.relu(a.data(), v.data(), n);
      EXPECT_TRUE(bitwise_equal(r, v)) << "relu " << n;
      ref.abs(a.data(), r.data(), n);
      k.abs(a.data(), v.data(), n);
      EXPECT_TRUE(bitwise_equal(r, v)) << "abs " << n;
      ref.relu_backward(a.data(), b.data(), r.data(), n);
      k.relu_backward(a.data(), b.data(), v.data(), n);
      EXPECT_TRUE(bitwise_equal(r, v)) << "relu_backward " << n;
      std::vector<double> ry = b, vy = b;
      ref.axpy(1.25, a.data(), ry.data(), n);
      k.axpy(1.25, a.data(), vy.data(), n);
      EXPECT_TRUE(bitwise_equal(ry, vy)) << "axpy " << n;
    }
    for (std::size_t m : {1, 2, 4, 5, 7})
      for (std::size_t kk : {1, 3, 8, 33})
        for (std::size_t n : kLengths) {
          if (n == 0) continue;
          const auto a = random_vec(rng, m * kk), b = random_vec(rng, kk * n);
          std::vector<double> r(m * n), v(m * n);
          ref.gemm(a.data(), b.data(), r.data(), m, kk, n);
          k.gemm(a.data(), b.data(), v.data(), m, kk, n);
          EXPECT_TRUE(bitwise_equal(r, v)) << simd::isa_name(isa) << " gemm " << m << "x" << kk << "x" << n;
        }
  }
}

TEST(Simd, SpecialValuesMatchScalar) {
  const auto isas = vector_isas();
  if (isas.empty()) GTEST_SKIP() << "no vector ISA on this machine";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> a{-0.0, 0.0, nan, -nan, inf, -inf, 1e-310, -1e-310, 3.0};
  const std::vector<double> g{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto& ref = simd::kernels_for(Isa::scalar);
  for (Isa isa : isas) {
    const auto& k = simd::kernels_for(isa);
    std::vector<double> r(a.size()), v(a.size());
    ref.relu(a.data(), r.data(), a.size());
    k.relu(a.data(), v.data(), a.size());
    EXPECT_TRUE(bitwise_equal(r, v));
    ref.abs(a.data(), r.data(), a.size());
    k.abs(a.data(), v.data(), a.size());
    EXPECT_TRUE(bitwise_equal(r, v));
    ref.relu_backward(a.data(), g.data(), r.data(), a.size());
    k.relu_backward(a.data(), g.data(), v.data(), a.size());
    EXPECT_TRUE(bitwise_equal(r, v));
  }
}
