#pragma once

#include <cstdint>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "mgcr/nn.hpp"
#include "mgcr/tensor.hpp"

namespace mgcr::testutil {

inline ag::Tensor random_tensor(nn::Rng& rng, ag::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ag::numel_of(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return ag::Tensor::from(std::move(shape), std::move(v));
}

inline std::uint64_t bits(double x) {
  std::uint64_t b;
  std::memcpy(&b, &x, sizeof b);
  return b;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (bits(a[i]) != bits(b[i])) return false;
  return true;
}

inline bool same_values(const ag::Tensor& a, const ag::Tensor& b) {
  return a.shape() == b.shape() && bitwise_equal(a.data(), b.data());
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mgcr::testutil
