#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "mgcr/error.hpp"
#include "mgcr/gradcheck.hpp"
#include "mgcr/nn.hpp"
#include "mgcr/ops.hpp"

using namespace mgcr;
using ag::Tensor;

TEST(Rng, SameSeedSameStream) {
  nn::Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs = differs || x != c.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, BelowStaysInRangeAndHitsEveryValue) {
  nn::Rng r(5);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(ParamStore, RegistrationOrderAndLookup) {
  nn::ParamStore s;
  nn::Rng rng(1);
  s.add_uniform("a", {2, 3}, 0.5, rng);
  s.add_constant("b", {4}, 1.0);
  s.add_constant("buf", {5}, 0.0, false);
  ASSERT_EQ(s.params().size(), 3u);
  EXPECT_EQ(s.params()[0].name, "a");
  EXPECT_EQ(s.params()[2].name, "buf");
  EXPECT_EQ(s.scalar_count(), 10u);
  EXPECT_EQ(s.scalar_count(false), 15u);
  ASSERT_NE(s.find("b"), nullptr);
  EXPECT_EQ(s.find("nope"), nullptr);
  for (double v : s.find("a")->value.data()) EXPECT_LE(std::abs(v), 0.5);
  EXPECT_THROW(s.add_constant("a", {1}, 0.0), ContractError);
}

TEST(Nn, HeadsForPicksLargestDivisor) {
  EXPECT_EQ(nn::heads_for(64, 4), 4u);
  EXPECT_EQ(nn::heads_for(12, 5), 4u);
  EXPECT_EQ(nn::heads_for(7, 4), 1u);
  EXPECT_EQ(nn::heads_for(8, 0), 1u);
}

TEST(Nn, LinearMatchesLoop) {
  nn::ParamStore s;
  nn::Rng rng(2);
  const auto lin = nn::make_linear(s, rng, "l", 3, 2);
  const Tensor x = testutil::random_tensor(rng, {4, 3});
  const Tensor y = lin(x);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = lin.bias[j];
      for (std::size_t k = 0; k < 3; ++k) acc += x.at(i, k) * lin.weight.at(k, j);
      EXPECT_NEAR(y.at(i, j), acc, 1e-13);
    }
  const double bound = 1.0 / std::sqrt(3.0);
  for (double v : lin.weight.data()) EXPECT_LE(std::abs(v), bound);
}

// One head: softmax(q k^T / sqrt(d)) v, computed by hand.
TEST(Nn, SingleHeadAttentionMatchesLoop) {
  nn::Rng rng(3);
  const std::size_t m = 3, n = 4, d = 5;
  const Tensor q = testutil::random_tensor(rng, {m, d});
  const Tensor k = testutil::random_tensor(rng, {n, d});
  const Tensor v = testutil::random_tensor(rng, {n, d});
  const auto r = nn::attend(q, k, v, 1);
  ASSERT_EQ(r.probs.size(), 1u);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> s(n);
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q.at(i, c) * k.at(j, c);
      s[j] = std::exp(dot / std::sqrt(double(d)));
      z += s[j];
    }
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(r.probs[0].at(i, j), s[j] / z, 1e-12);
    for (std::size_t c = 0; c < d; ++c) {
      double o = 0;
      for (std::size_t j = 0; j < n; ++j) o += s[j] / z * v.at(j, c);
      EXPECT_NEAR(r.out.at(i, c), o, 1e-12);
    }
  }
}

TEST(Nn, AttentionMaskedKeysGetZeroWeight) {
  nn::Rng rng(4);
  const Tensor q = testutil::random_tensor(rng, {2, 4});
  const Tensor k = testutil::random_tensor(rng, {3, 4});
  const Tensor v = testutil::random_tensor(rng, {3, 4});
  const auto r = nn::attend(q, k, v, 2, {false, true, false});
  for (const auto& p : r.probs)
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(p.at(i, 1), 0.0);
  // dropping the masked key entirely gives the same output
  const Tensor k2 = ag::concat({ag::slice(k, 0, 0, 1), ag::slice(k, 0, 2, 1)}, 0);
  const Tensor v2 = ag::concat({ag::slice(v, 0, 0, 1), ag::slice(v, 0, 2, 1)}, 0);
  EXPECT_LT(testutil::max_abs_diff(r.out.data(), nn::attend(q, k2, v2, 2).out.data()), 1e-14);
}

TEST(Nn, EncoderBlockGradients) {
  nn::ParamStore s;
  nn::Rng rng(5);
  const auto blk = nn::make_encoder_block(s, rng, "b", 8, 2, 2);
  const Tensor x = testutil::random_tensor(rng, {5, 8});
  std::vector<Tensor> inputs{x};
  for (const auto& p : s.params()) inputs.push_back(p.value);
  x.impl()->requires_grad = true;
  const auto r = gradcheck::check([&] { return ag::sum(ag::mul(blk(x, {false, false, false, false, true}), blk(x))); }, inputs);
  EXPECT_LT(r.max_rel_err, 1e-5) << r.worst;
}
