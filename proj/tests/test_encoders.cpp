#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "mgcr/encoders.hpp"
#include "mgcr/error.hpp"
#include "mgcr/ops.hpp"

using namespace mgcr;
using ag::Tensor;
using model::TextEncoder;
using model::VisualEncoder;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.image_size = 64;
  c.channels = {32, 64, 128, 256};
  c.d = 64;
  c.heads = 4;
  c.text_len = 16;
  c.vocab_size = 30;
  return c;
}

}  // namespace

TEST(VisualEncoder, PyramidShapes) {
  nn::ParamStore s;
  nn::Rng rng(1);
  const VisualEncoder enc(s, rng, small_config());
  const auto pyr = enc(testutil::random_tensor(rng, {64, 64, 3}, 0, 1));
  const std::array<std::size_t, 4> sides{16, 8, 4, 2}, chans{32, 64, 128, 256};
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(pyr.heights[j], sides[j]);
    EXPECT_EQ(pyr.widths[j], sides[j]);
    EXPECT_EQ(pyr.stages[j].shape(), (ag::Shape{sides[j] * sides[j], chans[j]}));
  }
  // non-square input, any sides divisible by 32
  const auto wide = enc(testutil::random_tensor(rng, {32, 96, 3}, 0, 1));
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(wide.heights[j], 32u / (4u << j));
    EXPECT_EQ(wide.widths[j], 96u / (4u << j));
  }
}

TEST(VisualEncoder, RejectsBadImages) {
  nn::ParamStore s;
  nn::Rng rng(2);
  const VisualEncoder enc(s, rng, small_config());
  EXPECT_THROW(enc(Tensor::zeros({48, 64, 3})), ConfigError);
  EXPECT_THROW(enc(Tensor::zeros({64, 64})), ShapeError);
}

TEST(VisualEncoder, DeterministicAcrossCalls) {
  nn::ParamStore s;
  nn::Rng rng(3);
  const VisualEncoder enc(s, rng, small_config());
  const Tensor img = testutil::random_tensor(rng, {64, 64, 3}, 0, 1);
  const auto a = enc(img), b = enc(img);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_TRUE(testutil::same_values(a.stages[j], b.stages[j]));
}

// Two branches through one encoder: the parameter gradient is the sum of the
// single-branch gradients.
TEST(VisualEncoder, SharedWeightsAccumulateBothBranches) {
  ModelConfig c = small_config();
  c.image_size = 32;
  c.channels = {8, 8, 16, 16};
  nn::ParamStore s;
  nn::Rng rng(4);
  const VisualEncoder enc(s, rng, c);
  const Tensor i1 = testutil::random_tensor(rng, {32, 32, 3}, 0, 1);
  const Tensor i2 = testutil::random_tensor(rng, {32, 32, 3}, 0, 1);
  const auto branch_loss = [&](const Tensor& img) { return ag::sum(ag::mul(enc(img).stages[3], enc(img).stages[3])); };
  const auto grads_of = [&](auto&& make_loss) {
    s.zero_grad();
    ag::Tape tape;
    ag::TapeScope scope(tape);
    tape.backward(make_loss());
    std::vector<std::vector<double>> g;
    for (auto& p : s.params()) g.emplace_back(p.value.grad().begin(), p.value.grad().end());
    return g;
  };
  const auto g1 = grads_of([&] { return branch_loss(i1); });
  const auto g2 = grads_of([&] { return branch_loss(i2); });
  const auto both = grads_of([&] { return ag::add(branch_loss(i1), branch_loss(i2)); });
  for (std::size_t p = 0; p < both.size(); ++p)
    for (std::size_t i = 0; i < both[p].size(); ++i) EXPECT_NEAR(both[p][i], g1[p][i] + g2[p][i], 1e-10);
}

TEST(TextEncoder, ShapeAndPadMasking) {
  nn::ParamStore s;
  nn::Rng rng(5);
  const TextEncoder enc(s, rng, small_config());
  std::vector<int> ids{2, 7, 9, 11, 3};
  ids.resize(16, 0);
  const auto t = enc(ids);
  EXPECT_EQ(t.features.shape(), (ag::Shape{16, 64}));
  ASSERT_EQ(t.pad_mask.size(), 16u);
  EXPECT_FALSE(t.pad_mask[4]);
  EXPECT_TRUE(t.pad_mask[5]);
  ASSERT_FALSE(t.attention.empty());
  for (const auto& p : t.attention)
    for (std::size_t i = 0; i < 16; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < 16; ++j) {
        if (j >= 5) EXPECT_EQ(p.at(i, j), 0.0);
        row += p.at(i, j);
      }
      EXPECT_NEAR(row, 1.0, 1e-6);
    }
}

TEST(TextEncoder, TokenOrderMatters) {
  nn::ParamStore s;
  nn::Rng rng(6);
  const TextEncoder enc(s, rng, small_config());
  std::vector<int> a{2, 7, 9, 11, 3}, b{2, 9, 7, 11, 3};
  a.resize(16, 0);
  b.resize(16, 0);
  EXPECT_GT(testutil::max_abs_diff(enc(a).features.data(), enc(b).features.data()), 1e-6);
}

TEST(TextEncoder, Errors) {
  nn::ParamStore s;
  nn::Rng rng(7);
  const TextEncoder enc(s, rng, small_config());
  std::vector<int> bad(16, 0);
  bad[0] = 30;
  EXPECT_THROW(enc(bad), IndexError);
  EXPECT_THROW(enc(std::vector<int>(16, 0)), ContractError);
}

TEST(TextEncoder, SinusoidalTable) {
  const Tensor p = TextEncoder::sinusoidal_positions(4, 6);
  ASSERT_EQ(p.shape(), (ag::Shape{4, 6}));
  for (std::size_t pos = 0; pos < 4; ++pos)
    for (std::size_t i = 0; i < 3; ++i) {
      const double angle = double(pos) / std::pow(10000.0, 2.0 * double(i) / 6.0);
      EXPECT_NEAR(p.at(pos, 2 * i), std::sin(angle), 1e-14);
      EXPECT_NEAR(p.at(pos, 2 * i + 1), std::cos(angle), 1e-14);
    }
}
