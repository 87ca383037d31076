#include <gtest/gtest.h>

#include "helpers.hpp"
#include "mgcr/error.hpp"
#include "mgcr/fusion.hpp"
#include "mgcr/gradcheck.hpp"
#include "mgcr/ops.hpp"

using namespace mgcr;
using ag::NormMode;
using ag::Tensor;
using model::MgcrModel;

namespace {

const std::vector<int> kTok1{2, 5, 6, 7, 3, 0, 0, 0};
const std::vector<int> kTok2{2, 8, 9, 4, 10, 3, 0, 0};

bool constant(const Tensor& t) {
  for (double v : t.data())
    if (v != t[0]) return false;
  return true;
}

}  // namespace

TEST(Fusion, LvitPreservesShapeAndIsRowStochastic) {
  nn::ParamStore s;
  nn::Rng rng(1);
  ModelConfig c = gradcheck::toy_model_config();
  const model::Lvit lvit(s, rng, c);
  const Tensor v = testutil::random_tensor(rng, {4, 16});
  const Tensor t = testutil::random_tensor(rng, {8, 16});
  const auto f = lvit(v, t);
  EXPECT_EQ(f.tokens.shape(), (ag::Shape{12, 16}));
  EXPECT_EQ(f.visual.shape(), (ag::Shape{4, 16}));
  EXPECT_EQ(f.text.shape(), (ag::Shape{8, 16}));
  EXPECT_EQ(f.side, 2u);
  EXPECT_TRUE(testutil::same_values(f.visual, ag::slice(f.tokens, 0, 0, 4)));
  EXPECT_EQ(f.attention.size(), c.lvit_layers * c.heads);
  for (const auto& p : f.attention)
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double row = 0;
      for (std::size_t j = 0; j < p.cols(); ++j) row += p.at(i, j);
      EXPECT_NEAR(row, 1.0, 1e-9);
    }
  EXPECT_TRUE(testutil::same_values(lvit(v, t).tokens, f.tokens));
  EXPECT_THROW(lvit(v, Tensor::zeros({8, 15})), ShapeError);
}

TEST(Fusion, BinarizeIsStrictlyAboveThreshold) {
  const auto b = model::binarize(Tensor::from({4}, {0.2, 0.5, 0.5000001, 0.9}), 0.5);
  EXPECT_EQ(b, (std::vector<std::uint8_t>{0, 0, 1, 1}));
}

TEST(Fusion, ForwardShapesAndRange) {
  const MgcrModel m(gradcheck::toy_model_config());
  nn::Rng rng(2);
  const auto r = m.forward(testutil::random_tensor(rng, {32, 32, 3}, 0, 1), kTok1,
                           testutil::random_tensor(rng, {32, 32, 3}, 0, 1), kTok2, NormMode::train);
  EXPECT_EQ(r.change.prob.shape(), (ag::Shape{32, 32}));
  EXPECT_EQ(r.change.binary.size(), 1024u);
  for (std::size_t i = 0; i < 1024; ++i) {
    EXPECT_GT(r.change.prob[i], 0.0);
    EXPECT_LT(r.change.prob[i], 1.0);
    EXPECT_EQ(r.change.binary[i], r.change.prob[i] > 0.5 ? 1 : 0);
  }
}

TEST(Fusion, IdenticalBranchesGiveConstantProbability) {
  const MgcrModel m(gradcheck::toy_model_config());
  nn::Rng rng(3);
  const Tensor img = testutil::random_tensor(rng, {32, 32, 3}, 0, 1);
  const auto r = m.forward(img, kTok1, img, kTok1, NormMode::train);
  EXPECT_TRUE(constant(r.change.prob));
}

TEST(Fusion, BranchSwapGivesIdenticalMap) {
  ModelConfig c = gradcheck::toy_model_config();
  c.image_size = 64;
  const MgcrModel m(c);
  nn::Rng rng(4);
  const Tensor a = testutil::random_tensor(rng, {64, 64, 3}, 0, 1);
  const Tensor b = testutil::random_tensor(rng, {64, 64, 3}, 0, 1);
  const auto r1 = m.forward(a, kTok1, b, kTok2, NormMode::train);
  const auto r2 = m.forward(b, kTok2, a, kTok1, NormMode::train);
  EXPECT_TRUE(testutil::same_values(r1.change.prob, r2.change.prob));
  EXPECT_FALSE(constant(r1.change.prob));
}

TEST(Fusion, SameSeedSameModelAndOutput) {
  const MgcrModel m1(gradcheck::toy_model_config()), m2(gradcheck::toy_model_config());
  ASSERT_EQ(m1.params().params().size(), m2.params().params().size());
  for (std::size_t i = 0; i < m1.params().params().size(); ++i)
    EXPECT_TRUE(testutil::same_values(m1.params().params()[i].value, m2.params().params()[i].value));
  nn::Rng rng(5);
  const Tensor a = testutil::random_tensor(rng, {32, 32, 3}, 0, 1);
  const Tensor b = testutil::random_tensor(rng, {32, 32, 3}, 0, 1);
  EXPECT_TRUE(testutil::same_values(m1.forward(a, kTok1, b, kTok2, NormMode::train).change.prob,
                                   m2.forward(a, kTok1, b, kTok2, NormMode::train).change.prob));
}

TEST(Fusion, ForwardRejectsMismatchedInputs) {
  const MgcrModel m(gradcheck::toy_model_config());
  EXPECT_THROW(m.forward(Tensor::zeros({32, 32, 3}), kTok1, Tensor::zeros({64, 64, 3}), kTok2, NormMode::train),
               ContractError);
  EXPECT_THROW(m.forward(Tensor::zeros({64, 64, 3}), kTok1, Tensor::zeros({64, 64, 3}), kTok2, NormMode::train),
               ShapeError);
  const std::vector<int> short_tokens{2, 3};
  EXPECT_THROW(m.forward(Tensor::zeros({32, 32, 3}), short_tokens, Tensor::zeros({32, 32, 3}), kTok2,
                         NormMode::train),
               ShapeError);
  EXPECT_FALSE(m.stats_populated());
  EXPECT_THROW(m.forward(Tensor::zeros({32, 32, 3}), kTok1, Tensor::zeros({32, 32, 3}), kTok2, NormMode::infer),
               ContractError);
}

TEST(Fusion, DecoderRejectsBranchMismatch) {
  ModelConfig c = gradcheck::toy_model_config();
  nn::ParamStore s;
  nn::Rng rng(6);
  const model::VisualEncoder enc(s, rng, c);
  const model::Lvit lvit(s, rng, c);
  const model::ChangeDecoder dec(s, rng, c);
  const auto p1 = enc(testutil::random_tensor(rng, {32, 32, 3}));
  const auto p2 = enc(testutil::random_tensor(rng, {64, 64, 3}));
  const auto f = lvit(testutil::random_tensor(rng, {1, 16}), testutil::random_tensor(rng, {8, 16}));
  const auto g = lvit(testutil::random_tensor(rng, {4, 16}), testutil::random_tensor(rng, {8, 16}));
  EXPECT_THROW(dec(f, g, p1, p1, 0.5), ContractError);
  EXPECT_THROW(dec(f, f, p1, p2, 0.5), ContractError);
}

TEST(Fusion, ModelGradientOnTwentyParameters) {
  const auto r = gradcheck::model_check(21, 20);
  EXPECT_EQ(r.checked, 20u);
  EXPECT_LT(r.max_rel_err, 1e-3) << r.worst;
}
