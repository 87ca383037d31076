#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "mgcr/error.hpp"
#include "mgcr/gradcheck.hpp"
#include "mgcr/ops.hpp"

using namespace mgcr;
using ag::Tensor;

TEST(Tensor, ShapeAndDataContract) {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({0, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({2, 2, 2}).rows(), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
}

TEST(Tensor, CopiesAliasDetachDoesNot) {
  Tensor a = Tensor::zeros({2});
  Tensor b = a;
  b.mutable_data()[0] = 4.0;
  EXPECT_EQ(a[0], 4.0);
  Tensor c = a.detach();
  c.mutable_data()[0] = 7.0;
  EXPECT_EQ(a[0], 4.0);
  EXPECT_FALSE(c.requires_grad());
}

TEST(Tape, NoRecordingWithoutActiveTape) {
  const Tensor x = Tensor::full({2, 2}, 1.0, true);
  const Tensor y = ag::add(x, x);
  EXPECT_TRUE(y.is_leaf());
  EXPECT_EQ(ag::active_tape(), nullptr);
}

TEST(Tape, ScopeRestoresPrevious) {
  ag::Tape outer, inner;
  {
    ag::TapeScope a(outer);
    {
      ag::TapeScope b(inner);
      EXPECT_EQ(ag::active_tape(), &inner);
    }
    EXPECT_EQ(ag::active_tape(), &outer);
  }
  EXPECT_EQ(ag::active_tape(), nullptr);
}

TEST(Tape, NonScalarLossIsContractError) {
  ag::Tape tape;
  ag::TapeScope scope(tape);
  const Tensor x = Tensor::full({2, 2}, 1.0, true);
  EXPECT_THROW(tape.backward(ag::add(x, x)), ContractError);
}

TEST(Tape, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  for (int rep = 0; rep < 2; ++rep) {
    ag::Tape tape;
    ag::TapeScope scope(tape);
    tape.backward(ag::mul(x, x));  // d/dx x^2 = 6
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Tape, RepeatedBackwardOnSameTapeResetsIntermediates) {
  Tensor x = Tensor::from({1}, {2.0}, true);
  ag::Tape tape;
  ag::TapeScope scope(tape);
  const Tensor y = ag::scale(x, 3.0);
  const Tensor l = ag::mul(y, y);  // 9 x^2, gradient 36 at x=2
  tape.backward(l);
  tape.backward(l);
  EXPECT_DOUBLE_EQ(x.grad()[0], 72.0);
}

TEST(Tape, SharedSubexpressionSumsBothPaths) {
  Tensor x = Tensor::from({1, 1}, {1.5}, true);
  ag::Tape tape;
  ag::TapeScope scope(tape);
  const Tensor y = ag::sigmoid(x);
  tape.backward(ag::sum(ag::add(y, ag::mul(y, x))));
  const double s = 1.0 / (1.0 + std::exp(-1.5));
  const double ds = s * (1 - s);
  EXPECT_NEAR(x.grad()[0], ds + ds * 1.5 + s, 1e-15);
}

// A user-defined op whose backward is deliberately wrong must be caught by
// the finite-difference harness; the same op with the right gradient passes.
namespace {

Tensor cube(const Tensor& x, double grad_factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i] * x[i];
  Tensor y = Tensor::from(x.shape(), std::move(out));
  if (ag::active_tape() && x.requires_grad()) {
    y.set_requires_grad(true);
    y.impl()->leaf = false;
    ag::active_tape()->record(ag::TapeNode{ag::OpKind::custom, {x.impl()}, y.impl(), [grad_factor](const ag::TapeNode& n) {
      auto& g = ag::grad_buffer(*n.inputs[0]);
      const auto& xv = n.inputs[0]->data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.output->grad[i] * grad_factor * xv[i] * xv[i];
    }});
  }
  return y;
}

}  // namespace

TEST(Tape, GradcheckDetectsInjectedBackwardFault) {
  nn::Rng rng(3);
  const Tensor x = testutil::random_tensor(rng, {2, 3});
  const auto good = gradcheck::check([&] { return ag::sum(cube(x, 3.0)); }, {x});
  EXPECT_LT(good.max_rel_err, 1e-7);
  const auto bad = gradcheck::check([&] { return ag::sum(cube(x, 2.9)); }, {x});
  EXPECT_GT(bad.max_rel_err, 1e-2);
}
