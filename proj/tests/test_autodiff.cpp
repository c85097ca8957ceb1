#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gic/autodiff.hpp"
#include "gic/error.hpp"
#include "gradcheck.hpp"
#include "primitive_cases.hpp"

using namespace gic;
using namespace gic::ad;
using gic::testing::check_gradients;
using gic::testing::random_tensor;

TEST(Autodiff, ReluValues) {
  Tape t;
  const Var y = relu(t.constant(Tensor(1, 3, {-1.0, 0.0, 2.0})));
  EXPECT_EQ(y.value(), Tensor(1, 3, {0.0, 0.0, 2.0}));
}

TEST(Autodiff, ReluGradientZeroAtKink) {
  Tape t;
  const Var x = t.leaf(Tensor(1, 3, {-1.0, 0.0, 2.0}));
  t.backward(sum(relu(x)));
  EXPECT_EQ(t.grad(x), Tensor(1, 3, {0.0, 0.0, 1.0}));
}

TEST(Autodiff, CrossEntropyUniformLogits) {
  Tape t;
  const Var l = softmax_cross_entropy(t.constant(Tensor(1, 2, {0.0, 0.0})), 0);
  EXPECT_NEAR(l.value().item(), std::log(2.0), 1e-15);
}

TEST(Autodiff, CrossEntropyStableForLargeLogits) {
  Tape t;
  const Var l = softmax_cross_entropy(t.constant(Tensor(1, 2, {1000.0, -1000.0})), 0);
  EXPECT_TRUE(std::isfinite(l.value().item()));
  EXPECT_NEAR(l.value().item(), 0.0, 1e-300);
}

TEST(Autodiff, LogsumexpGradientIsSoftmax) {
  Tape t;
  const Var x = t.leaf(Tensor(1, 2, {1.0, 2.0}));
  t.backward(logsumexp(x, Axis::cols));
  const std::vector<double> logits{1.0, 2.0};
  const auto sm = softmax(logits);
  EXPECT_NEAR(t.grad(x)[0], sm[0], 1e-15);
  EXPECT_NEAR(t.grad(x)[1], sm[1], 1e-15);
  EXPECT_NEAR(t.grad(x)[0], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
}

TEST(Autodiff, SumOfSquares) {
  Tape t;
  const Var x = t.leaf(Tensor(1, 2, {1.0, 2.0}));
  t.backward(sum(square(x)));
  EXPECT_EQ(t.grad(x), Tensor(1, 2, {2.0, 4.0}));
}

TEST(Autodiff, ConstantLossGivesZeroGrads) {
  Tape t;
  const Var x = t.leaf(Tensor(1, 3, {1.0, 2.0, 3.0}));
  t.backward(add_scalar(sum(scale(x, 0.0)), 5.0));
  EXPECT_EQ(t.grad(x), Tensor(Shape{1, 3}, 0.0));
}

TEST(Autodiff, UnusedLeafGetsZeros) {
  Tape t;
  const Var x = t.leaf(Tensor::scalar(1.0));
  const Var y = t.leaf(Tensor(1, 2, {1.0, 1.0}));
  t.backward(square(x));
  EXPECT_EQ(t.grad(y), Tensor(Shape{1, 2}, 0.0));
}

TEST(Autodiff, AccumulatesAcrossPaths) {
  Tape t;
  const Var x = t.leaf(Tensor::scalar(3.0));
  t.backward(add(mul(x, x), x));
  EXPECT_EQ(t.grad(x).item(), 7.0);
}

TEST(Autodiff, MaxReduceFirstIndexOnTies) {
  Tape t;
  const Var x = t.leaf(Tensor(2, 2, {1.0, 5.0, 1.0, 5.0}));
  std::vector<std::size_t> idx;
  t.backward(sum(max_reduce(x, Axis::rows, &idx)));
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 0}));
  EXPECT_EQ(t.grad(x), Tensor(2, 2, {1.0, 1.0, 0.0, 0.0}));
}

TEST(Autodiff, ShapeMismatchNamesShapes) {
  Tape t;
  try {
    add(t.constant(Tensor(Shape{2, 3})), t.constant(Tensor(Shape{3, 2})));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(Shape{2, 3}.str()), std::string::npos) << msg;
    EXPECT_NE(msg.find(Shape{3, 2}.str()), std::string::npos) << msg;
  }
}

TEST(Autodiff, MatmulShapeMismatch) {
  Tape t;
  EXPECT_THROW(matmul(t.constant(Tensor(Shape{2, 3})), t.constant(Tensor(Shape{2, 3}))), ShapeError);
}

TEST(Autodiff, BackwardContracts) {
  Tape t;
  const Var x = t.leaf(Tensor(1, 2, {1.0, 2.0}));
  EXPECT_THROW(t.backward(x), ContractError);
  EXPECT_THROW(t.backward(sum(t.constant(Tensor(1, 2, {1.0, 2.0})))), ContractError);
  EXPECT_THROW(t.grad(x), ContractError);
  const Var loss = sum(x);
  t.backward(loss);
  EXPECT_THROW(t.backward(loss), ContractError);
  EXPECT_THROW(sum(x), ContractError);
}

TEST(Autodiff, ForeignTape) {
  Tape a;
  Tape b;
  const Var x = a.leaf(Tensor::scalar(1.0));
  const Var y = b.leaf(Tensor::scalar(1.0));
  EXPECT_THROW(add(x, y), ContractError);
  EXPECT_THROW(b.backward(x), ContractError);
}

TEST(Autodiff, GradOfConstantIsContractError) {
  Tape t;
  const Var c = t.constant(Tensor::scalar(1.0));
  const Var x = t.leaf(Tensor::scalar(2.0));
  t.backward(mul(c, x));
  EXPECT_THROW(t.grad(c), ContractError);
}

TEST(Autodiff, Deterministic) {
  auto run = []() {
    Tape t;
    std::mt19937_64 rng(1);
    const Var a = t.leaf(random_tensor(4, 5, rng));
    const Var b = t.leaf(random_tensor(5, 3, rng));
    t.backward(sum(logsumexp(matmul(a, b), Axis::cols)));
    return std::make_pair(t.grad(a), t.grad(b));
  };
  EXPECT_EQ(run(), run());
}

TEST(Autodiff, ThreeLayerComposition) {
  std::mt19937_64 rng(8);
  const auto r = check_gradients(
      [](Tape&, std::span<const Var> v) {
        const Var h1 = exp(scale(matmul(v[0], v[1]), 0.3));
        const Var h2 = logsumexp(add(matmul(h1, v[2]), v[3]), Axis::cols);
        return sum(square(h2));
      },
      {random_tensor(2, 3, rng), random_tensor(3, 4, rng), random_tensor(4, 2, rng), random_tensor(1, 2, rng)});
  EXPECT_LE(r.max_rel_error, 1e-5);
}

class Primitive : public ::testing::TestWithParam<std::size_t> {};

TEST_P(Primitive, MatchesCentralDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto cases = gic::testing::primitive_cases(seed);
    const auto& c = cases[GetParam()];
    const auto r = check_gradients(c.fn, c.inputs);
    EXPECT_LE(r.max_rel_error, 1e-5) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(All, Primitive, ::testing::Range<std::size_t>(0, gic::testing::primitive_cases(0).size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return gic::testing::primitive_cases(0)[info.param].name;
                         });
