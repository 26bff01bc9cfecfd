#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sfeat/error.hpp"
#include "sfeat/ops.hpp"

using namespace sfeat;
using namespace sfeat::ad;

TEST(Graph, SharedInputAccumulatesGradients) {
  Graph g;
  Var x = g.leaf(Tensor::scalar(3.0));
  Var y = multiply(x, x);  // x used twice
  g.backward(add(y, x));
  EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(Graph, NonScalarBackwardThrows) {
  Graph g;
  Var x = g.leaf(Tensor({2}, {1.0, 2.0}));
  EXPECT_THROW(g.backward(square(x)), GraphError);
}

TEST(Graph, SecondBackwardNeedsReset) {
  Graph g;
  Var x = g.leaf(Tensor::scalar(2.0));
  Var y = square(x);
  g.backward(y);
  EXPECT_THROW(g.backward(y), GraphError);
  g.reset_grads();
  g.backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 4.0);
}

TEST(Graph, UnusedLeafGetsZeroGradient) {
  Graph g;
  Var x = g.leaf(Tensor({3}, 1.0));
  Var z = g.leaf(Tensor({2}, 5.0));
  g.backward(sum(x));
  ASSERT_EQ(z.grad().size(), 2u);
  EXPECT_EQ(z.grad()[0], 0.0);
}

TEST(Graph, ConstantsNeverRequireGrad) {
  Graph g;
  Var c = g.constant(Tensor({2}, 1.0));
  Var x = g.leaf(Tensor({2}, 2.0));
  Var y = multiply(c, x);
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(y.requires_grad());
  EXPECT_FALSE(multiply(c, c).requires_grad());
}

TEST(Ops, ElementwiseValues) {
  Graph g;
  Var x = g.leaf(Tensor({4}, {-2.0, -0.5, 0.0, 1.5}));
  EXPECT_EQ(relu(x).value().data, (std::vector<double>{0.0, 0.0, 0.0, 1.5}));
  EXPECT_EQ(abs(x).value().data, (std::vector<double>{2.0, 0.5, 0.0, 1.5}));
  EXPECT_EQ(square(x).value().data, (std::vector<double>{4.0, 0.25, 0.0, 2.25}));
  EXPECT_DOUBLE_EQ(sigmoid(x).value()[2], 0.5);
  EXPECT_EQ(shift(scale(x, 2.0), 1.0).value().data, (std::vector<double>{-3.0, 0.0, 1.0, 4.0}));
}

TEST(Ops, AbsSubgradientIsZeroAtZero) {
  Graph g;
  Var x = g.leaf(Tensor({3}, {-1.0, 0.0, 2.0}));
  g.backward(sum(abs(x)));
  EXPECT_EQ(x.grad().data, (std::vector<double>{-1.0, 0.0, 1.0}));
}

TEST(Ops, ReductionsDropAxes) {
  Graph g;
  Var x = g.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(sum(x, {1}).value().data, (std::vector<double>{6, 15}));
  EXPECT_EQ(mean(x, {0}).value().data, (std::vector<double>{2.5, 3.5, 4.5}));
  EXPECT_TRUE(sum(x).value().shape.empty());
  EXPECT_DOUBLE_EQ(max(x).value().item(), 6.0);
}

TEST(Ops, MaxRoutesGradientToFirstMaximum) {
  Graph g;
  Var x = g.leaf(Tensor({4}, {1.0, 3.0, 3.0, 2.0}));
  g.backward(max(x));
  EXPECT_EQ(x.grad().data, (std::vector<double>{0.0, 1.0, 0.0, 0.0}));
}

TEST(Ops, ShapeMismatchThrows) {
  Graph g;
  Var a = g.leaf(Tensor({2, 3}));
  Var b = g.leaf(Tensor({3, 2}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(reshape(a, Shape{4}), ShapeError);
}

TEST(Ops, MatmulMatchesLoops) {
  std::mt19937_64 rng(1);
  Tensor a = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({4, 2}, rng);
  Graph g;
  const Tensor c = matmul(g.leaf(a), g.leaf(b)).value();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 2 + j];
      EXPECT_NEAR(c[i * 2 + j], s, 1e-12);
    }
}

TEST(Ops, L2NormalizeGivesUnitColumnsAndKeepsZeros) {
  Graph g;
  Tensor x({2, 1, 2}, {3.0, 0.0, 4.0, 0.0});
  const Tensor y = l2_normalize(g.leaf(x)).value();
  EXPECT_DOUBLE_EQ(y[0], 0.6);
  EXPECT_DOUBLE_EQ(y[2], 0.8);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[3], 0.0);
}

TEST(Ops, SampleBilinearInterpolatesAndZeroesOutside) {
  Graph g;
  Tensor x({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  const Tensor y = sample_bilinear(g.leaf(x), {{0.5, 0.5}, {1.0, 0.0}, {2.5, 0.0}}).value();
  EXPECT_DOUBLE_EQ(y[0], 1.5);
  EXPECT_DOUBLE_EQ(y[1], 1.0);
  EXPECT_EQ(y[2], 0.0);
}

TEST(Ops, ExtractPatchesDropsPartialTiles) {
  Graph g;
  Tensor x({1, 5, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const Tensor p = extract_patches(g.leaf(x), 2).value();
  ASSERT_EQ(p.shape, (Shape{4, 4}));
  EXPECT_EQ(std::vector<double>(p.data.begin(), p.data.begin() + 4), (std::vector<double>{0, 1, 4, 5}));
  EXPECT_EQ(std::vector<double>(p.data.begin() + 12, p.data.end()), (std::vector<double>{10, 11, 14, 15}));
}

TEST(Ops, ColumnDistance) {
  Graph g;
  Var a = g.leaf(Tensor({2, 2}, {0.0, 1.0, 0.0, 1.0}));
  Var b = g.leaf(Tensor({2, 1}, {3.0, 4.0}));
  const Tensor d = column_distance(a, b, {{0, 0}, {1, 0}}).value();
  EXPECT_NEAR(d[0], 5.0, 1e-12);
  EXPECT_NEAR(d[1], std::sqrt(13.0), 1e-12);
}

TEST(Conv, MatchesBruteForceOracle) {
  // Criterion 4: 100 seeded instances across stride, padding and dilation.
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(1, 4);
    const int ci = pick(rng), co = pick(rng), k = 2 * (pick(rng) % 2) + 1;
    const int stride = 1 + seed % 2, dil = 1 + (seed / 2) % 2, pad = seed % 3;
    int h = 6 + pick(rng), w = 6 + pick(rng);
    // Sizes must divide exactly.
    while ((h + 2 * pad - dil * (k - 1) - 1) % stride) ++h;
    while ((w + 2 * pad - dil * (k - 1) - 1) % stride) ++w;
    Tensor in = oracle::random_tensor({std::size_t(ci), std::size_t(h), std::size_t(w)}, rng);
    Tensor ker = oracle::random_tensor({std::size_t(co), std::size_t(ci), std::size_t(k), std::size_t(k)}, rng);
    Graph g;
    const Tensor got = conv2d(g.leaf(in), g.leaf(ker), {stride, pad, dil}).value();
    const Tensor want = oracle::conv2d(in, ker, stride, pad, dil);
    ASSERT_EQ(got.shape, want.shape);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::fabs(got[i] - want[i]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Conv, DepthwiseMatchesOracle) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const int dil = 1 + seed % 3;
    Tensor in = oracle::random_tensor({3, 9, 7}, rng), ker = oracle::random_tensor({3, 1, 3, 3}, rng);
    Graph g;
    const Tensor got = depthwise_conv2d(g.leaf(in), g.leaf(ker), dil).value();
    const Tensor want = oracle::depthwise_conv2d(in, ker, dil);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv, SeparableEqualsDepthwiseThenPointwise) {
  std::mt19937_64 rng(4);
  Tensor in = oracle::random_tensor({3, 6, 6}, rng), dw = oracle::random_tensor({3, 1, 3, 3}, rng),
         pw = oracle::random_tensor({5, 3, 1, 1}, rng);
  Graph g;
  const Tensor got = depthwise_separable_conv(g.leaf(in), g.leaf(dw), g.leaf(pw)).value();
  const Tensor want = oracle::conv2d(oracle::depthwise_conv2d(in, dw, 1), pw, 1, 0, 1);
  ASSERT_EQ(got.shape, (Shape{5, 6, 6}));
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Conv, RejectsBadShapes) {
  Graph g;
  Var in = g.leaf(Tensor({2, 5, 5}));
  EXPECT_THROW(conv2d(in, g.leaf(Tensor({1, 3, 3, 3}))), ShapeError);     // channel mismatch
  EXPECT_THROW(conv2d(g.leaf(Tensor({2, 6, 6})), g.leaf(Tensor({1, 2, 3, 3})), {2, 0, 1}),
               ShapeError);  // (6 - 3) / 2 is not exact
  EXPECT_THROW(depthwise_conv2d(in, g.leaf(Tensor({2, 1, 2, 2}))), ShapeError);  // even kernel
}

TEST(Examples, IdentityAndAveragingKernels) {
  std::mt19937_64 rng(2);
  Tensor img = oracle::random_tensor({1, 5, 6}, rng);
  Graph g;
  EXPECT_EQ(conv2d(g.leaf(img), g.leaf(Tensor({1, 1, 1, 1}, 1.0))).value().data, img.data);
  const Tensor avg = conv2d(g.leaf(Tensor({1, 5, 5}, 0.7)), g.leaf(Tensor({1, 1, 3, 3}, 1.0 / 9.0))).value();
  ASSERT_EQ(avg.shape, (Shape{1, 3, 3}));
  for (double v : avg.data) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Examples, SeparableIdentity) {
  std::mt19937_64 rng(3);
  Tensor img = oracle::random_tensor({3, 5, 5}, rng);
  Tensor dw({3, 1, 3, 3}), pw({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) {
    dw[c * 9 + 4] = 1.0;
    pw[c * 3 + c] = 1.0;
  }
  Graph g;
  EXPECT_EQ(depthwise_separable_conv(g.leaf(img), g.leaf(dw), g.leaf(pw)).value().data, img.data);
}

TEST(Examples, Conv2dRandomAgainstOracle) {
  // 2x3x5x5 input read as two images of a batch.
  std::mt19937_64 rng(6);
  Tensor ker = oracle::random_tensor({4, 3, 3, 3}, rng);
  for (int b = 0; b < 2; ++b) {
    Tensor img = oracle::random_tensor({3, 5, 5}, rng);
    Graph g;
    const Tensor got = conv2d(g.leaf(img), g.leaf(ker), {1, 1, 1}).value();
    const Tensor want = oracle::conv2d(img, ker, 1, 1, 1);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-6);
  }
}

TEST(Examples, L2NormalizeIdempotent) {
  Graph g;
  Tensor x({3, 1, 1}, {0.0, 0.6, 0.8});
  EXPECT_EQ(l2_normalize(g.leaf(x)).value().data, x.data);
}

TEST(Examples, SmallElementwiseAndReductions) {
  Graph g;
  EXPECT_EQ(square(g.leaf(Tensor({2}, {-2.0, 3.0}))).value().data, (std::vector<double>{4.0, 9.0}));
  EXPECT_EQ(relu(g.leaf(Tensor({3}, {-1.0, 0.0, 2.0}))).value().data, (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(mean(g.leaf(Tensor({3}, {1.0, 2.0, 3.0}))).value().item(), 2.0);
  Var m = g.leaf(Tensor({3}, {1.0, 5.0, 5.0}));
  g.backward(max(m));
  EXPECT_EQ(m.grad().data, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Examples, SumOverAxisMatchesLoops) {
  std::mt19937_64 rng(8);
  Tensor x = oracle::random_tensor({3, 4}, rng);
  Graph g;
  const Tensor s0 = sum(g.leaf(x), {0}).value(), s1 = sum(g.leaf(x), {1}).value();
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(s0[j], x[j] + x[4 + j] + x[8 + j], 1e-15);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s1[i], x[4 * i] + x[4 * i + 1] + x[4 * i + 2] + x[4 * i + 3], 1e-15);
}

TEST(Examples, Matmul) {
  Graph g;
  EXPECT_EQ(matmul(g.leaf(Tensor({2, 2}, {1, 2, 3, 4})), g.leaf(Tensor({2, 1}, {1, 1}))).value().data,
            (std::vector<double>{3, 7}));
  std::mt19937_64 rng(9);
  Tensor a = oracle::random_tensor({7, 5}, rng), b = oracle::random_tensor({5, 3}, rng);
  Tensor eye({7, 7});
  for (std::size_t i = 0; i < 7; ++i) eye[i * 8] = 1.0;
  EXPECT_EQ(matmul(g.leaf(eye), g.leaf(a)).value().data, a.data);
  const Tensor c = matmul(g.leaf(a), g.leaf(b)).value();
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 5; ++k) s += a[i * 5 + k] * b[k * 3 + j];
      EXPECT_NEAR(c[i * 3 + j], s, 1e-9);
    }
}

TEST(Examples, BackwardOfSums) {
  Graph g;
  Var x = g.leaf(Tensor({3}, {0.3, -1.0, 2.0}));
  g.backward(sum(x));
  EXPECT_EQ(x.grad().data, (std::vector<double>{1, 1, 1}));
  Graph g2;
  Var y = g2.leaf(Tensor({2}, {1.0, 2.0}));
  g2.backward(sum(square(y)));
  EXPECT_EQ(y.grad().data, (std::vector<double>{2, 4}));
}
