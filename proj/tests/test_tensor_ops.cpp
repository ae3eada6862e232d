#include <gtest/gtest.h>

#include "mitodet/autodiff.hpp"
#include "mitodet/rng.hpp"
#include "test_util.hpp"

using namespace mitodet;
using testutil::conv2d_loop_oracle;
using testutil::maxpool_loop_oracle;
using testutil::random_tensor;
using testutil::upsample_index_oracle;

namespace {

Var constant(Tensor t) { return Var::constant(std::move(t)); }

TEST(Conv2d, ScalingKernel) {
  Tensor x({1, 1, 3, 3}, real(1));
  Tensor w({1, 1, 1, 1});
  w.data[0] = 2;
  Var out = conv2d(constant(x), constant(w), constant(Tensor({1, 1, 1, 1})), 0);
  EXPECT_EQ(out.shape(), (Shape4{1, 1, 3, 3}));
  for (real v : out.value().data) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Conv2d, ZeroKernelGivesBias) {
  Rng rng(1);
  Tensor x = random_tensor({2, 3, 5, 4}, rng);
  Tensor w({2, 3, 3, 3});
  Tensor b({2, 1, 1, 1});
  b.data[0] = 0.5;
  b.data[1] = -1.25;
  Var out = conv2d(constant(x), constant(w), constant(b), 1);
  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < 2; ++oc)
      for (int y = 0; y < 5; ++y)
        for (int xx = 0; xx < 4; ++xx) EXPECT_DOUBLE_EQ(out.value().at(n, oc, y, xx), b.data[oc]);
}

TEST(Conv2d, RampAgainstLoopOracle) {
  Tensor x({1, 1, 5, 5});
  for (int i = 0; i < 25; ++i) x.data[i] = i;
  Tensor w({1, 1, 3, 3}, real(1));
  Tensor b({1, 1, 1, 1});
  Var out = conv2d(constant(x), constant(w), constant(b), 1);
  Tensor expect = conv2d_loop_oracle(x, w, {0.0}, 1);
  ASSERT_EQ(out.shape(), expect.shape);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_NEAR(out.value().data[i], expect.data[i], 1e-12);
  }
  // spot check the interior sum by hand: window centered at (2,2)
  EXPECT_DOUBLE_EQ(out.value().at(0, 0, 2, 2), 6 + 7 + 8 + 11 + 12 + 13 + 16 + 17 + 18);
}

TEST(Conv2d, RandomAgainstLoopOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = rng.uniform_int(1, 2);
    const int ic = rng.uniform_int(1, 4);
    const int oc = rng.uniform_int(1, 4);
    const int h = rng.uniform_int(3, 9);
    const int w = rng.uniform_int(3, 9);
    const int k = 2 * rng.uniform_int(0, 2) + 1;  // 1, 3 or 5
    const int pad = rng.uniform_int(0, 2);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    Tensor x = random_tensor({n, ic, h, w}, rng);
    Tensor wt = random_tensor({oc, ic, k, k}, rng);
    Tensor bt = random_tensor({oc, 1, 1, 1}, rng);
    std::vector<double> bias(bt.data.begin(), bt.data.end());
    Var out = conv2d(constant(x), constant(wt), constant(bt), pad);
    Tensor expect = conv2d_loop_oracle(x, wt, bias, pad);
    ASSERT_EQ(out.shape(), expect.shape);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      EXPECT_NEAR(out.value().data[i], expect.data[i], 1e-10);
    }
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tensor x({1, 3, 4, 4});
  Tensor w({2, 4, 3, 3});
  Tensor b({2, 1, 1, 1});
  EXPECT_THROW(conv2d(constant(x), constant(w), constant(b), 1), std::invalid_argument);
}

TEST(Conv2d, RejectsEvenKernel) {
  Tensor x({1, 1, 4, 4});
  Tensor w({1, 1, 2, 2});
  Tensor b({1, 1, 1, 1});
  EXPECT_THROW(conv2d(constant(x), constant(w), constant(b), 0), std::invalid_argument);
}

TEST(Maxpool, TinyExample) {
  Tensor x({1, 1, 2, 2}, std::vector<real>{1, 2, 3, 4});
  Var out = maxpool2d(constant(x));
  EXPECT_EQ(out.shape(), (Shape4{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(out.value().data[0], 4.0);
}

TEST(Maxpool, ConstantImage) {
  Tensor x({1, 2, 6, 6}, real(3.5));
  Var out = maxpool2d(constant(x));
  EXPECT_EQ(out.shape(), (Shape4{1, 2, 3, 3}));
  for (real v : out.value().data) EXPECT_DOUBLE_EQ(v, 3.5);
}

TEST(Maxpool, RandomAgainstLoopOracle) {
  Rng rng(3);
  Tensor x = random_tensor({1, 2, 8, 8}, rng);
  Var out = maxpool2d(constant(x));
  Tensor expect = maxpool_loop_oracle(x);
  ASSERT_EQ(out.shape(), expect.shape);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.value().data[i], expect.data[i]);
  }
}

TEST(Maxpool, RejectsOddDims) {
  EXPECT_THROW(maxpool2d(constant(Tensor({1, 1, 3, 4}))), std::invalid_argument);
  EXPECT_THROW(maxpool2d(constant(Tensor({1, 1, 4, 5}))), std::invalid_argument);
}

TEST(Upsample, SinglePixel) {
  Tensor x({1, 1, 1, 1});
  x.data[0] = 7;
  Var out = upsample2x(constant(x));
  EXPECT_EQ(out.shape(), (Shape4{1, 1, 2, 2}));
  for (real v : out.value().data) EXPECT_DOUBLE_EQ(v, 7.0);
}

TEST(Upsample, InvertsPoolShape) {
  Tensor x({2, 3, 6, 8});
  Var pooled = maxpool2d(constant(x));
  Var up = upsample2x(pooled);
  EXPECT_EQ(up.shape(), x.shape);
}

TEST(Upsample, RandomAgainstIndexOracle) {
  Rng rng(5);
  Tensor x = random_tensor({1, 3, 4, 4}, rng);
  Var out = upsample2x(constant(x));
  Tensor expect = upsample_index_oracle(x);
  ASSERT_EQ(out.shape(), expect.shape);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.value().data[i], expect.data[i]);
  }
}

TEST(Concat, SixteenPlusFour) {
  Tensor a({1, 16, 4, 4}, real(1));
  Tensor b({1, 4, 4, 4}, real(2));
  Var out = concat_channels(constant(a), constant(b));
  EXPECT_EQ(out.shape(), (Shape4{1, 20, 4, 4}));
}

TEST(Concat, ZeroChannelIdentity) {
  Rng rng(11);
  Tensor a = random_tensor({1, 3, 4, 4}, rng);
  Tensor empty({1, 0, 4, 4});
  Var out = concat_channels(constant(a), constant(empty));
  ASSERT_EQ(out.shape(), a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(out.value().data[i], a.data[i]);
}

TEST(Concat, FirstChannelsComeFromA) {
  Rng rng(13);
  Tensor a = random_tensor({2, 3, 5, 4}, rng);
  Tensor b = random_tensor({2, 2, 5, 4}, rng);
  Var out = concat_channels(constant(a), constant(b));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 5; ++y)
        for (int xx = 0; xx < 4; ++xx)
          EXPECT_DOUBLE_EQ(out.value().at(n, c, y, xx), a.at(n, c, y, xx));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 5; ++y)
        for (int xx = 0; xx < 4; ++xx)
          EXPECT_DOUBLE_EQ(out.value().at(n, 3 + c, y, xx), b.at(n, c, y, xx));
}

TEST(Concat, RejectsSpatialMismatch) {
  EXPECT_THROW(concat_channels(constant(Tensor({1, 1, 4, 4})), constant(Tensor({1, 1, 4, 5}))),
               std::invalid_argument);
  EXPECT_THROW(concat_channels(constant(Tensor({1, 1, 4, 4})), constant(Tensor({2, 1, 4, 4}))),
               std::invalid_argument);
}

TEST(Relu, BasicAndIdempotent) {
  Tensor x({1, 1, 1, 3}, std::vector<real>{-1, 0, 2});
  Var once = relu(constant(x));
  EXPECT_DOUBLE_EQ(once.value().data[0], 0.0);
  EXPECT_DOUBLE_EQ(once.value().data[1], 0.0);
  EXPECT_DOUBLE_EQ(once.value().data[2], 2.0);
  Var twice = relu(once);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(twice.value().data[i], once.value().data[i]);
  }
}

TEST(Relu, NonNegativePassThrough) {
  Rng rng(17);
  Tensor x = random_tensor({1, 2, 3, 3}, rng, 0.0, 5.0);
  Var out = relu(constant(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(out.value().data[i], x.data[i]);
}

TEST(Huber, AnalyticValues) {
  HuberConfig cfg{1.0};
  Tensor target({1, 1, 2, 2});
  {
    Tensor pred({1, 1, 2, 2}, real(0.5));  // r = 0.5 everywhere
    Var loss = huber_loss(constant(pred), target, cfg);
    EXPECT_DOUBLE_EQ(loss.value().data[0], 0.125);
  }
  {
    Tensor pred({1, 1, 2, 2}, real(2.0));  // r = 2 everywhere, linear regime
    Var loss = huber_loss(constant(pred), target, cfg);
    EXPECT_DOUBLE_EQ(loss.value().data[0], 1.5);
  }
  {
    Var loss = huber_loss(constant(target), target, cfg);
    EXPECT_DOUBLE_EQ(loss.value().data[0], 0.0);
  }
}

TEST(Huber, RejectsShapeMismatch) {
  EXPECT_THROW(
      huber_loss(constant(Tensor({1, 1, 2, 2})), Tensor({1, 1, 2, 3}), HuberConfig{1.0}),
      std::invalid_argument);
}

TEST(Huber, RejectsNonPositiveDelta) {
  EXPECT_THROW(huber_loss(constant(Tensor({1, 1, 1, 1})), Tensor({1, 1, 1, 1}), HuberConfig{0.0}),
               std::invalid_argument);
}

// Shape algebra property over random valid shapes.
TEST(ShapeAlgebra, RandomShapes) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 3);
    const int c = rng.uniform_int(1, 5);
    const int h = 2 * rng.uniform_int(2, 6);
    const int w = 2 * rng.uniform_int(2, 6);
    Tensor x({n, c, h, w});
    const int k = 2 * rng.uniform_int(0, 1) + 1;
    const int pad = rng.uniform_int(0, 2);
    const int oc = rng.uniform_int(1, 4);
    Var conv = conv2d(constant(x), constant(Tensor({oc, c, k, k})),
                      constant(Tensor({oc, 1, 1, 1})), pad);
    EXPECT_EQ(conv.shape(), (Shape4{n, oc, h + 2 * pad - (k - 1), w + 2 * pad - (k - 1)}));

    Var pooled = maxpool2d(constant(x));
    EXPECT_EQ(pooled.shape(), (Shape4{n, c, h / 2, w / 2}));

    Var up = upsample2x(constant(x));
    EXPECT_EQ(up.shape(), (Shape4{n, c, 2 * h, 2 * w}));

    const int c2 = rng.uniform_int(0, 4);
    Var cat = concat_channels(constant(x), constant(Tensor({n, c2, h, w})));
    EXPECT_EQ(cat.shape(), (Shape4{n, c + c2, h, w}));
  }
}

TEST(Determinism, BitIdenticalForwardBackward) {
  auto run = [](std::vector<real>& grads_out) {
    Rng rng(99);
    Tensor x = random_tensor({1, 3, 8, 8}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4, 1, 1, 1}, rng);
    Tensor t = random_tensor({4, 1, 1, 1}, rng);
    Var wv = Var::parameter(w);
    Var out = relu(conv2d(constant(x), wv, constant(b), 1));
    Var pooled = maxpool2d(out);
    Tensor target(pooled.shape(), real(0.25));
    Var loss = huber_loss(pooled, target, HuberConfig{1.0});
    backward(loss);
    grads_out = wv.grad().data;
    return loss.value().data[0];
  };
  std::vector<real> g1, g2;
  const real l1 = run(g1);
  const real l2 = run(g2);
  EXPECT_EQ(l1, l2);
  ASSERT_EQ(g1.size(), g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g1[i], g2[i]);
}

}  // namespace
