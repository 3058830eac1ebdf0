#include <gtest/gtest.h>

#include <random>

#include "mstc/ops/basic.hpp"
#include "mstc/ops/conv.hpp"
#include "mstc/ops/deform.hpp"
#include "support/gradcheck.hpp"

namespace mstc {
namespace {

using testing::gradcheck;
using testing::probe_sum;
using testing::random_tensor;

// Direct 7-loop convolution used as the reference for the im2col path.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                          int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor<double> out(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = b.empty() ? 0.0 : b[static_cast<size_t>(o)];
          for (int c = 0; c < xs.c; ++c)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = y * stride - pad + ky, ix = xx * stride - pad + kx;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += w.at(o, c, ky, kx) * x.at(n, c, iy, ix);
              }
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

TEST(Conv2d, MatchesDirectLoops) {
  std::mt19937_64 rng(1);
  for (int stride : {1, 2}) {
    auto x = random_tensor({2, 3, 7, 6}, rng);
    auto w = random_tensor({4, 3, 3, 3}, rng);
    auto b = random_tensor({1, 4, 1, 1}, rng);
    auto got = conv2d(constant(x), constant(w), constant(b), stride, 1).value();
    EXPECT_LT(max_abs_diff(got, naive_conv(x, w, b, stride, 1)), 1e-12);
  }
  auto x = random_tensor({1, 5, 4, 4}, rng);
  auto w = random_tensor({3, 5, 1, 1}, rng);
  EXPECT_LT(max_abs_diff(conv2d(constant(x), constant(w), Var<double>(), 1, 0).value(),
                         naive_conv(x, w, Tensor<double>(), 1, 0)),
            1e-12);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (int stride : {1, 2}) {
    auto x = parameter(random_tensor({2, 3, 6, 6}, rng));
    auto w = parameter(random_tensor({4, 3, 3, 3}, rng));
    auto b = parameter(random_tensor({1, 4, 1, 1}, rng));
    double err = gradcheck([&](const auto& in) { return probe_sum(conv2d(in[0], in[1], in[2], stride, 1)); },
                           {x, w, b});
    EXPECT_LT(err, 1e-6) << "stride " << stride;
  }
}

TEST(ConvTranspose2d, IsAdjointOfConv) {
  std::mt19937_64 rng(3);
  auto w = random_tensor({4, 3, 3, 3}, rng);  // conv: 3 -> 4 channels
  auto x = random_tensor({1, 3, 8, 8}, rng);
  auto y = random_tensor({1, 4, 4, 4}, rng);
  auto cx = conv2d(constant(x), constant(w), Var<double>(), 2, 1).value();
  // The same weight read as [Cin=4, Cout=3] for the transposed op.
  auto ty = conv_transpose2d(constant(y), constant(w), Var<double>(), 2, 1, 1).value();
  ASSERT_EQ(ty.shape(), x.shape());
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * ty[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(ConvTranspose2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  auto x = parameter(random_tensor({2, 3, 3, 4}, rng));
  auto w = parameter(random_tensor({3, 2, 3, 3}, rng));
  auto b = parameter(random_tensor({1, 2, 1, 1}, rng));
  double err = gradcheck([&](const auto& in) { return probe_sum(conv_transpose2d(in[0], in[1], in[2], 2, 1, 1)); },
                         {x, w, b});
  EXPECT_LT(err, 1e-6);
}

TEST(DepthwiseConv, PerSampleKernelsAndGradient) {
  std::mt19937_64 rng(5);
  auto x = parameter(random_tensor({2, 3, 5, 5}, rng));
  auto k = parameter(random_tensor({2, 3, 3, 3}, rng));
  // Sample 1 uses its own kernels: compare against a dense conv with a block-diagonal weight.
  Tensor<double> dense(Shape{3, 3, 3, 3});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 9; ++i) dense.at(c, c, i / 3, i % 3) = k.value().at(1, c, i / 3, i % 3);
  Tensor<double> x1(Shape{1, 3, 5, 5});
  std::copy_n(x.value().plane(1, 0), x1.size(), x1.data());
  auto want = naive_conv(x1, dense, Tensor<double>(), 1, 1);
  auto got = depthwise_conv2d(x, k).value();
  double worst = 0;
  for (size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(want[i] - got.plane(1, 0)[i]));
  EXPECT_LT(worst, 1e-12);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(depthwise_conv2d(in[0], in[1])); }, {x, k}), 1e-6);
}

TEST(ElementwiseOps, Gradients) {
  std::mt19937_64 rng(6);
  auto a = parameter(random_tensor({2, 3, 4, 4}, rng));
  auto b = parameter(random_tensor({2, 3, 4, 4}, rng, 0.5, 2.0));
  auto s = parameter(random_tensor({2, 3, 1, 1}, rng));
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(mul(in[0], in[1])); }, {a, b}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(div(in[0], in[1])); }, {a, b}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(mul_channel(in[0], in[1])); }, {a, s}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(leaky_relu(in[0])); }, {a}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(sigmoid(in[0])); }, {a}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(softplus(in[0])); }, {a}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(pow_scalar(in[0], 0.3)); }, {b}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(global_avg_pool(in[0])); }, {a}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(avg_pool2x2(in[0])); }, {a}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return probe_sum(upsample_bilinear2x(in[0])); }, {a}), 1e-6);
  EXPECT_LT(gradcheck([](const auto& in) { return mse(in[0], in[1]); }, {a, b}), 1e-6);
  EXPECT_LT(gradcheck(
                [](const auto& in) {
                  return probe_sum(concat_channels<double>({slice_channels(in[0], 1, 2), in[1]}));
                },
                {a, b}),
            1e-6);
}

TEST(Upsample, MatchesHalfPixelBilinear) {
  // 1x2 row [0, 1] upsampled to 4 columns with half-pixel centers: 0, .25, .75, 1.
  Tensor<double> t(Shape{1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  auto up = upsample_bilinear2x(constant(t)).value();
  ASSERT_EQ(up.shape(), (Shape{1, 1, 2, 4}));
  const double want[] = {0.0, 0.25, 0.75, 1.0};
  for (int x = 0; x < 4; ++x) {
    EXPECT_DOUBLE_EQ(up.at(0, 0, 0, x), want[x]);
    EXPECT_DOUBLE_EQ(up.at(0, 0, 1, x), want[x]);
  }
}

TEST(BatchNorm, TrainingGradientAndEvalUsesRunningStats) {
  std::mt19937_64 rng(17);
  auto x = parameter(random_tensor({2, 3, 4, 4}, rng));
  auto gamma = parameter(random_tensor({1, 3, 1, 1}, rng));
  auto beta = parameter(random_tensor({1, 3, 1, 1}, rng));
  Tensor<double> rm(Shape{1, 3, 1, 1}), rv(Shape{1, 3, 1, 1}, 1.0);
  BatchNormState<double> st{&rm, &rv};
  EXPECT_LT(gradcheck([&](const auto& in) { return probe_sum(batch_norm(in[0], in[1], in[2], st, true)); },
                      {x, gamma, beta}),
            1e-6);
  Tensor<double> m0(Shape{1, 3, 1, 1}), v0(Shape{1, 3, 1, 1}, 4.0);
  BatchNormState<double> fixed{&m0, &v0};
  auto y = batch_norm(constant(x.value()), constant(Tensor<double>({1, 3, 1, 1}, 1.0)),
                      constant(Tensor<double>({1, 3, 1, 1}, 0.0)), fixed, false)
               .value();
  EXPECT_NEAR(y[5], x.value()[5] / std::sqrt(4.0 + 1e-5), 1e-12);
}

TEST(DeformConv, ZeroOffsetsUnitMasksEqualsConv) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({1, 8, 6, 7}, rng);
  auto w = random_tensor({5, 8, 3, 3}, rng);
  auto b = random_tensor({1, 5, 1, 1}, rng);
  Tensor<double> off(Shape{1, 2 * 2 * 9, 6, 7}), mask(Shape{1, 2 * 9, 6, 7}, 1.0);
  auto got = deform_conv2d(constant(x), constant(off), constant(mask), constant(w), constant(b), 2).value();
  EXPECT_LT(max_abs_diff(got, naive_conv(x, w, b, 1, 1)), 1e-12);
}

TEST(DeformConv, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  auto x = parameter(random_tensor({1, 4, 5, 5}, rng));
  // Offsets kept away from integers so the bilinear kernel is differentiable at every probe.
  Tensor<double> off = random_tensor({1, 2 * 2 * 9, 5, 5}, rng, 0.1, 0.9);
  for (size_t i = 0; i < off.size(); i += 3) off[i] = -off[i] - 1.0;
  auto o = parameter(off);
  auto m = parameter(random_tensor({1, 2 * 9, 5, 5}, rng, 0.1, 0.9));
  auto w = parameter(random_tensor({3, 4, 3, 3}, rng));
  auto b = parameter(random_tensor({1, 3, 1, 1}, rng));
  double err = gradcheck([](const auto& in) { return probe_sum(deform_conv2d(in[0], in[1], in[2], in[3], in[4], 2)); },
                         {x, o, m, w, b}, 1e-7);
  EXPECT_LT(err, 1e-6);
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  auto x = parameter(Tensor<double>({1, 1, 1, 1}, 3.0));
  auto y = mul(x, x);
  auto z = add(y, y);  // 2 x^2
  backward(sum(z));
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  auto x = parameter(Tensor<double>({1, 1, 1, 1}, 2.0));
  NoGradGuard guard;
  auto y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace mstc
