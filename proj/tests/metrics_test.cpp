#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mstc/metrics.hpp"
#include "support/gradcheck.hpp"

namespace mstc {
namespace {

using testing::gradcheck;

// Patterns shared with tests/oracles/msssim_oracle.py.
Tensor<double> pattern(int h, int w) {
  Tensor<double> x(Shape{1, 3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const double v = 0.5 + 0.5 * std::sin(0.31 * xx + 1.7 * c) * std::cos(0.23 * y - 0.9 * c);
        x.at(0, c, y, xx) = v > 0.5 ? 1.0 : ((xx / 8 + y / 8) % 2 ? 0.0 : v);
      }
  return x;
}

Tensor<double> perturbed(const Tensor<double>& a) {
  Tensor<double> b(a.shape());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.h(); ++y)
      for (int xx = 0; xx < a.w(); ++xx)
        b.at(0, c, y, xx) = std::clamp(0.85 * a.at(0, c, y, xx) + 0.1 + 0.05 * std::sin(0.7 * xx * (c + 1) + 0.4 * y), 0.0, 1.0);
  return b;
}

Tensor<double> inverse(const Tensor<double>& a) {
  Tensor<double> b(a.shape());
  for (size_t i = 0; i < a.size(); ++i) b[i] = 1.0 - a[i];
  return b;
}

TEST(Psnr, CapAndClosedForm) {
  Tensor<double> a(Shape{1, 3, 4, 4}, 0.25);
  EXPECT_EQ(psnr(a, a), 100.0);
  Tensor<double> b = a;
  for (auto& v : b.span()) v += 0.1;  // MSE 0.01
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  Tensor<double> zero(a.shape()), one(a.shape(), 1.0);
  EXPECT_NEAR(psnr(zero, one), 0.0, 1e-12);
  EXPECT_THROW(psnr(a, Tensor<double>(Shape{1, 3, 4, 5})), std::invalid_argument);
}

TEST(Psnr, MonotoneInMse) {
  double prev = psnr_from_mse(1e-6);
  for (double m = 2e-6; m < 1; m *= 1.7) {
    const double p = psnr_from_mse(m);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(MsSsim, IdenticalAndSymmetric) {
  const auto a = pattern(64, 64), b = perturbed(a);
  EXPECT_NEAR(ms_ssim(a, a), 1.0, 1e-12);
  EXPECT_EQ(ms_ssim(a, b), ms_ssim(b, a));
}

TEST(MsSsim, ReferenceImplementationOracles) {
  const auto a = pattern(256, 256);
  EXPECT_NEAR(ms_ssim(a, inverse(a)), 0.0, 1e-6);
  EXPECT_LT(ms_ssim(a, inverse(a)), 0.5);
  EXPECT_NEAR(ms_ssim(a, perturbed(a)), 0.9844978368613613, 1e-6);
  const auto s = pattern(64, 64);
  EXPECT_NEAR(ms_ssim(s, perturbed(s)), 0.9825180248250497, 1e-6);
  const auto o = pattern(100, 90);
  EXPECT_NEAR(ms_ssim(o, perturbed(o)), 0.9838457321226773, 1e-6);
}

TEST(MsSsim, ScaleCountAndRejection) {
  EXPECT_EQ(ms_ssim_levels(161), 5);
  EXPECT_EQ(ms_ssim_levels(160), 4);
  EXPECT_EQ(ms_ssim_levels(64), 3);
  EXPECT_EQ(ms_ssim_levels(11), 1);
  EXPECT_EQ(ms_ssim_levels(10), 0);
  const auto s = pattern(64, 64);
  EXPECT_THROW(ms_ssim(s, s, MsSsimOptions{false}), std::invalid_argument);
  EXPECT_THROW(ms_ssim(pattern(8, 8), pattern(8, 8)), std::invalid_argument);
}

TEST(MsSsim, DifferentiableVersionAgreesAndHasExactGradient) {
  const auto s = pattern(64, 64), p = perturbed(s);
  EXPECT_NEAR(ms_ssim_var(constant(s), constant(p)).item(), ms_ssim(s, p), 1e-9);

  std::mt19937_64 rng(3);
  auto a = parameter(testing::random_tensor({1, 3, 16, 16}, rng, 0, 1));
  const auto b = constant(testing::random_tensor({1, 3, 16, 16}, rng, 0, 1));
  auto fn = [&](const std::vector<Var<double>>& in) { return ms_ssim_var(in[0], b); };
  EXPECT_LT(gradcheck(fn, {a}), 1e-3);
}

std::vector<RDPoint> curve(std::initializer_list<std::pair<double, double>> pts) {
  std::vector<RDPoint> out;
  for (auto [bpp, q] : pts) out.push_back({0, bpp, q, 0.9 + (q - 30) / 100});
  return out;
}

const auto kAnchor = curve({{0.10, 30.1}, {0.21, 32.6}, {0.40, 35.2}, {0.83, 37.9}});
const auto kTest = curve({{0.09, 30.4}, {0.18, 32.9}, {0.37, 35.3}, {0.70, 38.3}});

std::vector<RDPoint> scaled(std::vector<RDPoint> c, double f) {
  for (auto& p : c) p.bpp *= f;
  return c;
}

TEST(BdRate, AnalyticOracles) {
  for (auto method : {BdMethod::pchip, BdMethod::cubic}) {
    EXPECT_EQ(bd_rate(kAnchor, kAnchor, QualityMetric::psnr, method), 0.0);
    EXPECT_NEAR(bd_rate(kAnchor, scaled(kAnchor, 2.0), QualityMetric::psnr, method), 100.0, 1e-9);
    EXPECT_NEAR(bd_rate(kAnchor, scaled(kAnchor, 0.5), QualityMetric::psnr, method), -50.0, 1e-9);
    EXPECT_NEAR(bd_rate(kAnchor, scaled(kAnchor, 2.0), QualityMetric::msssim, method), 100.0, 1e-6);
  }
}

TEST(BdRate, MatchesReferenceInterpolators) {
  EXPECT_NEAR(bd_rate(kAnchor, kTest, QualityMetric::psnr, BdMethod::pchip), -16.592845103721032, 1e-9);
  EXPECT_NEAR(bd_rate(kAnchor, kTest, QualityMetric::psnr, BdMethod::cubic), -16.31342203474768, 1e-7);
}

TEST(BdRate, SignFlipsUnderSwapForScaledCurves) {
  const double up = bd_rate(kAnchor, scaled(kAnchor, 1.3));
  const double down = bd_rate(scaled(kAnchor, 1.3), kAnchor);
  EXPECT_GT(up, 0);
  EXPECT_LT(down, 0);
  EXPECT_NEAR((1 + up / 100) * (1 + down / 100), 1.0, 1e-12);
}

TEST(BdRate, RejectsInvalidCurves) {
  EXPECT_THROW(bd_rate(curve({{0.1, 30}, {0.2, 31}, {0.3, 32}}), kAnchor), std::invalid_argument);
  EXPECT_THROW(bd_rate(kAnchor, curve({{0.1, 50}, {0.2, 51}, {0.3, 52}, {0.4, 53}})), std::invalid_argument);
  EXPECT_THROW(bd_rate(curve({{0.1, 30}, {0.1, 31}, {0.3, 32}, {0.4, 33}}), kAnchor), std::invalid_argument);
}

TEST(RdCsv, RoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "mstc_rd.csv").string();
  write_rd_csv(path, kAnchor);
  const auto back = read_rd_csv(path);
  ASSERT_EQ(back.size(), kAnchor.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_DOUBLE_EQ(back[i].bpp, kAnchor[i].bpp);
    EXPECT_DOUBLE_EQ(back[i].psnr, kAnchor[i].psnr);
    EXPECT_DOUBLE_EQ(back[i].msssim, kAnchor[i].msssim);
  }
}

}  // namespace
}  // namespace mstc
