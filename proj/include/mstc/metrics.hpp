#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstc/autograd.hpp"
#include "mstc/ops/basic.hpp"
#include "mstc/ops/conv.hpp"
#include "mstc/video_io.hpp"

namespace mstc {

inline constexpr double kPsnrCap = 100.0;

/// PSNR in dB over all RGB samples in [0, 1]; identical inputs give the cap.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "psnr: " + a.shape().str() + " vs " + b.shape().str());
  double se = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

inline double psnr_from_mse(double mse) { return mse <= 0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse)); }

namespace detail {

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

inline std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> g{};
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    g[static_cast<size_t>(i)] = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
    sum += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// Separable valid Gaussian filter, rows first.
inline Plane gaussian_valid(const Plane& p) {
  const auto g = gaussian_window();
  Plane t{p.h - kSsimWindow + 1, p.w, {}};
  t.v.assign(static_cast<size_t>(t.h) * t.w, 0.0);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) {
      double acc = 0;
      for (int k = 0; k < kSsimWindow; ++k) acc += g[static_cast<size_t>(k)] * p.at(y + k, x);
      t.at(y, x) = acc;
    }
  Plane o{t.h, p.w - kSsimWindow + 1, {}};
  o.v.assign(static_cast<size_t>(o.h) * o.w, 0.0);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x) {
      double acc = 0;
      for (int k = 0; k < kSsimWindow; ++k) acc += g[static_cast<size_t>(k)] * t.at(y, x + k);
      o.at(y, x) = acc;
    }
  return o;
}

inline Plane product(const Plane& a, const Plane& b) {
  Plane o{a.h, a.w, std::vector<double>(a.v.size())};
  for (size_t i = 0; i < a.v.size(); ++i) o.v[i] = a.v[i] * b.v[i];
  return o;
}

/// Mean SSIM and mean contrast-structure term of one channel.
inline std::pair<double, double> ssim_cs(const Plane& a, const Plane& b) {
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Plane mu1 = gaussian_valid(a), mu2 = gaussian_valid(b);
  const Plane s11 = gaussian_valid(product(a, a)), s22 = gaussian_valid(product(b, b)), s12 = gaussian_valid(product(a, b));
  double ssim = 0, cs = 0;
  for (size_t i = 0; i < mu1.v.size(); ++i) {
    const double m1 = mu1.v[i], m2 = mu2.v[i];
    const double v1 = s11.v[i] - m1 * m1, v2 = s22.v[i] - m2 * m2, v12 = s12.v[i] - m1 * m2;
    const double csi = (2 * v12 + c2) / (v1 + v2 + c2);
    cs += csi;
    ssim += (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1) * csi;
  }
  const double n = static_cast<double>(mu1.v.size());
  return {ssim / n, cs / n};
}

// 2x2 average pooling; an odd extent is zero-padded by one on both sides and
// the padding counts toward the average.
inline Plane pool2(const Plane& p) {
  const int py = p.h % 2, px = p.w % 2;
  Plane o{(p.h + 2 * py - 2) / 2 + 1, (p.w + 2 * px - 2) / 2 + 1, {}};
  o.v.assign(static_cast<size_t>(o.h) * o.w, 0.0);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x) {
      double acc = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int sy = 2 * y + dy - py, sx = 2 * x + dx - px;
          if (sy >= 0 && sy < p.h && sx >= 0 && sx < p.w) acc += p.at(sy, sx);
        }
      o.at(y, x) = acc / 4;
    }
  return o;
}

// The five canonical weights are used as published (they sum to 1.0001);
// truncated sets are renormalized to one.
inline double weight_sum(int levels) {
  if (levels == 5) return 1.0;
  double s = 0;
  for (int l = 0; l < levels; ++l) s += kMsSsimWeights[static_cast<size_t>(l)];
  return s;
}

}  // namespace detail

/// Number of scales usable at a given smaller side: the coarsest scale must
/// still exceed the 11-tap window after the (L-1) halvings.
inline int ms_ssim_levels(int min_side) {
  int levels = 0;
  for (int l = 1; l <= 5; ++l)
    if (min_side > (detail::kSsimWindow - 1) * (1 << (l - 1))) levels = l;
  return levels;
}

struct MsSsimOptions {
  /// Allow fewer than five scales for frames smaller than 161 pixels; the
  /// leading weights are renormalized to sum to one.
  bool allow_reduced_scales = true;
};

/// Multiscale structural similarity of two [1, C, H, W] images in [0, 1],
/// averaged over channels.
template <typename T>
double ms_ssim(const Tensor<T>& a, const Tensor<T>& b, MsSsimOptions opt = {}) {
  require_shape(a.shape() == b.shape(), "ms_ssim: " + a.shape().str() + " vs " + b.shape().str());
  const int levels = ms_ssim_levels(std::min(a.h(), a.w()));
  if (levels == 0) throw std::invalid_argument("ms_ssim: frame smaller than the 11x11 window");
  if (levels < 5 && !opt.allow_reduced_scales)
    throw std::invalid_argument("ms_ssim: frames below 161 pixels need reduced scales");
  const double wsum = detail::weight_sum(levels);
  double total = 0;
  int count = 0;
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c) {
      detail::Plane pa{a.h(), a.w(), {}}, pb{a.h(), a.w(), {}};
      pa.v.assign(a.plane(n, c), a.plane(n, c) + a.shape().plane());
      pb.v.assign(b.plane(n, c), b.plane(n, c) + b.shape().plane());
      double value = 1;
      for (int l = 0; l < levels; ++l) {
        const auto [s, cs] = detail::ssim_cs(pa, pb);
        const double w = detail::kMsSsimWeights[static_cast<size_t>(l)] / wsum;
        if (l + 1 < levels) {
          value *= std::pow(std::max(cs, 0.0), w);
          pa = detail::pool2(pa);
          pb = detail::pool2(pb);
        } else {
          value *= std::pow(std::max(s, 0.0), w);
        }
      }
      total += value;
      ++count;
    }
  return total / count;
}

/// Differentiable MS-SSIM for training on even-sized crops.
template <typename T>
Var<T> ms_ssim_var(const Var<T>& a, const Var<T>& b) {
  require_shape(a.shape() == b.shape(), "ms_ssim_var: " + a.shape().str() + " vs " + b.shape().str());
  const int levels = ms_ssim_levels(std::min(a.shape().h, a.shape().w));
  if (levels == 0) throw std::invalid_argument("ms_ssim_var: input smaller than the 11x11 window");
  const auto g = detail::gaussian_window();
  Tensor<T> kernel(Shape{1, 1, detail::kSsimWindow, detail::kSsimWindow});
  for (int y = 0; y < detail::kSsimWindow; ++y)
    for (int x = 0; x < detail::kSsimWindow; ++x)
      kernel[static_cast<size_t>(y) * detail::kSsimWindow + x] = static_cast<T>(g[static_cast<size_t>(y)] * g[static_cast<size_t>(x)]);
  const double wsum = detail::weight_sum(levels);
  const T c1 = T(1e-4), c2 = T(9e-4), eps = T(1e-6);
  Var<T> x = a, y = b, value;
  for (int l = 0; l < levels; ++l) {
    const Var<T> mu1 = filter_valid(x, kernel), mu2 = filter_valid(y, kernel);
    const Var<T> m11 = mul(mu1, mu1), m22 = mul(mu2, mu2), m12 = mul(mu1, mu2);
    const Var<T> v1 = sub(filter_valid(mul(x, x), kernel), m11);
    const Var<T> v2 = sub(filter_valid(mul(y, y), kernel), m22);
    const Var<T> v12 = sub(filter_valid(mul(x, y), kernel), m12);
    const Var<T> cs_map = div(add_scalar(scale(v12, T(2)), c2), add_scalar(add(v1, v2), c2));
    Var<T> term;
    if (l + 1 < levels) {
      term = global_avg_pool(cs_map);
      require_shape(x.shape().h % 2 == 0 && x.shape().w % 2 == 0, "ms_ssim_var needs even extents at every scale");
      x = avg_pool2x2(x);
      y = avg_pool2x2(y);
    } else {
      const Var<T> lum = div(add_scalar(scale(m12, T(2)), c1), add_scalar(add(m11, m22), c1));
      term = global_avg_pool(mul(lum, cs_map));
    }
    const Var<T> factor = pow_scalar(lower_bound(term, eps), static_cast<T>(detail::kMsSsimWeights[static_cast<size_t>(l)] / wsum));
    value = value.defined() ? mul(value, factor) : factor;
  }
  return mean(value);
}

struct RDPoint {
  double lambda = 0;
  double bpp = 0;
  double psnr = 0;
  double msssim = 0;
};

enum class QualityMetric { psnr, msssim };
enum class BdMethod { pchip, cubic };

inline QualityMetric parse_quality_metric(const std::string& s) {
  if (s == "psnr" || s == "PSNR") return QualityMetric::psnr;
  if (s == "msssim" || s == "ms-ssim" || s == "MS-SSIM") return QualityMetric::msssim;
  throw std::invalid_argument("unknown quality metric " + s);
}

inline BdMethod parse_bd_method(const std::string& s) {
  if (s == "pchip") return BdMethod::pchip;
  if (s == "cubic" || s == "polyfit") return BdMethod::cubic;
  throw std::invalid_argument("unknown BD interpolation " + s);
}

/// Reads `lambda,bpp,psnr,msssim` rows; a header line is skipped.
inline std::vector<RDPoint> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<RDPoint> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_of("0123456789") != 0) continue;
    std::stringstream ss(line);
    std::string f;
    std::vector<double> v;
    while (std::getline(ss, f, ',')) v.push_back(std::stod(f));
    if (v.size() != 4) throw IoError(path + ": expected 4 columns in '" + line + "'");
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  return out;
}

inline void write_rd_csv(const std::string& path, const std::vector<RDPoint>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path);
  out << "lambda,bpp,psnr,msssim\n";
  out.precision(10);
  for (const auto& p : points) out << p.lambda << ',' << p.bpp << ',' << p.psnr << ',' << p.msssim << '\n';
}

namespace detail {

// Samples (quality, log-rate) sorted by quality.
struct Curve {
  std::vector<double> q, r;
};

inline Curve make_curve(const std::vector<RDPoint>& pts, QualityMetric m) {
  if (pts.size() < 4) throw std::invalid_argument("BD-rate needs at least 4 points per curve");
  std::vector<std::pair<double, double>> v;
  std::vector<double> rates;
  for (const auto& p : pts) {
    if (!(p.bpp > 0)) throw std::invalid_argument("BD-rate needs positive bpp");
    v.emplace_back(m == QualityMetric::psnr ? p.psnr : p.msssim, std::log(p.bpp));
    rates.push_back(p.bpp);
  }
  std::sort(rates.begin(), rates.end());
  if (std::adjacent_find(rates.begin(), rates.end()) != rates.end())
    throw std::invalid_argument("BD-rate needs strictly increasing bpp");
  std::sort(v.begin(), v.end());
  Curve c;
  for (const auto& [q, r] : v) {
    if (!c.q.empty() && q <= c.q.back()) throw std::invalid_argument("BD-rate needs strictly increasing quality");
    c.q.push_back(q);
    c.r.push_back(r);
  }
  return c;
}

// Integral of the least-squares cubic through the curve over [lo, hi].
inline double cubic_integral(const Curve& c, double lo, double hi) {
  const int n = static_cast<int>(c.q.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 4; ++k) a(i, k) = std::pow(c.q[static_cast<size_t>(i)], k);
    y(i) = c.r[static_cast<size_t>(i)];
  }
  const Eigen::VectorXd p = a.colPivHouseholderQr().solve(y);
  auto prim = [&](double x) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += p(k) * std::pow(x, k + 1) / (k + 1);
    return s;
  };
  return prim(hi) - prim(lo);
}

// Endpoint slope of a monotone cubic Hermite interpolant (three-point, shape preserving).
inline double pchip_end_slope(double h0, double h1, double m0, double m1) {
  auto sign = [](double v) { return (v > 0) - (v < 0); };
  const double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
  if (sign(m0) != sign(m1) && std::abs(d) > std::abs(3 * m0)) return 3 * m0;
  if (sign(d) != sign(m0)) return 0;
  return d;
}

inline std::vector<double> pchip_slopes(const Curve& c) {
  const size_t n = c.q.size();
  std::vector<double> h(n - 1), m(n - 1), d(n, 0.0);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = c.q[i + 1] - c.q[i];
    m[i] = (c.r[i + 1] - c.r[i]) / h[i];
  }
  for (size_t i = 1; i + 1 < n; ++i) {
    if (m[i - 1] * m[i] <= 0) continue;
    const double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
    d[i] = (w1 + w2) / (w1 / m[i - 1] + w2 / m[i]);
  }
  d[0] = pchip_end_slope(h[0], h[1], m[0], m[1]);
  d[n - 1] = pchip_end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
  return d;
}

// Integral of the PCHIP interpolant over [lo, hi] (inside the sample range).
// Each Hermite piece is cubic, so two-point Gauss-Legendre per piece is exact.
inline double pchip_integral(const Curve& c, double lo, double hi) {
  const auto d = pchip_slopes(c);
  auto eval = [&](size_t i, double x) {
    const double h = c.q[i + 1] - c.q[i], t = (x - c.q[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * c.r[i] + (t3 - 2 * t2 + t) * h * d[i] + (-2 * t3 + 3 * t2) * c.r[i + 1] +
           (t3 - t2) * h * d[i + 1];
  };
  const double g = 1.0 / std::sqrt(3.0);
  double s = 0;
  for (size_t i = 0; i + 1 < c.q.size(); ++i) {
    const double a = std::max(lo, c.q[i]), b = std::min(hi, c.q[i + 1]);
    if (b <= a) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    s += half * (eval(i, mid - half * g) + eval(i, mid + half * g));
  }
  return s;
}

}  // namespace detail

/// Average bitrate difference (percent) of `test` against `anchor` at equal
/// quality; negative values are savings.
inline double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test,
                      QualityMetric metric = QualityMetric::psnr, BdMethod method = BdMethod::pchip) {
  const auto a = detail::make_curve(anchor, metric), t = detail::make_curve(test, metric);
  const double lo = std::max(a.q.front(), t.q.front()), hi = std::min(a.q.back(), t.q.back());
  if (!(hi > lo)) throw std::invalid_argument("BD-rate: the curves share no quality range");
  const auto integral = method == BdMethod::pchip ? detail::pchip_integral : detail::cubic_integral;
  const double avg = (integral(t, lo, hi) - integral(a, lo, hi)) / (hi - lo);
  return (std::exp(avg) - 1.0) * 100.0;
}

}  // namespace mstc
