#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mstc/entropy/range_coder.hpp"

namespace mstc {

inline constexpr int kProbBits = 16;
inline constexpr uint32_t kProbTotal = uint32_t{1} << kProbBits;
inline constexpr double kSigmaMin = 0.11;
inline constexpr double kProbMin = 1.0 / 65536.0;
inline constexpr int kSymbolMin = -(1 << 15);
inline constexpr int kSymbolMax = (1 << 15) - 1;
/// Largest half-width of an explicit Gaussian support; values beyond it escape.
inline constexpr int kMaxHalfSupport = 4096;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Discretized Gaussian mass of the integer bin around `x`, without flooring.
inline double gaussian_mass(double x, double mu, double sigma) {
  const double v = std::abs(x - mu);
  return normal_cdf((0.5 - v) / sigma) - normal_cdf((-0.5 - v) / sigma);
}

/// -log2 max(p, p_min) for one integer under N(mu, sigma), before table quantization.
inline double gaussian_symbol_bits(double x, double mu, double sigma) {
  return -std::log2(std::max(gaussian_mass(x, mu, std::max(sigma, kSigmaMin)), kProbMin));
}

// A coding model is any type exposing
//   int lo() const, int count() const  -- explicit values lo .. lo+count-1
//   double cdf(int i) const            -- i in [0, count+1], cdf(0) = 0,
//                                         cdf(1) = escape mass, cdf(count+1) = 1
// Symbol 0 is the escape; symbol i >= 1 stands for value lo + i - 1. Integer
// frequencies follow cum(i) = i + floor(cdf(i) * (2^16 - count - 1)), which
// gives every symbol at least one count and sums to exactly 2^16.

template <typename Model>
uint32_t model_cum(const Model& m, int i) {
  const int nsym = m.count() + 1;
  if (i >= nsym) return kProbTotal;
  const double scale = static_cast<double>(kProbTotal - static_cast<uint32_t>(nsym));
  const double c = std::clamp(m.cdf(i), 0.0, 1.0);
  return static_cast<uint32_t>(i) + static_cast<uint32_t>(std::floor(c * scale));
}

namespace detail {

inline constexpr int kEscapeLengthBits = 5;

inline double escape_payload_bits(uint32_t excess) { return 1.0 + kEscapeLengthBits + std::bit_width(excess); }

inline void encode_escape(RangeEncoder& enc, bool above, uint32_t excess) {
  enc.encode_bits(above ? 1 : 0, 1);
  const int n = std::bit_width(excess);
  enc.encode_bits(static_cast<uint32_t>(n), kEscapeLengthBits);
  for (int done = 0; done < n; done += 16) enc.encode_bits(excess >> done, std::min(16, n - done));
}

inline uint32_t decode_escape_excess(RangeDecoder& dec, bool& above) {
  above = dec.decode_bits(1) != 0;
  const int n = static_cast<int>(dec.decode_bits(kEscapeLengthBits));
  uint32_t excess = 0;
  for (int done = 0; done < n; done += 16) excess |= dec.decode_bits(std::min(16, n - done)) << done;
  return excess;
}

}  // namespace detail

/// Codes one integer and returns the bits the quantized model charges for it
/// (symbol cost plus any escape payload).
template <typename Model>
double encode_value(RangeEncoder& enc, const Model& m, int value) {
  const int lo = m.lo(), n = m.count();
  int sym = 0;
  if (value >= lo && value < lo + n) sym = value - lo + 1;
  const uint32_t c0 = model_cum(m, sym), c1 = model_cum(m, sym + 1);
  if (c1 <= c0) throw std::logic_error("coding model produced an empty interval");
  enc.encode(c0, c1 - c0, kProbBits);
  double bits = kProbBits - std::log2(static_cast<double>(c1 - c0));
  if (sym == 0) {
    const bool above = value >= lo + n;
    const uint32_t excess = static_cast<uint32_t>(above ? value - (lo + n) : lo - 1 - value);
    detail::encode_escape(enc, above, excess);
    bits += detail::escape_payload_bits(excess);
  }
  return bits;
}

template <typename Model>
int decode_value(RangeDecoder& dec, const Model& m) {
  const uint32_t t = dec.target(kProbBits);
  int a = 0, b = m.count();  // largest symbol s with cum(s) <= t
  while (a < b) {
    const int mid = a + (b - a + 1) / 2;
    if (model_cum(m, mid) <= t) a = mid;
    else b = mid - 1;
  }
  const uint32_t c0 = model_cum(m, a), c1 = model_cum(m, a + 1);
  dec.update(c0, c1 - c0, kProbBits);
  if (a > 0) return m.lo() + a - 1;
  bool above = false;
  const uint32_t excess = detail::decode_escape_excess(dec, above);
  return above ? m.lo() + m.count() + static_cast<int>(excess) : m.lo() - 1 - static_cast<int>(excess);
}

/// Bits the quantized model charges for `value` without coding it.
template <typename Model>
double model_bits(const Model& m, int value) {
  const int lo = m.lo(), n = m.count();
  if (value >= lo && value < lo + n) {
    const int s = value - lo + 1;
    return kProbBits - std::log2(static_cast<double>(model_cum(m, s + 1) - model_cum(m, s)));
  }
  const uint32_t excess = static_cast<uint32_t>(value >= lo + n ? value - (lo + n) : lo - 1 - value);
  return kProbBits - std::log2(static_cast<double>(model_cum(m, 1))) + detail::escape_payload_bits(excess);
}

/// Discretized Gaussian over [m - R, m + R] with m = round(mu) and R = ceil(20 sigma)
/// (capped); the escape symbol carries both tails.
class GaussianModel {
 public:
  GaussianModel(double mu, double sigma) : mu_(mu), sigma_(std::max(sigma, kSigmaMin)) {
    const double center = std::clamp(std::round(mu), static_cast<double>(kSymbolMin), static_cast<double>(kSymbolMax));
    const int half = static_cast<int>(std::min<double>(std::ceil(20.0 * sigma_), kMaxHalfSupport));
    lo_ = static_cast<int>(center) - half;
    count_ = 2 * half + 1;
    base_ = normal_cdf((lo_ - 0.5 - mu_) / sigma_);
    const double upper_tail = normal_cdf((mu_ - (lo_ + count_ - 0.5)) / sigma_);
    tail_ = base_ + upper_tail;
  }

  int lo() const { return lo_; }
  int count() const { return count_; }
  double cdf(int i) const {
    if (i <= 0) return 0.0;
    if (i > count_) return 1.0;
    if (i == 1) return tail_;
    return tail_ + normal_cdf((lo_ + i - 1 - 0.5 - mu_) / sigma_) - base_;
  }

 private:
  double mu_, sigma_;
  int lo_ = 0, count_ = 1;
  double base_ = 0, tail_ = 0;
};

/// Model backed by an explicit cdf table (used for the factorized prior, whose
/// cdf is costly to evaluate per symbol).
class TableModel {
 public:
  TableModel() = default;
  TableModel(int lo, std::vector<double> cdf) : lo_(lo), cdf_(std::move(cdf)) {
    if (cdf_.size() < 2) throw std::invalid_argument("cdf table needs at least one value");
    cdf_.front() = 0.0;
    cdf_.back() = 1.0;
  }
  int lo() const { return lo_; }
  int count() const { return static_cast<int>(cdf_.size()) - 2; }
  double cdf(int i) const { return cdf_[static_cast<size_t>(std::clamp(i, 0, count() + 1))]; }

 private:
  int lo_ = 0;
  std::vector<double> cdf_;
};

}  // namespace mstc
