#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mstc {

/// Byte-oriented range coder with a 48-bit window. Symbols are coded against
/// cumulative frequencies whose total is 2^bits (bits <= 16). The symbol whose
/// interval ends at the total receives the rounding remainder of the range.
/// Carries are resolved with a cached byte plus a run of pending 0xFF bytes.
class RangeEncoder {
 public:
  static constexpr int kWindowBits = 48;
  static constexpr uint64_t kTop = uint64_t{1} << kWindowBits;
  static constexpr uint64_t kBottom = uint64_t{1} << (kWindowBits - 8);
  static constexpr uint64_t kMask = kTop - 1;

  /// Narrows the interval to [cum, cum + freq) out of 2^bits.
  void encode(uint32_t cum, uint32_t freq, int bits = 16) {
    const uint64_t total = uint64_t{1} << bits;
    if (freq == 0 || cum + uint64_t{freq} > total) throw std::invalid_argument("range coder: bad interval");
    const uint64_t r = range_ >> bits;
    low_ += r * cum;
    range_ = cum + uint64_t{freq} == total ? range_ - r * cum : r * freq;
    while (range_ < kBottom) {
      shift_low();
      range_ <<= 8;
    }
  }

  /// Codes `count` (<= 16) raw bits of `value` with uniform probability.
  void encode_bits(uint32_t value, int count) {
    if (count > 0) encode(value & ((uint32_t{1} << count) - 1), 1, count);
  }

  /// Terminates the stream and returns its bytes. The final byte pins a value
  /// inside the last interval; a decoder pads the tail with zeros.
  std::vector<uint8_t> finish() {
    const uint64_t step = kBottom;
    low_ = (low_ + step - 1) / step * step;
    shift_low();
    shift_low();
    range_ = kTop;
    low_ = 0;
    std::vector<uint8_t> out = std::move(bytes_);
    bytes_.clear();
    have_cache_ = false;
    pending_ = 0;
    return out;
  }

 private:
  void shift_low() {
    const uint64_t carry = low_ >> kWindowBits;
    const uint64_t top = (low_ >> (kWindowBits - 8)) & 0xFF;
    if (carry != 0 || top != 0xFF) {
      if (have_cache_) bytes_.push_back(static_cast<uint8_t>(cache_ + carry));
      for (; pending_ > 0; --pending_) bytes_.push_back(static_cast<uint8_t>(0xFF + carry));
      cache_ = static_cast<uint8_t>(top);
      have_cache_ = true;
    } else {
      ++pending_;
    }
    low_ = (low_ << 8) & kMask;
  }

  uint64_t low_ = 0;
  uint64_t range_ = kTop;
  uint8_t cache_ = 0;
  bool have_cache_ = false;
  uint64_t pending_ = 0;
  std::vector<uint8_t> bytes_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
    for (int i = 0; i < RangeEncoder::kWindowBits / 8; ++i) code_ = (code_ << 8) | next_byte();
  }

  /// Position of the next symbol within [0, 2^bits). Must be followed by
  /// update() with the interval that contains it.
  uint32_t target(int bits = 16) {
    r_ = range_ >> bits;
    const uint64_t t = code_ / r_;
    const uint64_t last = (uint64_t{1} << bits) - 1;
    return static_cast<uint32_t>(t < last ? t : last);
  }

  void update(uint32_t cum, uint32_t freq, int bits = 16) {
    const uint64_t total = uint64_t{1} << bits;
    code_ -= r_ * cum;
    range_ = cum + uint64_t{freq} == total ? range_ - r_ * cum : r_ * freq;
    while (range_ < RangeEncoder::kBottom) {
      code_ = (code_ << 8) | next_byte();
      range_ <<= 8;
    }
  }

  uint32_t decode_bits(int count) {
    if (count <= 0) return 0;
    const uint32_t v = target(count);
    update(v, 1, count);
    return v;
  }

 private:
  uint64_t next_byte() { return pos_ < bytes_.size() ? bytes_[pos_++] : 0; }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint64_t code_ = 0;
  uint64_t range_ = RangeEncoder::kTop;
  uint64_t r_ = 0;
};

}  // namespace mstc
