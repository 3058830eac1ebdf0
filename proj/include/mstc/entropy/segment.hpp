#pragma once

#include <cstdint>
#include <vector>

#include "mstc/entropy/range_coder.hpp"

namespace mstc {

/// One independently range-coded substream and the bits its model charged.
struct Segment {
  std::vector<uint8_t> bytes;
  double model_bits = 0;

  double coded_bits() const { return 8.0 * static_cast<double>(bytes.size()); }
};

/// Runs `body(encoder)` on a fresh coder; body returns the model bits it charged.
template <typename F>
Segment code_segment(F&& body) {
  RangeEncoder enc;
  Segment s;
  s.model_bits = body(enc);
  s.bytes = enc.finish();
  return s;
}

}  // namespace mstc
