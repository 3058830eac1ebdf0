#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mstc/video_io.hpp"

namespace mstc {

/// Clip of a textured rectangle translating over a smooth colour gradient.
/// Motion is (dx, dy) pixels per frame, with wrap-around.
inline RawSequence moving_rectangle_clip(int n_frames, int height, int width, int dx = 3, int dy = 2,
                                         uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double base[3] = {0.2 + 0.3 * u(rng), 0.3 + 0.3 * u(rng), 0.4 + 0.3 * u(rng)};
  const double tint[3] = {0.6 + 0.4 * u(rng), 0.2 + 0.4 * u(rng), 0.1 + 0.3 * u(rng)};
  const int rh = height / 3, rw = width / 3;
  const int y0 = height / 4, x0 = width / 5;
  RawSequence seq;
  seq.width = width;
  seq.height = height;
  for (int t = 0; t < n_frames; ++t) {
    Frame f = make_frame(height, width);
    const int oy = ((y0 + dy * t) % height + height) % height, ox = ((x0 + dx * t) % width + width) % width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const int ry = ((y - oy) % height + height) % height, rx = ((x - ox) % width + width) % width;
        const bool inside = ry < rh && rx < rw;
        const double stripe = ((rx / 4 + ry / 4) % 2) ? 0.15 : -0.15;
        for (int c = 0; c < 3; ++c) {
          const double bg = base[c] + 0.25 * (static_cast<double>(y) / height - 0.5) + 0.15 * (static_cast<double>(x) / width - 0.5) * (c - 1);
          f.at(0, c, y, x) = static_cast<float>(std::clamp(inside ? tint[c] + stripe : bg, 0.0, 1.0));
        }
      }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace mstc
