#pragma once

#include <cmath>
#include <vector>

#include "mstc/ops/conv.hpp"

namespace mstc {

namespace detail {

// Bilinear read of one plane at a fractional location; taps outside the plane read as zero.
template <typename T>
struct BilinearSample {
  int y0, x0;
  T ly, lx;
  T v00, v01, v10, v11;

  T value() const {
    return (T(1) - ly) * (T(1) - lx) * v00 + (T(1) - ly) * lx * v01 + ly * (T(1) - lx) * v10 +
           ly * lx * v11;
  }
  T d_dy() const { return -(T(1) - lx) * v00 - lx * v01 + (T(1) - lx) * v10 + lx * v11; }
  T d_dx() const { return -(T(1) - ly) * v00 + (T(1) - ly) * v01 - ly * v10 + ly * v11; }
};

template <typename T>
BilinearSample<T> bilinear_sample(const T* plane, int h, int w, T py, T px) {
  BilinearSample<T> s{};
  s.y0 = static_cast<int>(std::floor(py));
  s.x0 = static_cast<int>(std::floor(px));
  s.ly = py - static_cast<T>(s.y0);
  s.lx = px - static_cast<T>(s.x0);
  auto read = [&](int y, int x) { return (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : T(0); };
  s.v00 = read(s.y0, s.x0);
  s.v01 = read(s.y0, s.x0 + 1);
  s.v10 = read(s.y0 + 1, s.x0);
  s.v11 = read(s.y0 + 1, s.x0 + 1);
  return s;
}

template <typename T>
void bilinear_scatter(T* plane, int h, int w, const BilinearSample<T>& s, T g) {
  auto put = [&](int y, int x, T v) {
    if (y >= 0 && y < h && x >= 0 && x < w) plane[y * w + x] += v;
  };
  put(s.y0, s.x0, g * (T(1) - s.ly) * (T(1) - s.lx));
  put(s.y0, s.x0 + 1, g * (T(1) - s.ly) * s.lx);
  put(s.y0 + 1, s.x0, g * s.ly * (T(1) - s.lx));
  put(s.y0 + 1, s.x0 + 1, g * s.ly * s.lx);
}

inline constexpr int kDeformTaps = 9;

// Offset channel of (group, tap, axis); axis 0 is the row (y) displacement, 1 the column (x).
inline int offset_channel(int group, int tap, int axis) { return 2 * (group * kDeformTaps + tap) + axis; }
inline int mask_channel(int group, int tap) { return group * kDeformTaps + tap; }

template <typename T>
void deform_im2col(const Tensor<T>& x, const Tensor<T>& offsets, const Tensor<T>& masks, int n,
                   int groups, T* cols) {
  const Shape xs = x.shape();
  const int hw = xs.h * xs.w;
  const int per_group = xs.c / groups;
  for (int c = 0; c < xs.c; ++c) {
    const int g = c / per_group;
    const T* plane = x.plane(n, c);
    for (int tap = 0; tap < kDeformTaps; ++tap) {
      const T* oy = offsets.plane(n, offset_channel(g, tap, 0));
      const T* ox = offsets.plane(n, offset_channel(g, tap, 1));
      const T* mk = masks.plane(n, mask_channel(g, tap));
      T* row = cols + (static_cast<size_t>(c) * kDeformTaps + tap) * hw;
      const int ky = tap / 3 - 1, kx = tap % 3 - 1;
      for (int y = 0; y < xs.h; ++y)
        for (int xx = 0; xx < xs.w; ++xx) {
          const int i = y * xs.w + xx;
          const auto s = bilinear_sample(plane, xs.h, xs.w, static_cast<T>(y + ky) + oy[i],
                                         static_cast<T>(xx + kx) + ox[i]);
          row[i] = mk[i] * s.value();
        }
    }
  }
}

}  // namespace detail

/// Modulated deformable 3x3 convolution, stride 1, padding 1.
///   x:       [N, Cin, H, W]
///   offsets: [N, 2*G*9, H, W]  (dy, dx) pairs per group and tap, in pixels
///   masks:   [N, G*9, H, W]
///   weight:  [Cout, Cin, 3, 3]; bias [1, Cout, 1, 1] or undefined.
/// Input channels are split into G contiguous groups sharing one offset/mask set.
template <typename T>
Var<T> deform_conv2d(const Var<T>& x, const Var<T>& offsets, const Var<T>& masks, const Var<T>& weight,
                     const Var<T>& bias, int groups) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require_shape(groups > 0 && xs.c % groups == 0, "deform_conv2d: channels not divisible by groups");
  require_shape(ws.c == xs.c && ws.h == 3 && ws.w == 3, "deform_conv2d: weight " + ws.str());
  require_shape(offsets.shape() == (Shape{xs.n, 2 * groups * detail::kDeformTaps, xs.h, xs.w}),
                "deform_conv2d: offsets " + offsets.shape().str());
  require_shape(masks.shape() == (Shape{xs.n, groups * detail::kDeformTaps, xs.h, xs.w}),
                "deform_conv2d: masks " + masks.shape().str());
  const int cout = ws.n, k = xs.c * detail::kDeformTaps, hw = xs.h * xs.w;
  Tensor<T> out(Shape{xs.n, cout, xs.h, xs.w});
  std::vector<T> cols(static_cast<size_t>(k) * hw);
  ConstMatMap<T> wm(weight.value().data(), cout, k);
  for (int n = 0; n < xs.n; ++n) {
    detail::deform_im2col(x.value(), offsets.value(), masks.value(), n, groups, cols.data());
    ConstMatMap<T> cm(cols.data(), k, hw);
    MatMap<T> om(out.plane(n, 0), cout, hw);
    om.noalias() = wm * cm;
    if (bias.defined())
      for (int c = 0; c < cout; ++c) om.row(c).array() += bias.value()[static_cast<size_t>(c)];
  }
  std::vector<Var<T>> inputs{x, offsets, masks, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [groups](Node<T>& node) {
    const Tensor<T>& xv = node.input_value(0);
    const Tensor<T>& ov = node.input_value(1);
    const Tensor<T>& mv = node.input_value(2);
    const Tensor<T>& wv = node.input_value(3);
    const Shape xs = xv.shape();
    const int cout = wv.shape().n, k = xs.c * detail::kDeformTaps, hw = xs.h * xs.w;
    const int per_group = xs.c / groups;
    const bool need_x = node.input_needs_grad(0);
    const bool need_o = node.input_needs_grad(1);
    const bool need_m = node.input_needs_grad(2);
    const bool need_w = node.input_needs_grad(3);
    const bool need_b = node.inputs.size() > 4 && node.input_needs_grad(4);
    std::vector<T> cols(static_cast<size_t>(k) * hw);
    ConstMatMap<T> wm(wv.data(), cout, k);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap<T> gm(node.grad.plane(n, 0), cout, hw);
      if (need_w) {
        detail::deform_im2col(xv, ov, mv, n, groups, cols.data());
        ConstMatMap<T> cm(cols.data(), k, hw);
        MatMap<T> gw(node.input_grad(3).data(), cout, k);
        gw.noalias() += gm * cm.transpose();
      }
      if (need_b) {
        Tensor<T>& gb = node.input_grad(4);
        for (int c = 0; c < cout; ++c) gb[static_cast<size_t>(c)] += gm.row(c).sum();
      }
      if (!(need_x || need_o || need_m)) continue;
      MatMap<T> gcols(cols.data(), k, hw);
      gcols.noalias() = wm.transpose() * gm;
      for (int c = 0; c < xs.c; ++c) {
        const int g = c / per_group;
        const T* plane = xv.plane(n, c);
        T* gplane = need_x ? node.input_grad(0).plane(n, c) : nullptr;
        for (int tap = 0; tap < detail::kDeformTaps; ++tap) {
          const int oyc = detail::offset_channel(g, tap, 0), oxc = detail::offset_channel(g, tap, 1);
          const int mc = detail::mask_channel(g, tap);
          const T* oy = ov.plane(n, oyc);
          const T* ox = ov.plane(n, oxc);
          const T* mk = mv.plane(n, mc);
          T* goy = need_o ? node.input_grad(1).plane(n, oyc) : nullptr;
          T* gox = need_o ? node.input_grad(1).plane(n, oxc) : nullptr;
          T* gmk = need_m ? node.input_grad(2).plane(n, mc) : nullptr;
          const T* grow = cols.data() + (static_cast<size_t>(c) * detail::kDeformTaps + tap) * hw;
          const int ky = tap / 3 - 1, kx = tap % 3 - 1;
          for (int y = 0; y < xs.h; ++y)
            for (int xx = 0; xx < xs.w; ++xx) {
              const int i = y * xs.w + xx;
              const T gc = grow[i];
              if (gc == T(0)) continue;
              const auto s = detail::bilinear_sample(plane, xs.h, xs.w, static_cast<T>(y + ky) + oy[i],
                                                     static_cast<T>(xx + kx) + ox[i]);
              if (gmk) gmk[i] += gc * s.value();
              if (goy) {
                goy[i] += gc * mk[i] * s.d_dy();
                gox[i] += gc * mk[i] * s.d_dx();
              }
              if (gplane) detail::bilinear_scatter(gplane, xs.h, xs.w, s, gc * mk[i]);
            }
        }
      }
    }
  });
}

}  // namespace mstc
