#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <vector>

#include "mstc/ops/basic.hpp"

namespace mstc {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  int kh = 3;
  int kw = 3;
  int stride = 1;
  int pad = 1;

  int out_h(int h) const { return (h + 2 * pad - kh) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pad - kw) / stride + 1; }
};

namespace detail {

// cols is (channels * kh * kw) x (out_h * out_w).
template <typename T>
void im2col(const T* img, int channels, int h, int w, const ConvGeometry& g, T* cols) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((static_cast<size_t>(c) * g.kh + ky) * g.kw + kx) * oh * ow;
        const T* plane = img + static_cast<size_t>(c) * h * w;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          T* dst = row + static_cast<size_t>(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kx;
            dst[x] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, int channels, int h, int w, const ConvGeometry& g, T* img) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((static_cast<size_t>(c) * g.kh + ky) * g.kw + kx) * oh * ow;
        T* plane = img + static_cast<size_t>(c) * h * w;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += src[x];
          }
        }
      }
}

inline bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace detail

/// 2-D cross-correlation. weight: [Cout, Cin, kh, kw]; bias: [1, Cout, 1, 1] or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require_shape(ws.c == xs.c, "conv2d: input " + xs.str() + " vs weight " + ws.str());
  const ConvGeometry g{ws.h, ws.w, stride, pad};
  const int oh = g.out_h(xs.h), ow = g.out_w(xs.w);
  require_shape(oh > 0 && ow > 0, "conv2d: empty output for " + xs.str());
  const int cout = ws.n;
  const int k = ws.c * ws.h * ws.w;
  const int ohw = oh * ow;
  Tensor<T> out(Shape{xs.n, cout, oh, ow});
  const bool pointwise = detail::is_pointwise(g);
  std::vector<T> cols(pointwise ? 0 : static_cast<size_t>(k) * ohw);
  ConstMatMap<T> wm(weight.value().data(), cout, k);
  for (int n = 0; n < xs.n; ++n) {
    const T* src = x.value().plane(n, 0);
    if (!pointwise) detail::im2col(src, xs.c, xs.h, xs.w, g, cols.data());
    ConstMatMap<T> cm(pointwise ? src : cols.data(), k, ohw);
    MatMap<T> om(out.plane(n, 0), cout, ohw);
    om.noalias() = wm * cm;
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) om.row(c).array() += bias.value()[static_cast<size_t>(c)];
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [g](Node<T>& node) {
    const Tensor<T>& xv = node.input_value(0);
    const Tensor<T>& wv = node.input_value(1);
    const Shape xs = xv.shape();
    const Shape ws = wv.shape();
    const Shape os = node.value.shape();
    const int cout = ws.n, k = ws.c * ws.h * ws.w, ohw = os.h * os.w;
    const bool pointwise = detail::is_pointwise(g);
    const bool need_x = node.input_needs_grad(0);
    const bool need_w = node.input_needs_grad(1);
    const bool need_b = node.inputs.size() > 2 && node.input_needs_grad(2);
    std::vector<T> cols(pointwise ? 0 : static_cast<size_t>(k) * ohw);
    ConstMatMap<T> wm(wv.data(), cout, k);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap<T> gm(node.grad.plane(n, 0), cout, ohw);
      if (need_w) {
        const T* src = xv.plane(n, 0);
        if (!pointwise) detail::im2col(src, xs.c, xs.h, xs.w, g, cols.data());
        ConstMatMap<T> cm(pointwise ? src : cols.data(), k, ohw);
        MatMap<T> gw(node.input_grad(1).data(), cout, k);
        gw.noalias() += gm * cm.transpose();
      }
      if (need_b) {
        Tensor<T>& gb = node.input_grad(2);
        for (int c = 0; c < cout; ++c) gb[static_cast<size_t>(c)] += gm.row(c).sum();
      }
      if (need_x) {
        if (pointwise) {
          MatMap<T> gx(node.input_grad(0).plane(n, 0), k, ohw);
          gx.noalias() += wm.transpose() * gm;
        } else {
          MatMap<T> cm(cols.data(), k, ohw);
          cm.noalias() = wm.transpose() * gm;
          detail::col2im(cols.data(), xs.c, xs.h, xs.w, g, node.input_grad(0).plane(n, 0));
        }
      }
    }
  });
}

/// Transposed convolution (adjoint of conv2d). weight: [Cin, Cout, kh, kw].
/// Output extent: (in - 1) * stride - 2 * pad + k + output_pad.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int pad, int output_pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require_shape(ws.n == xs.c, "conv_transpose2d: input " + xs.str() + " vs weight " + ws.str());
  const int cout = ws.c;
  const int oh = (xs.h - 1) * stride - 2 * pad + ws.h + output_pad;
  const int ow = (xs.w - 1) * stride - 2 * pad + ws.w + output_pad;
  const ConvGeometry g{ws.h, ws.w, stride, pad};
  // The forward conv of geometry g maps (oh, ow) back onto (xs.h, xs.w).
  require_shape(g.out_h(oh) == xs.h && g.out_w(ow) == xs.w, "conv_transpose2d: bad geometry");
  const int k = cout * ws.h * ws.w;
  const int ihw = xs.h * xs.w;
  Tensor<T> out(Shape{xs.n, cout, oh, ow});
  std::vector<T> cols(static_cast<size_t>(k) * ihw);
  ConstMatMap<T> wm(weight.value().data(), ws.n, k);
  for (int n = 0; n < xs.n; ++n) {
    ConstMatMap<T> xm(x.value().plane(n, 0), xs.c, ihw);
    MatMap<T> cm(cols.data(), k, ihw);
    cm.noalias() = wm.transpose() * xm;
    detail::col2im(cols.data(), cout, oh, ow, g, out.plane(n, 0));
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) {
        T* p = out.plane(n, c);
        const T b = bias.value()[static_cast<size_t>(c)];
        for (int i = 0; i < oh * ow; ++i) p[i] += b;
      }
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [g](Node<T>& node) {
    const Tensor<T>& xv = node.input_value(0);
    const Tensor<T>& wv = node.input_value(1);
    const Shape xs = xv.shape();
    const Shape ws = wv.shape();
    const Shape os = node.value.shape();
    const int cout = ws.c, k = cout * ws.h * ws.w, ihw = xs.h * xs.w;
    const bool need_x = node.input_needs_grad(0);
    const bool need_w = node.input_needs_grad(1);
    const bool need_b = node.inputs.size() > 2 && node.input_needs_grad(2);
    std::vector<T> cols(static_cast<size_t>(k) * ihw);
    ConstMatMap<T> wm(wv.data(), ws.n, k);
    for (int n = 0; n < xs.n; ++n) {
      if (need_x || need_w) detail::im2col(node.grad.plane(n, 0), cout, os.h, os.w, g, cols.data());
      ConstMatMap<T> cm(cols.data(), k, ihw);
      if (need_x) {
        MatMap<T> gx(node.input_grad(0).plane(n, 0), xs.c, ihw);
        gx.noalias() += wm * cm;
      }
      if (need_w) {
        ConstMatMap<T> xm(xv.plane(n, 0), xs.c, ihw);
        MatMap<T> gw(node.input_grad(1).data(), ws.n, k);
        gw.noalias() += xm * cm.transpose();
      }
      if (need_b) {
        Tensor<T>& gb = node.input_grad(2);
        for (int c = 0; c < cout; ++c) {
          const T* p = node.grad.plane(n, c);
          T acc = 0;
          for (int i = 0; i < os.h * os.w; ++i) acc += p[i];
          gb[static_cast<size_t>(c)] += acc;
        }
      }
    }
  });
}

/// Depthwise convolution with one kernel per channel, stride 1, "same" padding.
/// kernels: [N, C, k, k] (one set per sample) or [1, C, k, k] (shared).
template <typename T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& kernels) {
  const Shape xs = x.shape();
  const Shape ks = kernels.shape();
  require_shape(ks.c == xs.c && (ks.n == xs.n || ks.n == 1) && ks.h == ks.w && ks.h % 2 == 1,
                "depthwise_conv2d: input " + xs.str() + " vs kernels " + ks.str());
  const int r = ks.h / 2;
  Tensor<T> out(xs);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* p = x.value().plane(n, c);
      const T* kk = kernels.value().plane(ks.n == 1 ? 0 : n, c);
      T* o = out.plane(n, c);
      for (int y = 0; y < xs.h; ++y)
        for (int xx = 0; xx < xs.w; ++xx) {
          T acc = 0;
          for (int dy = -r; dy <= r; ++dy) {
            const int iy = y + dy;
            if (iy < 0 || iy >= xs.h) continue;
            for (int dx = -r; dx <= r; ++dx) {
              const int ix = xx + dx;
              if (ix < 0 || ix >= xs.w) continue;
              acc += kk[(dy + r) * ks.w + dx + r] * p[iy * xs.w + ix];
            }
          }
          o[y * xs.w + xx] = acc;
        }
    }
  return make_result<T>(std::move(out), {x, kernels}, [r](Node<T>& node) {
    const Tensor<T>& xv = node.input_value(0);
    const Tensor<T>& kv = node.input_value(1);
    const Shape xs = xv.shape();
    const Shape ks = kv.shape();
    const bool need_x = node.input_needs_grad(0);
    const bool need_k = node.input_needs_grad(1);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const T* p = xv.plane(n, c);
        const T* kk = kv.plane(ks.n == 1 ? 0 : n, c);
        const T* g = node.grad.plane(n, c);
        T* gx = need_x ? node.input_grad(0).plane(n, c) : nullptr;
        T* gk = need_k ? node.input_grad(1).plane(ks.n == 1 ? 0 : n, c) : nullptr;
        for (int y = 0; y < xs.h; ++y)
          for (int xx = 0; xx < xs.w; ++xx) {
            const T go = g[y * xs.w + xx];
            for (int dy = -r; dy <= r; ++dy) {
              const int iy = y + dy;
              if (iy < 0 || iy >= xs.h) continue;
              for (int dx = -r; dx <= r; ++dx) {
                const int ix = xx + dx;
                if (ix < 0 || ix >= xs.w) continue;
                const int ki = (dy + r) * ks.w + dx + r;
                if (gx) gx[iy * xs.w + ix] += go * kk[ki];
                if (gk) gk[ki] += go * p[iy * xs.w + ix];
              }
            }
          }
      }
  });
}

/// Per-channel "valid" filtering with one fixed kernel shared by every channel
/// (no padding: output shrinks by k - 1). Used by the structural-similarity loss.
template <typename T>
Var<T> filter_valid(const Var<T>& x, const Tensor<T>& kernel) {
  const Shape xs = x.shape();
  const int kh = kernel.h(), kw = kernel.w();
  const Shape os{xs.n, xs.c, xs.h - kh + 1, xs.w - kw + 1};
  require_shape(os.h > 0 && os.w > 0, "filter_valid: input smaller than kernel");
  Tensor<T> out(os);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* o = out.plane(n, c);
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx) {
          T acc = 0;
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) acc += kernel[ky * kw + kx] * p[(y + ky) * xs.w + xx + kx];
          o[y * os.w + xx] = acc;
        }
    }
  return make_result<T>(std::move(out), {x}, [kernel](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    Tensor<T>& gx = node.input_grad(0);
    const Shape xs = gx.shape();
    const Shape os = node.value.shape();
    const int kh = kernel.h(), kw = kernel.w();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const T* g = node.grad.plane(n, c);
        T* p = gx.plane(n, c);
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx) {
            const T go = g[y * os.w + xx];
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) p[(y + ky) * xs.w + xx + kx] += go * kernel[ky * kw + kx];
          }
      }
  });
}

/// Running statistics of a batch-norm layer.
template <typename T>
struct BatchNormState {
  Tensor<T>* running_mean = nullptr;
  Tensor<T>* running_var = nullptr;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

/// Batch normalization over (N, H, W) per channel. In training mode the batch
/// statistics normalize and the running statistics are updated; otherwise the
/// running statistics are used.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const BatchNormState<T>& state,
                  bool training) {
  const Shape xs = x.shape();
  require_shape(gamma.shape().c == xs.c && beta.shape().c == xs.c, "batch_norm channel mismatch");
  const size_t hw = xs.plane();
  const size_t m = static_cast<size_t>(xs.n) * hw;
  Tensor<T> out(xs);
  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(xs.c));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(xs.c));
  for (int c = 0; c < xs.c; ++c) {
    T mu, var;
    if (training) {
      T acc = 0;
      for (int n = 0; n < xs.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (size_t i = 0; i < hw; ++i) acc += p[i];
      }
      mu = acc / static_cast<T>(m);
      T sq = 0;
      for (int n = 0; n < xs.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (size_t i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      var = sq / static_cast<T>(m);
      const T unbiased = m > 1 ? sq / static_cast<T>(m - 1) : var;
      (*state.running_mean)[static_cast<size_t>(c)] =
          (T(1) - state.momentum) * (*state.running_mean)[static_cast<size_t>(c)] + state.momentum * mu;
      (*state.running_var)[static_cast<size_t>(c)] =
          (T(1) - state.momentum) * (*state.running_var)[static_cast<size_t>(c)] + state.momentum * unbiased;
    } else {
      mu = (*state.running_mean)[static_cast<size_t>(c)];
      var = (*state.running_var)[static_cast<size_t>(c)];
    }
    (*mean)[static_cast<size_t>(c)] = mu;
    (*inv_std)[static_cast<size_t>(c)] = T(1) / std::sqrt(var + state.eps);
    const T gm = gamma.value()[static_cast<size_t>(c)], bt = beta.value()[static_cast<size_t>(c)];
    for (int n = 0; n < xs.n; ++n) {
      const T* p = x.value().plane(n, c);
      T* o = out.plane(n, c);
      for (size_t i = 0; i < hw; ++i) o[i] = (p[i] - mu) * (*inv_std)[static_cast<size_t>(c)] * gm + bt;
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [mean, inv_std, training](Node<T>& node) {
    const Tensor<T>& xv = node.input_value(0);
    const Tensor<T>& gv = node.input_value(1);
    const Shape xs = xv.shape();
    const size_t hw = xs.plane();
    const T m = static_cast<T>(static_cast<size_t>(xs.n) * hw);
    for (int c = 0; c < xs.c; ++c) {
      const T mu = (*mean)[static_cast<size_t>(c)], is = (*inv_std)[static_cast<size_t>(c)];
      T sum_g = 0, sum_gx = 0;
      for (int n = 0; n < xs.n; ++n) {
        const T* p = xv.plane(n, c);
        const T* g = node.grad.plane(n, c);
        for (size_t i = 0; i < hw; ++i) {
          sum_g += g[i];
          sum_gx += g[i] * (p[i] - mu) * is;
        }
      }
      if (node.input_needs_grad(1)) node.input_grad(1)[static_cast<size_t>(c)] += sum_gx;
      if (node.input_needs_grad(2)) node.input_grad(2)[static_cast<size_t>(c)] += sum_g;
      if (!node.input_needs_grad(0)) continue;
      const T gm = gv[static_cast<size_t>(c)];
      for (int n = 0; n < xs.n; ++n) {
        const T* p = xv.plane(n, c);
        const T* g = node.grad.plane(n, c);
        T* gx = node.input_grad(0).plane(n, c);
        for (size_t i = 0; i < hw; ++i) {
          if (training) {
            const T xhat = (p[i] - mu) * is;
            gx[i] += gm * is * (g[i] - sum_g / m - xhat * sum_gx / m);
          } else {
            gx[i] += gm * is * g[i];
          }
        }
      }
    }
  });
}

}  // namespace mstc
