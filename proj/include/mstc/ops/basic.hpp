#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "mstc/autograd.hpp"

namespace mstc {

inline constexpr double kDefaultLeakySlope = 0.1;

namespace detail {

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F f, D dydx) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result<T>(std::move(out), {x}, [dydx](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    const Tensor<T>& xv = node.input_value(0);
    Tensor<T>& gx = node.input_grad(0);
    for (size_t i = 0; i < xv.size(); ++i) gx[i] += node.grad[i] * dydx(xv[i], node.value[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

template <typename T>
Var<T> parameter(Tensor<T> t) {
  return Var<T>(std::move(t), true);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_shape(a.shape() == b.shape(), "add: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& node) {
    if (node.input_needs_grad(0)) node.input_grad(0) += node.grad;
    if (node.input_needs_grad(1)) node.input_grad(1) += node.grad;
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_shape(a.shape() == b.shape(), "sub: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& node) {
    if (node.input_needs_grad(0)) node.input_grad(0) += node.grad;
    if (node.input_needs_grad(1)) {
      Tensor<T>& g = node.input_grad(1);
      for (size_t i = 0; i < g.size(); ++i) g[i] -= node.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_shape(a.shape() == b.shape(), "mul: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& node) {
    const Tensor<T>& av = node.input_value(0);
    const Tensor<T>& bv = node.input_value(1);
    if (node.input_needs_grad(0)) {
      Tensor<T>& g = node.input_grad(0);
      for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * bv[i];
    }
    if (node.input_needs_grad(1)) {
      Tensor<T>& g = node.input_grad(1);
      for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  require_shape(a.shape() == b.shape(), "div: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& node) {
    const Tensor<T>& bv = node.input_value(1);
    if (node.input_needs_grad(0)) {
      Tensor<T>& g = node.input_grad(0);
      for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] / bv[i];
    }
    if (node.input_needs_grad(1)) {
      Tensor<T>& g = node.input_grad(1);
      for (size_t i = 0; i < g.size(); ++i) g[i] -= node.grad[i] * node.value[i] / bv[i];
    }
  });
}

/// x[n,c,h,w] * s[n,c] where s has shape [N,C,1,1] (or [1,C,1,1], broadcast over n).
template <typename T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& s) {
  const Shape xs = x.shape();
  const Shape ss = s.shape();
  require_shape(ss.c == xs.c && ss.h == 1 && ss.w == 1 && (ss.n == xs.n || ss.n == 1),
                "mul_channel: " + xs.str() + " by " + ss.str());
  Tensor<T> out(xs);
  const size_t hw = xs.plane();
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T k = s.value()[static_cast<size_t>(ss.n == 1 ? 0 : n) * ss.c + c];
      const T* src = x.value().plane(n, c);
      T* dst = out.plane(n, c);
      for (size_t i = 0; i < hw; ++i) dst[i] = src[i] * k;
    }
  return make_result<T>(std::move(out), {x, s}, [](Node<T>& node) {
    const Tensor<T>& xv = node.input_value(0);
    const Tensor<T>& sv = node.input_value(1);
    const Shape xs = xv.shape();
    const Shape ss = sv.shape();
    const size_t hw = xs.plane();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const size_t si = static_cast<size_t>(ss.n == 1 ? 0 : n) * ss.c + c;
        const T* g = node.grad.plane(n, c);
        if (node.input_needs_grad(0)) {
          T* gx = node.input_grad(0).plane(n, c);
          for (size_t i = 0; i < hw; ++i) gx[i] += g[i] * sv[si];
        }
        if (node.input_needs_grad(1)) {
          const T* xp = xv.plane(n, c);
          T acc = 0;
          for (size_t i = 0; i < hw; ++i) acc += g[i] * xp[i];
          node.input_grad(1)[si] += acc;
        }
      }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T k) {
  return detail::unary<T>(x, [k](T v) { return v * k; }, [k](T, T) { return k; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T k) {
  return detail::unary<T>(x, [k](T v) { return v + k; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(kDefaultLeakySlope)) {
  return detail::unary<T>(
      x, [slope](T v) { return v > 0 ? v : v * slope; },
      [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
T sigmoid_scalar(T v) {
  return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <typename T>
T softplus_scalar(T v) {
  return v > T(30) ? v : std::log1p(std::exp(v));
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return softplus_scalar(v); }, [](T v, T) { return sigmoid_scalar(v); });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

/// x^e for x > 0; zero (with zero gradient) elsewhere.
template <typename T>
Var<T> pow_scalar(const Var<T>& x, T e) {
  return detail::unary<T>(
      x, [e](T v) { return v > 0 ? std::pow(v, e) : T(0); },
      [e](T v, T) { return v > 0 ? e * std::pow(v, e - T(1)) : T(0); });
}

/// Rounds in the forward pass, identity gradient in the backward pass.
template <typename T>
Var<T> straight_through_round(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return std::round(v); }, [](T, T) { return T(1); });
}

inline bool& exact_bound_gradient_flag() {
  thread_local bool exact = false;
  return exact;
}

/// Makes lower_bound use the true derivative of max(x, bound) while alive.
/// Finite-difference checks need it; training keeps the recovering surrogate.
class ExactBoundGradient {
 public:
  ExactBoundGradient() : prev_(exact_bound_gradient_flag()) { exact_bound_gradient_flag() = true; }
  ~ExactBoundGradient() { exact_bound_gradient_flag() = prev_; }
  ExactBoundGradient(const ExactBoundGradient&) = delete;
  ExactBoundGradient& operator=(const ExactBoundGradient&) = delete;

 private:
  bool prev_;
};

/// max(x, bound) whose gradient also passes where x < bound if it would push x
/// upwards, so clamped values can recover during training.
template <typename T>
Var<T> lower_bound(const Var<T>& x, T bound) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = std::max(xv[i], bound);
  const bool exact = exact_bound_gradient_flag();
  return make_result<T>(std::move(out), {x}, [bound, exact](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    const Tensor<T>& xv = node.input_value(0);
    Tensor<T>& gx = node.input_grad(0);
    for (size_t i = 0; i < xv.size(); ++i)
      if (xv[i] >= bound || (!exact && node.grad[i] < 0)) gx[i] += node.grad[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().span()) acc += v;
  return make_result<T>(Tensor<T>(Shape{1, 1, 1, 1}, acc), {x}, [](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    const T g = node.grad[0];
    for (T& v : node.input_grad(0).span()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

/// Mean squared error between equally shaped tensors, as a scalar.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  return mean(square(sub(a, b)));
}

/// Sum of scalars.
template <typename T>
Var<T> add_all(const std::vector<Var<T>>& xs) {
  require_shape(!xs.empty(), "add_all of nothing");
  Var<T> acc = xs.front();
  for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

/// Average over H and W: [N,C,H,W] -> [N,C,1,1].
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T acc = 0;
      for (size_t i = 0; i < hw; ++i) acc += p[i];
      out[static_cast<size_t>(n) * s.c + c] = acc / static_cast<T>(hw);
    }
  return make_result<T>(std::move(out), {x}, [](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    Tensor<T>& gx = node.input_grad(0);
    const Shape s = gx.shape();
    const size_t hw = s.plane();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T g = node.grad[static_cast<size_t>(n) * s.c + c] / static_cast<T>(hw);
        T* p = gx.plane(n, c);
        for (size_t i = 0; i < hw; ++i) p[i] += g;
      }
  });
}

/// 2x2 average pooling with stride 2 (odd trailing rows/cols are dropped).
template <typename T>
Var<T> avg_pool2x2(const Var<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  require_shape(os.h > 0 && os.w > 0, "avg_pool2x2 on " + s.str());
  Tensor<T> out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* o = out.plane(n, c);
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx) {
          const int sy = 2 * y, sx = 2 * xx;
          o[y * os.w + xx] = T(0.25) * (p[sy * s.w + sx] + p[sy * s.w + sx + 1] +
                                        p[(sy + 1) * s.w + sx] + p[(sy + 1) * s.w + sx + 1]);
        }
    }
  return make_result<T>(std::move(out), {x}, [](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    Tensor<T>& gx = node.input_grad(0);
    const Shape s = gx.shape();
    const Shape os = node.value.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* g = node.grad.plane(n, c);
        T* p = gx.plane(n, c);
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx) {
            const T v = T(0.25) * g[y * os.w + xx];
            const int sy = 2 * y, sx = 2 * xx;
            p[sy * s.w + sx] += v;
            p[sy * s.w + sx + 1] += v;
            p[(sy + 1) * s.w + sx] += v;
            p[(sy + 1) * s.w + sx + 1] += v;
          }
      }
  });
}

namespace detail {

// Source taps of 2x bilinear upsampling with half-pixel centers (align_corners = false).
struct UpsampleTap {
  int i0;
  int i1;
  double frac;
};

inline std::vector<UpsampleTap> upsample_taps(int in, int out) {
  std::vector<UpsampleTap> taps(static_cast<size_t>(out));
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace detail

/// Bilinear x2 upsampling, half-pixel centers.
template <typename T>
Var<T> upsample_bilinear2x(const Var<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  const auto ty = detail::upsample_taps(s.h, os.h);
  const auto tx = detail::upsample_taps(s.w, os.w);
  Tensor<T> out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* o = out.plane(n, c);
      for (int y = 0; y < os.h; ++y) {
        const auto& a = ty[static_cast<size_t>(y)];
        const T fy = static_cast<T>(a.frac);
        for (int xx = 0; xx < os.w; ++xx) {
          const auto& b = tx[static_cast<size_t>(xx)];
          const T fx = static_cast<T>(b.frac);
          const T top = p[a.i0 * s.w + b.i0] * (T(1) - fx) + p[a.i0 * s.w + b.i1] * fx;
          const T bot = p[a.i1 * s.w + b.i0] * (T(1) - fx) + p[a.i1 * s.w + b.i1] * fx;
          o[y * os.w + xx] = top * (T(1) - fy) + bot * fy;
        }
      }
    }
  return make_result<T>(std::move(out), {x}, [ty, tx](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    Tensor<T>& gx = node.input_grad(0);
    const Shape s = gx.shape();
    const Shape os = node.value.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* g = node.grad.plane(n, c);
        T* p = gx.plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          const auto& a = ty[static_cast<size_t>(y)];
          const T fy = static_cast<T>(a.frac);
          for (int xx = 0; xx < os.w; ++xx) {
            const auto& b = tx[static_cast<size_t>(xx)];
            const T fx = static_cast<T>(b.frac);
            const T v = g[y * os.w + xx];
            p[a.i0 * s.w + b.i0] += v * (T(1) - fy) * (T(1) - fx);
            p[a.i0 * s.w + b.i1] += v * (T(1) - fy) * fx;
            p[a.i1 * s.w + b.i0] += v * fy * (T(1) - fx);
            p[a.i1 * s.w + b.i1] += v * fy * fx;
          }
        }
      }
  });
}

/// Concatenation along channels; all inputs share N, H, W.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  require_shape(!xs.empty(), "concat of nothing");
  const Shape s0 = xs.front().shape();
  int channels = 0;
  for (const auto& x : xs) {
    const Shape s = x.shape();
    require_shape(s.n == s0.n && s.h == s0.h && s.w == s0.w,
                  "concat: " + s.str() + " vs " + s0.str());
    channels += s.c;
  }
  const Shape os{s0.n, channels, s0.h, s0.w};
  Tensor<T> out(os);
  const size_t hw = os.plane();
  for (int n = 0; n < os.n; ++n) {
    int c0 = 0;
    for (const auto& x : xs) {
      const int cs = x.shape().c;
      std::copy_n(x.value().plane(n, 0), cs * hw, out.plane(n, c0));
      c0 += cs;
    }
  }
  return make_result<T>(std::move(out), xs, [](Node<T>& node) {
    const Shape os = node.value.shape();
    const size_t hw = os.plane();
    int c0 = 0;
    for (size_t i = 0; i < node.inputs.size(); ++i) {
      const int cs = node.inputs[i]->value.shape().c;
      if (node.input_needs_grad(i)) {
        Tensor<T>& g = node.input_grad(i);
        for (int n = 0; n < os.n; ++n) {
          const T* src = node.grad.plane(n, c0);
          T* dst = g.plane(n, 0);
          for (size_t k = 0; k < cs * hw; ++k) dst[k] += src[k];
        }
      }
      c0 += cs;
    }
  });
}

/// Channels [begin, begin + count).
template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape s = x.shape();
  require_shape(begin >= 0 && count > 0 && begin + count <= s.c,
                "slice_channels out of range on " + s.str());
  const Shape os{s.n, count, s.h, s.w};
  Tensor<T> out(os);
  const size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n) std::copy_n(x.value().plane(n, begin), count * hw, out.plane(n, 0));
  return make_result<T>(std::move(out), {x}, [begin](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    Tensor<T>& g = node.input_grad(0);
    const Shape os = node.value.shape();
    const size_t len = static_cast<size_t>(os.c) * os.plane();
    for (int n = 0; n < os.n; ++n) {
      const T* src = node.grad.plane(n, 0);
      T* dst = g.plane(n, begin);
      for (size_t k = 0; k < len; ++k) dst[k] += src[k];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Tensor<T> out = x.value().reshaped(s);
  return make_result<T>(std::move(out), {x}, [](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    Tensor<T>& g = node.input_grad(0);
    for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
  });
}

/// Splits the batch: sample n of x as a [1,C,H,W] var.
template <typename T>
Var<T> select_batch(const Var<T>& x, int n) {
  const Shape s = x.shape();
  require_shape(n >= 0 && n < s.n, "select_batch out of range");
  const Shape os{1, s.c, s.h, s.w};
  Tensor<T> out(os);
  std::copy_n(x.value().plane(n, 0), os.numel(), out.data());
  return make_result<T>(std::move(out), {x}, [n](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    T* dst = node.input_grad(0).plane(n, 0);
    for (size_t k = 0; k < node.grad.size(); ++k) dst[k] += node.grad[k];
  });
}

}  // namespace mstc
