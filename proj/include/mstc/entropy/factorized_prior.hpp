#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mstc/entropy/symbol_model.hpp"
#include "mstc/nn.hpp"

namespace mstc {

/// Per-channel learned density for hyper-latents. Each channel owns a small
/// monotone network mapping x to the logit of its cumulative distribution:
/// layers 1 -> 3 -> 3 -> 3 -> 1 with softplus-positive matrices and tanh
/// gated nonlinearities. Bin mass is cdf(x + 0.5) - cdf(x - 0.5).
template <typename T>
class FactorizedPrior {
 public:
  static constexpr int kLayers = 4;
  static constexpr std::array<int, kLayers + 1> kDims{1, 3, 3, 3, 1};
  /// Tail mass left outside the explicit coding support of each channel.
  static constexpr double kTailMass = 1e-9;

  FactorizedPrior() = default;
  FactorizedPrior(ParamStore<T>& store, const std::string& name, int channels, double init_scale = 10.0)
      : channels_(channels) {
    const double scale = std::pow(init_scale, 1.0 / kLayers);
    std::mt19937_64 rng(store.seed() ^ fnv1a(name));
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    for (int i = 0; i < kLayers; ++i) {
      const int in = kDims[i], out = kDims[i + 1];
      const double init = std::log(std::expm1(1.0 / scale / out));
      matrices_[i] = store.add_parameter(name + ".matrix" + std::to_string(i),
                                         Tensor<T>(Shape{channels, out, in, 1}, static_cast<T>(init)));
      Tensor<T> b(Shape{channels, out, 1, 1});
      for (auto& v : b.span()) v = static_cast<T>(unif(rng));
      biases_[i] = store.add_parameter(name + ".bias" + std::to_string(i), std::move(b));
      if (i + 1 < kLayers)
        factors_[i] = store.add_parameter(name + ".factor" + std::to_string(i), Shape{channels, out, 1, 1}, Init::zeros);
    }
  }

  int channels() const { return channels_; }

  /// Bin likelihood of every element of y ([N, C, H, W]).
  Var<T> likelihood(const Var<T>& y) const {
    require_shape(y.shape().c == channels_, "factorized prior: channels " + y.shape().str());
    const Shape s = y.shape();
    const size_t hw = s.plane();
    Tensor<T> out(s);
    const ParamViews params = views();
    for (int c = 0; c < s.c; ++c) {
      const Channel ch = channel(params, c);
      for (int n = 0; n < s.n; ++n) {
        const T* yp = y.value().plane(n, c);
        T* op = out.plane(n, c);
        for (size_t i = 0; i < hw; ++i) op[i] = static_cast<T>(ch.mass(yp[i]).p);
      }
    }
    std::vector<Var<T>> inputs{y};
    for (int i = 0; i < kLayers; ++i) {
      inputs.push_back(matrices_[i]);
      inputs.push_back(biases_[i]);
      if (i + 1 < kLayers) inputs.push_back(factors_[i]);
    }
    return make_result<T>(std::move(out), std::move(inputs), backward_likelihood);
  }

  /// Coding tables, one per channel, in double precision.
  std::vector<TableModel> tables() const {
    std::vector<TableModel> out;
    out.reserve(static_cast<size_t>(channels_));
    const ParamViews params = views();
    for (int c = 0; c < channels_; ++c) out.push_back(channel(params, c).table());
    return out;
  }

 private:
  struct Forward {
    std::array<std::array<double, 3>, kLayers + 1> h{};  // layer inputs
    std::array<std::array<double, 3>, kLayers> a{};      // pre-activations
    double logit = 0;
  };

  struct Mass {
    double p, g_lower, g_upper;  // mass and its derivative w.r.t. both logits
  };

  // Parameters of one channel, with matrices already passed through softplus.
  struct Channel {
    std::array<std::array<double, 9>, kLayers> w{};
    std::array<std::array<double, 9>, kLayers> raw{};
    std::array<std::array<double, 3>, kLayers> b{};
    std::array<std::array<double, 3>, kLayers> t{};

    void run(double x, Forward& f) const {
      f.h[0][0] = x;
      for (int i = 0; i < kLayers; ++i) {
        const int in = kDims[i], out = kDims[i + 1];
        for (int o = 0; o < out; ++o) {
          double acc = b[i][o];
          for (int k = 0; k < in; ++k) acc += w[i][o * in + k] * f.h[i][k];
          f.a[i][o] = acc;
          f.h[i + 1][o] = i + 1 < kLayers ? acc + t[i][o] * std::tanh(acc) : acc;
        }
      }
      f.logit = f.a[kLayers - 1][0];
    }

    double logit(double x) const {
      Forward f;
      run(x, f);
      return f.logit;
    }

    double cdf(double x) const { return 1.0 / (1.0 + std::exp(-logit(x))); }

    // Mass of the bin around x, computed on the side where the sigmoids are far from 1.
    Mass mass(double x) const {
      const double lo = logit(x - 0.5), hi = logit(x + 0.5);
      const double s = lo + hi > 0 ? -1.0 : 1.0;
      const double su = sig(s * hi), sl = sig(s * lo);
      const double d = su - sl;
      const double sd = d >= 0 ? 1.0 : -1.0;
      return {std::abs(d), -sd * s * sl * (1 - sl), sd * s * su * (1 - su)};
    }

    // Accumulates d(logit)/d(params) * g into the per-channel gradient buffers and returns d(logit)/dx.
    double backprop(const Forward& f, double g, std::array<std::array<double, 9>, kLayers>& gw,
                    std::array<std::array<double, 3>, kLayers>& gb,
                    std::array<std::array<double, 3>, kLayers>& gt) const {
      std::array<double, 3> gh{g, 0, 0};
      for (int i = kLayers - 1; i >= 0; --i) {
        const int in = kDims[i], out = kDims[i + 1];
        std::array<double, 3> ga{};
        for (int o = 0; o < out; ++o) {
          if (i + 1 < kLayers) {
            const double th = std::tanh(f.a[i][o]);
            ga[o] = gh[o] * (1 + t[i][o] * (1 - th * th));
            gt[i][o] += gh[o] * th;
          } else {
            ga[o] = gh[o];
          }
          gb[i][o] += ga[o];
        }
        std::array<double, 3> gprev{};
        for (int o = 0; o < out; ++o)
          for (int k = 0; k < in; ++k) {
            gw[i][o * in + k] += ga[o] * f.h[i][k];
            gprev[k] += w[i][o * in + k] * ga[o];
          }
        gh = gprev;
      }
      return gh[0];
    }

    TableModel table() const {
      // Median and tail quantiles by bisection on the monotone cdf.
      auto solve = [&](double target_logit) {
        double a = kSymbolMin, b = kSymbolMax;
        for (int it = 0; it < 100; ++it) {
          const double mid = 0.5 * (a + b);
          (logit(mid) < target_logit ? a : b) = mid;
        }
        return 0.5 * (a + b);
      };
      const double tail_logit = std::log(kTailMass / (1 - kTailMass));
      const double median = solve(0.0);
      int lo = static_cast<int>(std::floor(solve(tail_logit)));
      int hi = static_cast<int>(std::ceil(solve(-tail_logit)));
      const int m = static_cast<int>(std::round(median));
      lo = std::clamp(lo, m - kMaxHalfSupport, m);
      hi = std::clamp(hi, m, m + kMaxHalfSupport);
      const int count = hi - lo + 1;
      const double base = cdf(lo - 0.5);
      const double tail = base + sig(-logit(hi + 0.5));
      std::vector<double> table(static_cast<size_t>(count) + 2);
      table[1] = tail;
      for (int i = 2; i <= count; ++i) table[static_cast<size_t>(i)] = tail + cdf(lo + i - 1 - 0.5) - base;
      return TableModel(lo, std::move(table));
    }

    static double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }
  };

  struct ParamViews {
    std::array<const Tensor<T>*, kLayers> m{}, b{}, f{};
  };

  ParamViews views() const {
    ParamViews v;
    for (int i = 0; i < kLayers; ++i) {
      v.m[i] = &matrices_[i].value();
      v.b[i] = &biases_[i].value();
      v.f[i] = i + 1 < kLayers ? &factors_[i].value() : nullptr;
    }
    return v;
  }

  // Recovers the parameter tensors from a recorded likelihood node.
  static ParamViews views(const Node<T>& node) {
    ParamViews v;
    size_t slot = 1;
    for (int i = 0; i < kLayers; ++i) {
      v.m[i] = &node.input_value(slot++);
      v.b[i] = &node.input_value(slot++);
      v.f[i] = i + 1 < kLayers ? &node.input_value(slot++) : nullptr;
    }
    return v;
  }

  static Channel channel(const ParamViews& p, int c) {
    Channel ch;
    for (int i = 0; i < kLayers; ++i) {
      const int n = kDims[i] * kDims[i + 1], out = kDims[i + 1];
      const T* m = p.m[i]->data() + static_cast<size_t>(c) * n;
      for (int k = 0; k < n; ++k) {
        ch.raw[i][k] = m[k];
        ch.w[i][k] = softplus_scalar<double>(m[k]);
      }
      const T* b = p.b[i]->data() + static_cast<size_t>(c) * out;
      for (int o = 0; o < out; ++o) ch.b[i][o] = b[o];
      if (p.f[i]) {
        const T* f = p.f[i]->data() + static_cast<size_t>(c) * out;
        for (int o = 0; o < out; ++o) ch.t[i][o] = std::tanh(static_cast<double>(f[o]));
      }
    }
    return ch;
  }

  static void backward_likelihood(Node<T>& node) {
    const Tensor<T>& yv = node.input_value(0);
    const Shape s = yv.shape();
    const size_t hw = s.plane();
    const bool need_y = node.input_needs_grad(0);
    bool need_params = false;
    for (size_t i = 1; i < node.inputs.size(); ++i) need_params = need_params || node.input_needs_grad(i);
    const ParamViews params = views(node);
    for (int c = 0; c < s.c; ++c) {
      const Channel ch = channel(params, c);
      std::array<std::array<double, 9>, kLayers> gw{};
      std::array<std::array<double, 3>, kLayers> gb{}, gt{};
      Forward lo, hi;
      for (int n = 0; n < s.n; ++n) {
        const T* yp = yv.plane(n, c);
        const T* gp = node.grad.plane(n, c);
        T* gy = need_y ? node.input_grad(0).plane(n, c) : nullptr;
        for (size_t i = 0; i < hw; ++i) {
          if (gp[i] == T(0)) continue;
          const double x = yp[i];
          ch.run(x - 0.5, lo);
          ch.run(x + 0.5, hi);
          const Mass m = ch.mass(x);
          const double g_lo = gp[i] * m.g_lower, g_hi = gp[i] * m.g_upper;
          const double dx = ch.backprop(lo, g_lo, gw, gb, gt) + ch.backprop(hi, g_hi, gw, gb, gt);
          if (gy) gy[i] += static_cast<T>(dx);
        }
      }
      if (!need_params) continue;
      size_t slot = 1;
      for (int i = 0; i < kLayers; ++i) {
        const int n = kDims[i] * kDims[i + 1], out = kDims[i + 1];
        if (node.input_needs_grad(slot)) {
          T* g = node.input_grad(slot).data() + static_cast<size_t>(c) * n;
          for (int k = 0; k < n; ++k) g[k] += static_cast<T>(gw[i][k] * Channel::sig(ch.raw[i][k]));
        }
        ++slot;
        if (node.input_needs_grad(slot)) {
          T* g = node.input_grad(slot).data() + static_cast<size_t>(c) * out;
          for (int o = 0; o < out; ++o) g[o] += static_cast<T>(gb[i][o]);
        }
        ++slot;
        if (i + 1 < kLayers) {
          if (node.input_needs_grad(slot)) {
            T* g = node.input_grad(slot).data() + static_cast<size_t>(c) * out;
            for (int o = 0; o < out; ++o) g[o] += static_cast<T>(gt[i][o] * (1 - ch.t[i][o] * ch.t[i][o]));
          }
          ++slot;
        }
      }
    }
  }

  int channels_ = 0;
  std::array<Var<T>, kLayers> matrices_;
  std::array<Var<T>, kLayers> biases_;
  std::array<Var<T>, kLayers> factors_;
};

}  // namespace mstc
