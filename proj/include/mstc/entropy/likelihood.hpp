#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mstc/entropy/symbol_model.hpp"
#include "mstc/ops/basic.hpp"

namespace mstc {

enum class QuantMode { noise, straight_through, round };

/// Round half away from zero, clamped to the coder's symbol range.
inline int quantize_value(double v) {
  const double r = std::round(v);
  return static_cast<int>(std::clamp(r, static_cast<double>(kSymbolMin), static_cast<double>(kSymbolMax)));
}

template <typename T>
Tensor<T> quantize_eval(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(quantize_value(static_cast<double>(x[i])));
  return out;
}

/// Training surrogate for quantization. `noise` adds i.i.d. U(-0.5, 0.5) drawn
/// from `rng`; `straight_through` rounds with an identity gradient; `round`
/// rounds and cuts the gradient.
template <typename T>
Var<T> quantize(const Var<T>& x, QuantMode mode, std::mt19937_64& rng) {
  switch (mode) {
    case QuantMode::noise: {
      std::uniform_real_distribution<double> dist(-0.5, 0.5);
      Tensor<T> u(x.shape());
      for (auto& v : u.span()) v = static_cast<T>(dist(rng));
      return add(x, constant(std::move(u)));
    }
    case QuantMode::straight_through:
      return straight_through_round(x);
    case QuantMode::round:
      break;
  }
  return constant(quantize_eval(x.value()));
}

/// Discretized Gaussian likelihood of y under N(mu, sigma) on unit bins,
/// evaluated on the side of the mean where the tail is smallest.
template <typename T>
Var<T> gaussian_likelihood(const Var<T>& y, const Var<T>& mu, const Var<T>& sigma) {
  require_shape(y.shape() == mu.shape() && y.shape() == sigma.shape(),
                "gaussian_likelihood: " + y.shape().str() + " " + mu.shape().str() + " " + sigma.shape().str());
  Tensor<T> out(y.shape());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(gaussian_mass(y.value()[i], mu.value()[i], sigma.value()[i]));
  return make_result<T>(std::move(out), {y, mu, sigma}, [](Node<T>& node) {
    const Tensor<T>& yv = node.input_value(0);
    const Tensor<T>& mv = node.input_value(1);
    const Tensor<T>& sv = node.input_value(2);
    const double inv_sqrt_2pi = 0.3989422804014327;
    for (size_t i = 0; i < yv.size(); ++i) {
      const double d = static_cast<double>(yv[i]) - mv[i];
      const double v = std::abs(d), s = sv[i];
      const double a = (0.5 - v) / s, b = (-0.5 - v) / s;
      const double pa = inv_sqrt_2pi * std::exp(-0.5 * a * a), pb = inv_sqrt_2pi * std::exp(-0.5 * b * b);
      const double dp_dv = (pb - pa) / s;
      const double dp_ds = (b * pb - a * pa) / s;
      const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      const double g = node.grad[i];
      if (node.input_needs_grad(0)) node.input_grad(0)[i] += static_cast<T>(g * dp_dv * sgn);
      if (node.input_needs_grad(1)) node.input_grad(1)[i] -= static_cast<T>(g * dp_dv * sgn);
      if (node.input_needs_grad(2)) node.input_grad(2)[i] += static_cast<T>(g * dp_ds);
    }
  });
}

/// -sum(log2 p) as a scalar.
template <typename T>
Var<T> neg_log2_sum(const Var<T>& p) {
  double acc = 0;
  for (T v : p.value().span()) acc -= std::log2(static_cast<double>(v));
  return make_result<T>(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc)), {p}, [](Node<T>& node) {
    if (!node.input_needs_grad(0)) return;
    const Tensor<T>& pv = node.input_value(0);
    Tensor<T>& gp = node.input_grad(0);
    const double k = -node.grad[0] / std::log(2.0);
    for (size_t i = 0; i < pv.size(); ++i) gp[i] += static_cast<T>(k / pv[i]);
  });
}

/// Bits of a likelihood tensor with probabilities floored at p_min.
template <typename T>
Var<T> likelihood_bits(const Var<T>& p) {
  return neg_log2_sum(lower_bound(p, static_cast<T>(kProbMin)));
}

/// Scale parameter from a raw network output: softplus then floor at sigma_min.
template <typename T>
Var<T> scale_from_raw(const Var<T>& raw) {
  return lower_bound(softplus(raw), static_cast<T>(kSigmaMin));
}

/// Estimated bits of y under N(mu, sigma).
template <typename T>
Var<T> gaussian_bits(const Var<T>& y, const Var<T>& mu, const Var<T>& sigma) {
  return likelihood_bits(gaussian_likelihood(y, mu, sigma));
}

}  // namespace mstc
