#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mstc/entropy/factorized_prior.hpp"
#include "mstc/entropy/symbol_model.hpp"
#include "mstc/tensor.hpp"

namespace mstc {

/// Optional per-position predicate over a latent; an empty selector codes everything.
using Selector = std::function<bool(int n, int c, int y, int x)>;

namespace detail {

template <typename T, typename F>
void for_each_selected(const Shape& s, const Selector& select, F&& f) {
  size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x, ++i)
          if (!select || select(n, c, y, x)) f(i, c);
}

}  // namespace detail

/// Codes the integer-valued latent `q` under per-element Gaussians in NCHW
/// order. Returns the bits charged by the quantized model.
template <typename T>
double encode_gaussian(RangeEncoder& enc, const Tensor<T>& q, const Tensor<T>& mu, const Tensor<T>& sigma,
                       const Selector& select = {}) {
  require_shape(q.shape() == mu.shape() && q.shape() == sigma.shape(), "encode_gaussian: shape mismatch");
  double bits = 0;
  detail::for_each_selected<T>(q.shape(), select, [&](size_t i, int) {
    bits += encode_value(enc, GaussianModel(mu[i], sigma[i]), static_cast<int>(q[i]));
  });
  return bits;
}

/// Decodes into the selected positions of `q`; other positions are untouched.
template <typename T>
void decode_gaussian(RangeDecoder& dec, Tensor<T>& q, const Tensor<T>& mu, const Tensor<T>& sigma,
                     const Selector& select = {}) {
  require_shape(q.shape() == mu.shape() && q.shape() == sigma.shape(), "decode_gaussian: shape mismatch");
  detail::for_each_selected<T>(q.shape(), select, [&](size_t i, int) {
    q[i] = static_cast<T>(decode_value(dec, GaussianModel(mu[i], sigma[i])));
  });
}

template <typename T>
double gaussian_model_bits(const Tensor<T>& q, const Tensor<T>& mu, const Tensor<T>& sigma,
                           const Selector& select = {}) {
  double bits = 0;
  detail::for_each_selected<T>(q.shape(), select, [&](size_t i, int) {
    bits += model_bits(GaussianModel(mu[i], sigma[i]), static_cast<int>(q[i]));
  });
  return bits;
}

template <typename T>
double encode_factorized(RangeEncoder& enc, const Tensor<T>& q, const std::vector<TableModel>& tables) {
  require_shape(static_cast<size_t>(q.c()) == tables.size(), "encode_factorized: channel mismatch");
  double bits = 0;
  detail::for_each_selected<T>(q.shape(), {}, [&](size_t i, int c) {
    bits += encode_value(enc, tables[static_cast<size_t>(c)], static_cast<int>(q[i]));
  });
  return bits;
}

template <typename T>
Tensor<T> decode_factorized(RangeDecoder& dec, Shape shape, const std::vector<TableModel>& tables) {
  require_shape(static_cast<size_t>(shape.c) == tables.size(), "decode_factorized: channel mismatch");
  Tensor<T> q(shape);
  detail::for_each_selected<T>(shape, {}, [&](size_t i, int c) {
    q[i] = static_cast<T>(decode_value(dec, tables[static_cast<size_t>(c)]));
  });
  return q;
}

template <typename T>
double factorized_model_bits(const Tensor<T>& q, const std::vector<TableModel>& tables) {
  double bits = 0;
  detail::for_each_selected<T>(q.shape(), {}, [&](size_t i, int c) {
    bits += model_bits(tables[static_cast<size_t>(c)], static_cast<int>(q[i]));
  });
  return bits;
}

}  // namespace mstc
