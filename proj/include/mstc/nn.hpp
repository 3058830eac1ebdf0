#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstc/ops/basic.hpp"
#include "mstc/ops/conv.hpp"

namespace mstc {

/// 64-bit FNV-1a; stable across platforms, used to derive per-parameter seeds.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

enum class Init { zeros, ones, uniform_fan_in };

/// Owns every learnable parameter and persistent buffer of a model, keyed by
/// dotted name. Modules keep Var handles that share storage with the store.
/// Initial values depend only on (seed, name), so two models that share a
/// sub-module name start from identical weights for it.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Var<T> add_parameter(const std::string& name, Shape shape, Init init, int fan_in = 1) {
    Tensor<T> t(shape);
    switch (init) {
      case Init::zeros:
        break;
      case Init::ones:
        t.fill(T(1));
        break;
      case Init::uniform_fan_in: {
        std::mt19937_64 rng(seed_ ^ fnv1a(name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.span()) v = static_cast<T>(dist(rng));
        break;
      }
    }
    return add_parameter(name, std::move(t));
  }

  Var<T> add_parameter(const std::string& name, Tensor<T> value) {
    check_free(name);
    Var<T> v = parameter(std::move(value));
    params_.emplace(name, v);
    return v;
  }

  Var<T> add_buffer(const std::string& name, Shape shape, T fill) {
    check_free(name);
    Var<T> v = constant(Tensor<T>(shape, fill));
    buffers_.emplace(name, v);
    return v;
  }

  const std::map<std::string, Var<T>>& parameters() const { return params_; }
  const std::map<std::string, Var<T>>& buffers() const { return buffers_; }

  Var<T> get(const std::string& name) const {
    if (auto it = params_.find(name); it != params_.end()) return it->second;
    if (auto it = buffers_.find(name); it != buffers_.end()) return it->second;
    throw std::out_of_range("no parameter named " + name);
  }

  void zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& [_, v] : params_) n += v.value().size();
    return n;
  }

  uint64_t seed() const { return seed_; }

 private:
  void check_free(const std::string& name) const {
    if (params_.count(name) || buffers_.count(name))
      throw std::logic_error("duplicate parameter name " + name);
  }

  uint64_t seed_;
  std::map<std::string, Var<T>> params_;
  std::map<std::string, Var<T>> buffers_;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int in, int out, int kernel, int stride = 1,
         bool bias = true)
      : stride_(stride), pad_(kernel / 2) {
    weight_ = store.add_parameter(name + ".weight", Shape{out, in, kernel, kernel}, Init::uniform_fan_in,
                                  in * kernel * kernel);
    if (bias) bias_ = store.add_parameter(name + ".bias", Shape{1, out, 1, 1}, Init::zeros);
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }
  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }

 private:
  Var<T> weight_;
  Var<T> bias_;
  int stride_ = 1;
  int pad_ = 1;
};

/// Fully connected layer acting on [N, F, 1, 1] vectors.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, int in, int out) : conv_(store, name, in, out, 1) {}
  Var<T> operator()(const Var<T>& x) const { return conv_(x); }
  Conv2d<T>& conv() { return conv_; }

 private:
  Conv2d<T> conv_;
};

/// Transposed convolution. Stride 2 uses kernel 3, padding 1, output padding 1
/// (exact doubling); stride 1 keeps the extent.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore<T>& store, const std::string& name, int in, int out, int kernel, int stride)
      : stride_(stride), pad_(kernel / 2), output_pad_(stride - 1) {
    weight_ = store.add_parameter(name + ".weight", Shape{in, out, kernel, kernel}, Init::uniform_fan_in,
                                  in * kernel * kernel / (stride * stride));
    bias_ = store.add_parameter(name + ".bias", Shape{1, out, 1, 1}, Init::zeros);
  }

  Var<T> operator()(const Var<T>& x) const {
    return conv_transpose2d(x, weight_, bias_, stride_, pad_, output_pad_);
  }

 private:
  Var<T> weight_;
  Var<T> bias_;
  int stride_ = 1;
  int pad_ = 1;
  int output_pad_ = 0;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& store, const std::string& name, int channels) {
    gamma_ = store.add_parameter(name + ".gamma", Shape{1, channels, 1, 1}, Init::ones);
    beta_ = store.add_parameter(name + ".beta", Shape{1, channels, 1, 1}, Init::zeros);
    mean_ = store.add_buffer(name + ".running_mean", Shape{1, channels, 1, 1}, T(0));
    var_ = store.add_buffer(name + ".running_var", Shape{1, channels, 1, 1}, T(1));
  }

  /// Training mode normalizes with batch statistics and updates the running
  /// ones (held in the store's buffers); evaluation mode uses the running ones.
  Var<T> operator()(const Var<T>& x, bool training) const {
    Var<T> mean = mean_, var = var_;
    BatchNormState<T> st{&mean.mutable_value(), &var.mutable_value()};
    return batch_norm(x, gamma_, beta_, st, training);
  }

 private:
  Var<T> gamma_, beta_, mean_, var_;
};

/// out = x + conv2(lrelu(conv1(x))); both convs 3x3, channel count preserved.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParamStore<T>& store, const std::string& name, int channels)
      : conv1_(store, name + ".conv1", channels, channels, 3), conv2_(store, name + ".conv2", channels, channels, 3) {}

  Var<T> residual(const Var<T>& x) const { return conv2_(leaky_relu(conv1_(x))); }
  Var<T> operator()(const Var<T>& x) const { return add(x, residual(x)); }

  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }

 private:
  Conv2d<T> conv1_, conv2_;
};

}  // namespace mstc
