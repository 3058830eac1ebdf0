#pragma once

#include <string>
#include <vector>

#include "mstc/nn.hpp"

namespace mstc {

/// Stride-16 analysis: four stride-2 convs with a residual block after each of the first three.
template <typename T>
class Analysis16 {
 public:
  Analysis16() = default;
  Analysis16(ParamStore<T>& store, const std::string& name, int in, int mid, int out) {
    for (int i = 0; i < 4; ++i) {
      const std::string s = std::to_string(i);
      convs_.emplace_back(store, name + ".down" + s, i == 0 ? in : mid, i == 3 ? out : mid, 3, 2);
      if (i < 3) res_.emplace_back(store, name + ".res" + s, mid);
    }
  }

  Var<T> operator()(const Var<T>& x) const {
    require_shape(x.shape().h % 16 == 0 && x.shape().w % 16 == 0, "stride-16 analysis needs dims divisible by 16, got " + x.shape().str());
    Var<T> h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i](h);
      if (i < res_.size()) h = res_[i](h);
    }
    return h;
  }

 private:
  std::vector<Conv2d<T>> convs_;
  std::vector<ResBlock<T>> res_;
};

/// Mirror of Analysis16 built from stride-2 transposed convs.
template <typename T>
class Synthesis16 {
 public:
  Synthesis16() = default;
  Synthesis16(ParamStore<T>& store, const std::string& name, int in, int mid, int out) {
    for (int i = 0; i < 4; ++i) {
      const std::string s = std::to_string(i);
      convs_.emplace_back(store, name + ".up" + s, i == 0 ? in : mid, i == 3 ? out : mid, 3, 2);
      if (i < 3) res_.emplace_back(store, name + ".res" + s, mid);
    }
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i](h);
      if (i < res_.size()) h = res_[i](h);
    }
    return h;
  }

 private:
  std::vector<ConvTranspose2d<T>> convs_;
  std::vector<ResBlock<T>> res_;
};

/// Hyper analysis: Conv3x3 -> LReLU -> Conv s2 -> LReLU -> Conv s2 (stride 4 overall).
template <typename T>
class HyperAnalysis {
 public:
  HyperAnalysis() = default;
  HyperAnalysis(ParamStore<T>& store, const std::string& name, int in, int out)
      : c1_(store, name + ".conv1", in, out, 3), c2_(store, name + ".conv2", out, out, 3, 2),
        c3_(store, name + ".conv3", out, out, 3, 2) {}

  Var<T> operator()(const Var<T>& x) const { return c3_(leaky_relu(c2_(leaky_relu(c1_(x))))); }

 private:
  Conv2d<T> c1_, c2_, c3_;
};

/// Hyper synthesis: ConvT s2 -> LReLU -> ConvT s2 -> LReLU -> Conv3x3.
template <typename T>
class HyperSynthesis {
 public:
  HyperSynthesis() = default;
  HyperSynthesis(ParamStore<T>& store, const std::string& name, int in, int out)
      : d1_(store, name + ".up1", in, in, 3, 2), d2_(store, name + ".up2", in, in, 3, 2),
        c3_(store, name + ".conv3", in, out, 3) {}

  Var<T> operator()(const Var<T>& x) const { return c3_(leaky_relu(d2_(leaky_relu(d1_(x))))); }

 private:
  ConvTranspose2d<T> d1_, d2_;
  Conv2d<T> c3_;
};

/// Gaussian entropy parameters of a latent.
template <typename T>
struct GaussianParams {
  Var<T> mu;
  Var<T> sigma;
};

/// Splits a [N, 2C, H, W] tensor into (mean, scale) with the scale floored at sigma_min.
template <typename T>
GaussianParams<T> split_gaussian(const Var<T>& raw) {
  const int c = raw.shape().c / 2;
  return {slice_channels(raw, 0, c), scale_from_raw(slice_channels(raw, c, c))};
}

}  // namespace mstc
