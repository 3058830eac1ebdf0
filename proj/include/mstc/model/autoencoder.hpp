#pragma once

#include <array>
#include <string>

#include "mstc/nn.hpp"

namespace mstc {

/// Three-level feature pyramid: full, 1/2 and 1/4 resolution.
template <typename T>
using FeaturePyramid = std::array<Var<T>, 3>;

/// Pixel -> features. Level 0 keeps the input resolution; levels 1 and 2 each
/// halve it with a stride-2 conv followed by a residual block.
template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(ParamStore<T>& store, const std::string& name, int channels)
      : conv_in_(store, name + ".conv_in", 3, channels, 3),
        res0_(store, name + ".res0", channels),
        down1_(store, name + ".down1", channels, channels, 3, 2),
        res1_(store, name + ".res1", channels),
        down2_(store, name + ".down2", channels, channels, 3, 2),
        res2_(store, name + ".res2", channels) {}

  /// Level-0 features only (what the decoder needs from a reference frame).
  Var<T> level0(const Var<T>& x) const {
    require_shape(x.shape().c == 3, "feature extractor expects RGB input, got " + x.shape().str());
    return res0_(conv_in_(x));
  }

  FeaturePyramid<T> operator()(const Var<T>& x) const {
    require_shape(x.shape().h % 4 == 0 && x.shape().w % 4 == 0,
                  "feature extractor needs dims divisible by 4, got " + x.shape().str());
    FeaturePyramid<T> p;
    p[0] = level0(x);
    p[1] = res1_(down1_(p[0]));
    p[2] = res2_(down2_(p[1]));
    return p;
  }

 private:
  Conv2d<T> conv_in_;
  ResBlock<T> res0_;
  Conv2d<T> down1_;
  ResBlock<T> res1_;
  Conv2d<T> down2_;
  ResBlock<T> res2_;
};

/// Features -> pixels: three residual blocks then a stride-1 transposed conv to RGB.
/// Output is not clamped; callers clamp at evaluation time.
template <typename T>
class Reconstructor {
 public:
  Reconstructor() = default;
  Reconstructor(ParamStore<T>& store, const std::string& name, int channels)
      : res_{ResBlock<T>(store, name + ".res0", channels), ResBlock<T>(store, name + ".res1", channels),
             ResBlock<T>(store, name + ".res2", channels)},
        out_(store, name + ".deconv", channels, 3, 3, 1) {}

  Var<T> operator()(const Var<T>& f) const {
    for (T v : f.value().span())
      if (!std::isfinite(static_cast<double>(v))) throw std::domain_error("reconstructor: non-finite feature");
    Var<T> h = f;
    for (const auto& r : res_) h = r(h);
    return out_(h);
  }

 private:
  std::array<ResBlock<T>, 3> res_;
  ConvTranspose2d<T> out_;
};

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], T(0), T(1));
  return out;
}

}  // namespace mstc
