#pragma once

#include <array>
#include <string>

#include "mstc/model/autoencoder.hpp"
#include "mstc/nn.hpp"
#include "mstc/ops/basic.hpp"
#include "mstc/ops/conv.hpp"

namespace mstc {

/// Conv3x3 -> LeakyReLU -> Conv3x3 over concat(current, reference) features.
template <typename T>
class InitialMotion {
 public:
  InitialMotion() = default;
  InitialMotion(ParamStore<T>& store, const std::string& name, int feature_channels, int motion_channels)
      : conv1_(store, name + ".conv1", 2 * feature_channels, motion_channels, 3),
        conv2_(store, name + ".conv2", motion_channels, motion_channels, 3) {}

  Var<T> operator()(const Var<T>& cur, const Var<T>& ref) const {
    require_shape(cur.shape() == ref.shape(), "initial motion: " + cur.shape().str() + " vs " + ref.shape().str());
    return conv2_(leaky_relu(conv1_(concat_channels<T>({cur, ref}))));
  }

 private:
  Conv2d<T> conv1_, conv2_;
};

/// Coarse motion -> global descriptor of length D: bilinear x2 upsampling,
/// two conv + batch-norm + LeakyReLU stages, global average pooling and a
/// fully connected layer.
template <typename T>
class MotionAwareEncoder {
 public:
  MotionAwareEncoder() = default;
  MotionAwareEncoder(ParamStore<T>& store, const std::string& name, int motion_channels, int dim)
      : conv1_(store, name + ".conv1", motion_channels, motion_channels, 3),
        bn1_(store, name + ".bn1", motion_channels),
        conv2_(store, name + ".conv2", motion_channels, motion_channels, 3),
        bn2_(store, name + ".bn2", motion_channels),
        fc_(store, name + ".fc", motion_channels, dim) {}

  Var<T> operator()(const Var<T>& v_coarse, bool training) const {
    Var<T> h = upsample_bilinear2x(v_coarse);
    h = leaky_relu(bn1_(conv1_(h), training));
    h = leaky_relu(bn2_(conv2_(h), training));
    return fc_(global_avg_pool(h));
  }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  Linear<T> fc_;
};

/// Linear -> LeakyReLU -> Linear to C_m * 9 values, read as per-channel 3x3 kernels.
template <typename T>
class KernelPredictor {
 public:
  KernelPredictor() = default;
  KernelPredictor(ParamStore<T>& store, const std::string& name, int dim, int motion_channels)
      : fc1_(store, name + ".fc1", dim, dim), fc2_(store, name + ".fc2", dim, motion_channels * 9),
        channels_(motion_channels) {}

  Var<T> operator()(const Var<T>& dv) const {
    Var<T> k = fc2_(leaky_relu(fc1_(dv)));
    return reshape(k, Shape{dv.shape().n, channels_, 3, 3});
  }

  Linear<T>& fc1() { return fc1_; }

 private:
  Linear<T> fc1_, fc2_;
  int channels_ = 0;
};

/// ReLU(Conv1x1(LeakyReLU(Conv1x1(dv)))): one nonnegative scale per motion channel.
template <typename T>
class CoefficientPredictor {
 public:
  CoefficientPredictor() = default;
  CoefficientPredictor(ParamStore<T>& store, const std::string& name, int dim, int motion_channels)
      : conv1_(store, name + ".conv1", dim, dim, 1), conv2_(store, name + ".conv2", dim, motion_channels, 1) {}

  Var<T> operator()(const Var<T>& dv) const { return relu(conv2_(leaky_relu(conv1_(dv)))); }

 private:
  Conv2d<T> conv1_, conv2_;
};

/// Fuses a fine motion field with the next coarser one:
///   dv      = MAE(v_coarse)
///   v_tilde = coefficients(dv) * v_fine + Conv1x1(LeakyReLU(Conv_kernels(dv)(v_fine)))
///   out     = LeakyReLU(Conv3x3(LeakyReLU(v_tilde)))
template <typename T>
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(ParamStore<T>& store, const std::string& name, int motion_channels, int dim)
      : encoder_(store, name + ".mae", motion_channels, dim),
        kernels_(store, name + ".kernels", dim, motion_channels),
        coefficients_(store, name + ".coefficients", dim, motion_channels),
        pointwise_(store, name + ".pointwise", motion_channels, motion_channels, 1),
        out_(store, name + ".out", motion_channels, motion_channels, 3) {}

  struct Parts {
    Var<T> dv, kernels, coefficients, v_tilde, out;
  };

  Parts run(const Var<T>& v_fine, const Var<T>& v_coarse, bool training) const {
    const Shape f = v_fine.shape(), c = v_coarse.shape();
    require_shape(f.n == c.n && f.c == c.c && f.h == 2 * c.h && f.w == 2 * c.w,
                  "fusion block: fine " + f.str() + " coarse " + c.str());
    Parts p;
    p.dv = encoder_(v_coarse, training);
    p.kernels = kernels_(p.dv);
    p.coefficients = coefficients_(p.dv);
    const Var<T> spatial = pointwise_(leaky_relu(depthwise_conv2d(v_fine, p.kernels)));
    p.v_tilde = add(mul_channel(v_fine, p.coefficients), spatial);
    p.out = leaky_relu(out_(leaky_relu(p.v_tilde)));
    return p;
  }

  Var<T> operator()(const Var<T>& v_fine, const Var<T>& v_coarse, bool training) const {
    return run(v_fine, v_coarse, training).out;
  }

  MotionAwareEncoder<T>& encoder() { return encoder_; }
  KernelPredictor<T>& kernel_predictor() { return kernels_; }
  CoefficientPredictor<T>& coefficient_predictor() { return coefficients_; }
  Conv2d<T>& pointwise() { return pointwise_; }
  Conv2d<T>& out_conv() { return out_; }

 private:
  MotionAwareEncoder<T> encoder_;
  KernelPredictor<T> kernels_;
  CoefficientPredictor<T> coefficients_;
  Conv2d<T> pointwise_;
  Conv2d<T> out_;
};

/// Coarse-to-fine motion estimation over two feature pyramids. With
/// `multiscale` off only the full-scale initial motion is used.
template <typename T>
class MotionEstimator {
 public:
  MotionEstimator() = default;
  MotionEstimator(ParamStore<T>& store, const std::string& name, int feature_channels, int motion_channels, int dim,
                  bool multiscale)
      : initial_{InitialMotion<T>(store, name + ".initial0", feature_channels, motion_channels),
                 InitialMotion<T>(store, name + ".initial1", feature_channels, motion_channels),
                 InitialMotion<T>(store, name + ".initial2", feature_channels, motion_channels)},
        fuse1_(store, name + ".fuse1", motion_channels, dim),
        fuse0_(store, name + ".fuse0", motion_channels, dim),
        refine_(store, name + ".refine", motion_channels, motion_channels, 3),
        multiscale_(multiscale) {}

  std::array<Var<T>, 3> initial_motion(const FeaturePyramid<T>& cur, const FeaturePyramid<T>& ref) const {
    return {initial_[0](cur[0], ref[0]), initial_[1](cur[1], ref[1]), initial_[2](cur[2], ref[2])};
  }

  Var<T> operator()(const FeaturePyramid<T>& cur, const FeaturePyramid<T>& ref, bool training) const {
    if (!multiscale_) return initial_[0](cur[0], ref[0]);
    const auto v = initial_motion(cur, ref);
    const Var<T> v1 = fuse1_(v[1], v[2], training);
    const Var<T> v0 = fuse0_(v[0], v1, training);
    return add(v[0], refine_(leaky_relu(v0)));
  }

  bool multiscale() const { return multiscale_; }
  FusionBlock<T>& fuse0() { return fuse0_; }
  FusionBlock<T>& fuse1() { return fuse1_; }
  Conv2d<T>& refine() { return refine_; }

 private:
  std::array<InitialMotion<T>, 3> initial_;
  FusionBlock<T> fuse1_;
  FusionBlock<T> fuse0_;
  Conv2d<T> refine_;
  bool multiscale_ = true;
};

}  // namespace mstc
