#pragma once

#include <string>

#include "mstc/model/hyperprior.hpp"
#include "mstc/nn.hpp"
#include "mstc/ops/deform.hpp"

namespace mstc {

/// Motion codec: the motion field is the codec input and its reconstruction
/// the output, both with C_m channels.
template <typename T>
using MotionCodec = HyperpriorCodec<T>;

template <typename T>
MotionCodec<T> make_motion_codec(ParamStore<T>& store, const std::string& name, int motion_channels, int latent,
                                 int hyper) {
  return MotionCodec<T>(store, name, motion_channels, motion_channels, latent, hyper, motion_channels);
}

template <typename T>
struct DeformParams {
  Var<T> offsets;  // [N, 2*G*9, H, W]
  Var<T> masks;    // [N, G*9, H, W], in [0, 1]
};

/// Deformable warping of reference features by a decoded motion field,
/// followed by residual fusion with the reference.
template <typename T>
class MotionCompensation {
 public:
  MotionCompensation() = default;
  MotionCompensation(ParamStore<T>& store, const std::string& name, int motion_channels, int feature_channels,
                     int groups)
      : groups_(groups) {
    require_shape(feature_channels % groups == 0, "motion compensation: channels not divisible by groups");
    const int taps = groups * 9;
    offset_mask_weight_ =
        store.add_parameter(name + ".offset_mask.weight", Shape{3 * taps, motion_channels, 3, 3}, Init::zeros);
    offset_mask_bias_ = store.add_parameter(name + ".offset_mask.bias", Shape{1, 3 * taps, 1, 1}, Init::zeros);
    dcn_weight_ = store.add_parameter(name + ".dcn.weight", Shape{feature_channels, feature_channels, 3, 3},
                                      Init::uniform_fan_in, feature_channels * 9);
    dcn_bias_ = store.add_parameter(name + ".dcn.bias", Shape{1, feature_channels, 1, 1}, Init::zeros);
    fuse1_ = Conv2d<T>(store, name + ".fuse1", 2 * feature_channels, feature_channels, 3);
    fuse2_ = Conv2d<T>(store, name + ".fuse2", feature_channels, feature_channels, 3);
  }

  DeformParams<T> offsets_and_masks(const Var<T>& v_hat) const {
    const Var<T> raw = conv2d(v_hat, offset_mask_weight_, offset_mask_bias_, 1, 1);
    const int taps = groups_ * 9;
    return {slice_channels(raw, 0, 2 * taps), sigmoid(slice_channels(raw, 2 * taps, taps))};
  }

  Var<T> warp(const DeformParams<T>& p, const Var<T>& f_ref) const {
    return deform_conv2d(f_ref, p.offsets, p.masks, dcn_weight_, dcn_bias_, groups_);
  }

  /// F_bar = warped + Conv3x3(LeakyReLU(Conv3x3(concat(warped, reference)))).
  Var<T> fuse(const Var<T>& warped, const Var<T>& f_ref) const {
    require_shape(warped.shape() == f_ref.shape(), "fuse: " + warped.shape().str() + " vs " + f_ref.shape().str());
    return add(warped, fuse2_(leaky_relu(fuse1_(concat_channels<T>({warped, f_ref})))));
  }

  Var<T> operator()(const Var<T>& v_hat, const Var<T>& f_ref) const {
    return fuse(warp(offsets_and_masks(v_hat), f_ref), f_ref);
  }

  int groups() const { return groups_; }
  Var<T>& offset_mask_weight() { return offset_mask_weight_; }
  Var<T>& offset_mask_bias() { return offset_mask_bias_; }
  Var<T>& dcn_weight() { return dcn_weight_; }
  Conv2d<T>& fuse1() { return fuse1_; }
  Conv2d<T>& fuse2() { return fuse2_; }

 private:
  int groups_ = 1;
  Var<T> offset_mask_weight_, offset_mask_bias_;
  Var<T> dcn_weight_, dcn_bias_;
  Conv2d<T> fuse1_, fuse2_;
};

}  // namespace mstc
