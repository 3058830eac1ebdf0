#pragma once

#include <memory>
#include <random>
#include <string>

#include "mstc/config.hpp"
#include "mstc/model/autoencoder.hpp"
#include "mstc/model/contextual_codec.hpp"
#include "mstc/model/hyperprior.hpp"
#include "mstc/model/motion_comp.hpp"
#include "mstc/model/ms_mam.hpp"

namespace mstc {

/// Estimated rate terms of one coded frame, in bits.
template <typename T>
struct FrameRates {
  Var<T> motion, motion_hyper, context, context_hyper;  // P frames
  Var<T> intra, intra_hyper;                            // I frames

  Var<T> total() const {
    std::vector<Var<T>> parts;
    for (const Var<T>* v : {&motion, &motion_hyper, &context, &context_hyper, &intra, &intra_hyper})
      if (v->defined()) parts.push_back(*v);
    return add_all(parts);
  }
};

template <typename T>
struct FrameForward {
  Var<T> x_hat;  // unclamped reconstruction
  FrameRates<T> rates;
};

/// Every learned component of the codec, registered in one parameter store.
template <typename T>
class VideoModel {
 public:
  explicit VideoModel(const CodecConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
    cfg_.validate();
    const int cf = cfg_.feature_channels, cm = cfg_.motion_channels;
    extractor_ = FeatureExtractor<T>(store_, "extractor", cf);
    motion_ = MotionEstimator<T>(store_, "motion_estimation", cf, cm, cfg_.motion_feature_dim, cfg_.multiscale_motion);
    motion_codec_ = make_motion_codec(store_, "motion_codec", cm, cfg_.motion_latent_channels, cfg_.motion_hyper_channels);
    compensation_ = MotionCompensation<T>(store_, "compensation", cm, cf, cfg_.deform_groups);
    context_ = ContextualCodec<T>(store_, "context", cf, cfg_.context_groups, cfg_.context_hyper_channels);
    reconstructor_ = Reconstructor<T>(store_, "reconstructor", cf);
    intra_ = HyperpriorCodec<T>(store_, "intra", 3, cfg_.intra_channels, cfg_.intra_latent_channels,
                                cfg_.intra_hyper_channels, 3);
  }

  VideoModel(const VideoModel&) = delete;
  VideoModel& operator=(const VideoModel&) = delete;

  const CodecConfig& config() const { return cfg_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }

  const FeatureExtractor<T>& extractor() const { return extractor_; }
  const MotionEstimator<T>& motion_estimator() const { return motion_; }
  const MotionCodec<T>& motion_codec() const { return motion_codec_; }
  const MotionCompensation<T>& compensation() const { return compensation_; }
  const ContextualCodec<T>& context() const { return context_; }
  const Reconstructor<T>& reconstructor() const { return reconstructor_; }
  const HyperpriorCodec<T>& intra() const { return intra_; }
  MotionEstimator<T>& motion_estimator() { return motion_; }
  MotionCompensation<T>& compensation() { return compensation_; }
  ContextualCodec<T>& context() { return context_; }

  /// Differentiable intra frame pass.
  FrameForward<T> intra_forward(const Var<T>& x, QuantMode mode, std::mt19937_64& rng) const {
    auto t = intra_.forward(x, mode, rng);
    FrameForward<T> f;
    f.x_hat = t.out;
    f.rates.intra = t.bits_y;
    f.rates.intra_hyper = t.bits_z;
    return f;
  }

  /// Differentiable inter frame pass: x_ref is the previous reconstruction.
  /// `training` selects batch statistics in the motion-aware encoders.
  FrameForward<T> inter_forward(const Var<T>& x, const Var<T>& x_ref, QuantMode mode, std::mt19937_64& rng,
                                bool training) const {
    require_shape(x.shape() == x_ref.shape(), "inter_forward: " + x.shape().str() + " vs " + x_ref.shape().str());
    const FeaturePyramid<T> cur = extractor_(x), ref = extractor_(x_ref);
    const Var<T> v = motion_(cur, ref, training);
    auto m = motion_codec_.forward(v, mode, rng);
    const Var<T> f_pred = compensation_(m.out, ref[0]);
    auto c = context_.forward(cur[0], f_pred, mode, rng);
    FrameForward<T> f;
    f.x_hat = reconstructor_(c.f_hat);
    f.rates.motion = m.bits_y;
    f.rates.motion_hyper = m.bits_z;
    f.rates.context = c.bits_c;
    f.rates.context_hyper = c.bits_s;
    return f;
  }

 private:
  CodecConfig cfg_;
  ParamStore<T> store_;
  FeatureExtractor<T> extractor_;
  MotionEstimator<T> motion_;
  MotionCodec<T> motion_codec_;
  MotionCompensation<T> compensation_;
  ContextualCodec<T> context_;
  Reconstructor<T> reconstructor_;
  HyperpriorCodec<T> intra_;
};

}  // namespace mstc
