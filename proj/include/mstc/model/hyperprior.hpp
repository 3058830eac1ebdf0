#pragma once

#include <random>
#include <string>

#include "mstc/entropy/factorized_prior.hpp"
#include "mstc/entropy/latent_coding.hpp"
#include "mstc/entropy/likelihood.hpp"
#include "mstc/entropy/segment.hpp"
#include "mstc/model/transforms.hpp"

namespace mstc {

/// Latent grid extents implied by an input of height x width.
struct LatentDims {
  Shape main;
  Shape hyper;
};

inline LatentDims hyperprior_dims(int height, int width, int latent_channels, int hyper_channels) {
  require_shape(height % 64 == 0 && width % 64 == 0,
                "hyperprior codec needs dims divisible by 64, got " + std::to_string(height) + "x" + std::to_string(width));
  return {Shape{1, latent_channels, height / 16, width / 16}, Shape{1, hyper_channels, height / 64, width / 64}};
}

/// Stride-16 analysis/synthesis pair whose latent is coded under a conditional
/// Gaussian predicted from a stride-4 hyper-latent, itself coded under a
/// factorized prior.
template <typename T>
class HyperpriorCodec {
 public:
  struct Train {
    Var<T> y, y_hat, z_hat, out;
    GaussianParams<T> params;
    Var<T> bits_y, bits_z;
  };

  struct Coded {
    Segment hyper, main;
    Tensor<T> y_hat, z_hat;
    Var<T> out;
  };

  HyperpriorCodec() = default;
  HyperpriorCodec(ParamStore<T>& store, const std::string& name, int in_channels, int mid, int latent, int hyper,
                  int out_channels)
      : analysis_(store, name + ".enc", in_channels, mid, latent),
        synthesis_(store, name + ".dec", latent, mid, out_channels),
        hyper_analysis_(store, name + ".hyper_enc", latent, hyper),
        hyper_synthesis_(store, name + ".hyper_dec", hyper, 2 * latent),
        prior_(store, name + ".prior", hyper),
        latent_(latent),
        hyper_(hyper) {}

  Var<T> analysis(const Var<T>& x) const { return analysis_(x); }
  Var<T> hyper_analysis(const Var<T>& y) const { return hyper_analysis_(y); }
  GaussianParams<T> hyper_synthesis(const Var<T>& z_hat) const { return split_gaussian(hyper_synthesis_(z_hat)); }
  Var<T> synthesis(const Var<T>& y_hat) const { return synthesis_(y_hat); }
  const FactorizedPrior<T>& prior() const { return prior_; }
  int latent_channels() const { return latent_; }
  int hyper_channels() const { return hyper_; }

  Train forward(const Var<T>& x, QuantMode mode, std::mt19937_64& rng) const {
    Train t;
    t.y = analysis(x);
    const Var<T> z = hyper_analysis(t.y);
    t.z_hat = quantize(z, mode, rng);
    t.bits_z = likelihood_bits(prior_.likelihood(t.z_hat));
    t.params = hyper_synthesis(t.z_hat);
    t.y_hat = quantize(t.y, mode, rng);
    t.bits_y = gaussian_bits(t.y_hat, t.params.mu, t.params.sigma);
    t.out = synthesis(t.y_hat);
    return t;
  }

  /// Quantizes and range-codes x. The returned output is the decoder's
  /// reconstruction computed from the quantized latent.
  Coded encode(const Var<T>& x) const {
    NoGradGuard guard;
    Coded c;
    const Var<T> y = analysis(x);
    c.z_hat = quantize_eval(hyper_analysis(y).value());
    const auto tables = prior_.tables();
    c.hyper = code_segment([&](RangeEncoder& e) { return encode_factorized(e, c.z_hat, tables); });
    const GaussianParams<T> p = hyper_synthesis(constant(c.z_hat));
    c.y_hat = quantize_eval(y.value());
    c.main = code_segment([&](RangeEncoder& e) { return encode_gaussian(e, c.y_hat, p.mu.value(), p.sigma.value()); });
    c.out = synthesis(constant(c.y_hat));
    return c;
  }

  struct Decoded {
    Tensor<T> y_hat, z_hat;
    Var<T> out;
  };

  Decoded decode(std::span<const uint8_t> hyper, std::span<const uint8_t> main, const LatentDims& dims) const {
    NoGradGuard guard;
    Decoded d;
    RangeDecoder hd(hyper);
    d.z_hat = decode_factorized<T>(hd, dims.hyper, prior_.tables());
    const GaussianParams<T> p = hyper_synthesis(constant(d.z_hat));
    d.y_hat = Tensor<T>(dims.main);
    RangeDecoder md(main);
    decode_gaussian(md, d.y_hat, p.mu.value(), p.sigma.value());
    d.out = synthesis(constant(d.y_hat));
    return d;
  }

  LatentDims dims(int height, int width) const { return hyperprior_dims(height, width, latent_, hyper_); }

 private:
  Analysis16<T> analysis_;
  Synthesis16<T> synthesis_;
  HyperAnalysis<T> hyper_analysis_;
  HyperSynthesis<T> hyper_synthesis_;
  FactorizedPrior<T> prior_;
  int latent_ = 0;
  int hyper_ = 0;
};

}  // namespace mstc
