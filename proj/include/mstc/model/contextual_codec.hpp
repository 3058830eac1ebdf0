#pragma once

#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mstc/entropy/factorized_prior.hpp"
#include "mstc/entropy/latent_coding.hpp"
#include "mstc/entropy/likelihood.hpp"
#include "mstc/entropy/segment.hpp"
#include "mstc/model/transforms.hpp"

namespace mstc {

/// Anchor positions of the two-pass checkerboard schedule.
inline bool is_anchor(int y, int x) { return (y + x) % 2 == 0; }

/// 1 at anchors, 0 elsewhere, broadcast over n and c.
template <typename T>
Tensor<T> checkerboard_mask(Shape s) {
  Tensor<T> m(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) m.at(n, c, y, x) = is_anchor(y, x) ? T(1) : T(0);
  return m;
}

template <typename T>
Tensor<T> channel_slice(const Tensor<T>& x, int begin, int count) {
  const Shape s = x.shape();
  require_shape(begin >= 0 && count > 0 && begin + count <= s.c, "channel_slice out of range on " + s.str());
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n) std::copy_n(x.plane(n, begin), count * s.plane(), out.plane(n, 0));
  return out;
}

template <typename T>
void set_channels(Tensor<T>& dst, int begin, const Tensor<T>& src) {
  const Shape d = dst.shape(), s = src.shape();
  require_shape(d.n == s.n && d.h == s.h && d.w == s.w && begin + s.c <= d.c, "set_channels " + s.str() + " into " + d.str());
  for (int n = 0; n < s.n; ++n) std::copy_n(src.plane(n, 0), s.c * s.plane(), dst.plane(n, begin));
}

/// Per-channel and per-group bits of a quantized latent under per-element Gaussians.
struct ChannelEntropyReport {
  std::vector<double> channel_bits;
  std::vector<int> group_sizes;
  std::vector<double> group_bits;
  double total_bits = 0;
};

/// Channel sums are accumulated over (n, y, x); each group sums its channels
/// in order and the total sums the groups in order, so the group entries
/// add up to the total exactly.
template <typename T>
ChannelEntropyReport channel_entropy_report(const Tensor<T>& q, const Tensor<T>& mu, const Tensor<T>& sigma,
                                            const std::vector<int>& groups) {
  require_shape(q.shape() == mu.shape() && q.shape() == sigma.shape(), "channel_entropy_report: shape mismatch");
  require_shape(std::accumulate(groups.begin(), groups.end(), 0) == q.c(), "channel_entropy_report: groups do not cover channels");
  ChannelEntropyReport r;
  r.group_sizes = groups;
  r.channel_bits.assign(static_cast<size_t>(q.c()), 0.0);
  const Shape s = q.shape();
  for (int c = 0; c < s.c; ++c) {
    double acc = 0;
    for (int n = 0; n < s.n; ++n) {
      const size_t base = q.index(n, c, 0, 0);
      for (size_t i = 0; i < s.plane(); ++i)
        acc += model_bits(GaussianModel(mu[base + i], sigma[base + i]), static_cast<int>(q[base + i]));
    }
    r.channel_bits[static_cast<size_t>(c)] = acc;
  }
  int c0 = 0;
  for (int g : groups) {
    double acc = 0;
    for (int c = c0; c < c0 + g; ++c) acc += r.channel_bits[static_cast<size_t>(c)];
    r.group_bits.push_back(acc);
    c0 += g;
  }
  for (double b : r.group_bits) r.total_bits += b;
  return r;
}

/// Conditional coder of the current feature given the predicted feature.
/// The latent is split into channel chunks coded in order; each chunk is coded
/// in an anchor pass and a non-anchor pass, with entropy parameters from the
/// temporal context (hyperprior fused with the predicted feature), a spatial
/// context over the chunk's decoded anchors, and a channel context over the
/// already decoded chunks.
template <typename T>
class ContextualCodec {
 public:
  static constexpr int kPasses = 2;

  struct Train {
    Var<T> c, c_hat, s_hat, temporal, f_tilde, f_hat;
    GaussianParams<T> params;
    Var<T> bits_c, bits_s;
  };

  struct Coded {
    Segment hyper;
    std::vector<Segment> segments;  // chunk-major, anchor pass first
    Tensor<T> c_hat, s_hat, mu, sigma;
    Var<T> f_hat;
  };

  ContextualCodec() = default;
  ContextualCodec(ParamStore<T>& store, const std::string& name, int feature_channels, std::vector<int> groups,
                  int hyper_channels)
      : groups_(std::move(groups)), hyper_(hyper_channels) {
    latent_ = std::accumulate(groups_.begin(), groups_.end(), 0);
    width_ = latent_;
    ctx_ = std::max(latent_ / 2, 1);
    int off = 0;
    for (int g : groups_) {
      offsets_.push_back(off);
      off += g;
    }
    encoder_ = Analysis16<T>(store, name + ".enc", 2 * feature_channels, feature_channels, latent_);
    decoder_ = Synthesis16<T>(store, name + ".dec", latent_, feature_channels, feature_channels);
    hyper_enc_ = HyperAnalysis<T>(store, name + ".hyper_enc", latent_, hyper_channels);
    hyper_dec_ = HyperSynthesis<T>(store, name + ".hyper_dec", hyper_channels, width_);
    prior_ = FactorizedPrior<T>(store, name + ".prior", hyper_channels);
    temporal_enc_ = Analysis16<T>(store, name + ".temporal_enc", feature_channels, feature_channels, width_);
    prior_fusion1_ = Conv2d<T>(store, name + ".prior_fusion1", 2 * width_, width_, 3);
    prior_fusion2_ = Conv2d<T>(store, name + ".prior_fusion2", width_, width_, 3);
    trunk1_ = Conv2d<T>(store, name + ".trunk1", width_ + 2 * ctx_, width_, 1);
    trunk2_ = Conv2d<T>(store, name + ".trunk2", width_, width_, 1);
    for (size_t k = 0; k < groups_.size(); ++k) {
      const std::string s = std::to_string(k);
      spatial_.emplace_back(store, name + ".spatial" + s, groups_[k], ctx_, 5);
      if (k > 0) {
        channel1_.emplace_back(store, name + ".channel" + s + ".conv1", offsets_[k], ctx_, 3);
        channel2_.emplace_back(store, name + ".channel" + s + ".conv2", ctx_, ctx_, 3);
      }
      heads_.emplace_back(store, name + ".head" + s, width_, 2 * groups_[k], 1);
    }
    refine1_ = Conv2d<T>(store, name + ".refine1", 2 * feature_channels, feature_channels, 3);
    refine2_ = Conv2d<T>(store, name + ".refine2", feature_channels, feature_channels, 3);
  }

  int latent_channels() const { return latent_; }
  int hyper_channels() const { return hyper_; }
  int chunks() const { return static_cast<int>(groups_.size()); }
  const std::vector<int>& groups() const { return groups_; }
  int chunk_offset(int k) const { return offsets_[static_cast<size_t>(k)]; }
  int context_width() const { return ctx_; }
  const FactorizedPrior<T>& prior() const { return prior_; }

  Var<T> encode(const Var<T>& f_cur, const Var<T>& f_pred) const {
    require_shape(f_cur.shape() == f_pred.shape(),
                  "contextual encoder: " + f_cur.shape().str() + " vs " + f_pred.shape().str());
    return encoder_(concat_channels<T>({f_cur, f_pred}));
  }
  Var<T> hyper_encode(const Var<T>& c) const { return hyper_enc_(c); }

  /// Fuses the decoded hyperprior with the predicted feature's temporal prior.
  Var<T> temporal_context(const Var<T>& f_pred, const Var<T>& s_hat) const {
    const Var<T> t = temporal_enc_(f_pred);
    const Var<T> h = hyper_dec_(s_hat);
    require_shape(t.shape() == h.shape(), "temporal context: prior " + t.shape().str() + " hyper " + h.shape().str());
    return prior_fusion2_(leaky_relu(prior_fusion1_(concat_channels<T>({h, t}))));
  }

  /// Zero grid for absent contexts, matching the latent's batch and extent.
  Var<T> zero_context(const Var<T>& like) const {
    const Shape s = like.shape();
    return constant(Tensor<T>(Shape{s.n, ctx_, s.h, s.w}));
  }

  /// Channel context of chunk k: exactly zero for k = 0.
  Var<T> channel_context(int k, const Var<T>& c_hat) const {
    if (k == 0) return zero_context(c_hat);
    const Var<T> prev = slice_channels(c_hat, 0, offsets_[static_cast<size_t>(k)]);
    const size_t i = static_cast<size_t>(k - 1);
    return channel2_[i](leaky_relu(channel1_[i](prev)));
  }

  /// Spatial context of chunk k: exactly zero in the anchor pass; otherwise a
  /// 5x5 conv over the chunk with every non-anchor position zeroed.
  Var<T> spatial_context(int k, bool anchor_pass, const Var<T>& c_hat) const {
    if (anchor_pass) return zero_context(c_hat);
    const Var<T> chunk = slice_channels(c_hat, offsets_[static_cast<size_t>(k)], groups_[static_cast<size_t>(k)]);
    const Var<T> anchors = mul(chunk, constant(checkerboard_mask<T>(chunk.shape())));
    return spatial_[static_cast<size_t>(k)](anchors);
  }

  /// Entropy parameters of chunk k for one pass. Reads only chunks < k of
  /// c_hat and, in the non-anchor pass, the anchors of chunk k.
  GaussianParams<T> pass_params(int k, bool anchor_pass, const Var<T>& c_hat, const Var<T>& temporal) const {
    require_shape(k >= 0 && k < chunks(), "pass_params: chunk index out of range");
    require_shape(c_hat.shape().c == latent_, "pass_params: latent " + c_hat.shape().str());
    const Var<T> ctx = concat_channels<T>({temporal, spatial_context(k, anchor_pass, c_hat), channel_context(k, c_hat)});
    const Var<T> h = leaky_relu(trunk2_(leaky_relu(trunk1_(ctx))));
    return split_gaussian(heads_[static_cast<size_t>(k)](h));
  }

  /// Parameters of every position in one graph: per chunk, anchor positions
  /// take the anchor-pass parameters and the rest the non-anchor ones.
  GaussianParams<T> all_params(const Var<T>& c_hat, const Var<T>& temporal) const {
    std::vector<Var<T>> mus, sigmas;
    for (int k = 0; k < chunks(); ++k) {
      const GaussianParams<T> a = pass_params(k, true, c_hat, temporal);
      const GaussianParams<T> b = pass_params(k, false, c_hat, temporal);
      const Tensor<T> m = checkerboard_mask<T>(a.mu.shape());
      Tensor<T> inv(m.shape());
      for (size_t i = 0; i < m.size(); ++i) inv[i] = T(1) - m[i];
      const Var<T> mv = constant(m), iv = constant(std::move(inv));
      mus.push_back(add(mul(a.mu, mv), mul(b.mu, iv)));
      sigmas.push_back(add(mul(a.sigma, mv), mul(b.sigma, iv)));
    }
    return {concat_channels(mus), concat_channels(sigmas)};
  }

  Var<T> decode(const Var<T>& c_hat) const { return decoder_(c_hat); }

  /// F_hat = F_tilde + Conv3x3(LeakyReLU(Conv3x3(concat(F_tilde, F_bar)))).
  Var<T> refine(const Var<T>& f_tilde, const Var<T>& f_pred) const {
    return add(f_tilde, refine2_(leaky_relu(refine1_(concat_channels<T>({f_tilde, f_pred})))));
  }

  Train forward(const Var<T>& f_cur, const Var<T>& f_pred, QuantMode mode, std::mt19937_64& rng) const {
    Train t;
    t.c = encode(f_cur, f_pred);
    t.s_hat = quantize(hyper_encode(t.c), mode, rng);
    t.bits_s = likelihood_bits(prior_.likelihood(t.s_hat));
    t.temporal = temporal_context(f_pred, t.s_hat);
    t.c_hat = quantize(t.c, mode, rng);
    t.params = all_params(t.c_hat, t.temporal);
    t.bits_c = gaussian_bits(t.c_hat, t.params.mu, t.params.sigma);
    t.f_tilde = decode(t.c_hat);
    t.f_hat = refine(t.f_tilde, f_pred);
    return t;
  }

  Coded encode_and_code(const Var<T>& f_cur, const Var<T>& f_pred) const {
    NoGradGuard guard;
    Coded out;
    const Var<T> c = encode(f_cur, f_pred);
    out.s_hat = quantize_eval(hyper_encode(c).value());
    const auto tables = prior_.tables();
    out.hyper = code_segment([&](RangeEncoder& e) { return encode_factorized(e, out.s_hat, tables); });
    const Var<T> temporal = temporal_context(f_pred, constant(out.s_hat));
    const Tensor<T> full = quantize_eval(c.value());
    // The parameter path sees the same partially filled latent as the decoder.
    Tensor<T> buffer(full.shape());
    out.mu = Tensor<T>(full.shape());
    out.sigma = Tensor<T>(full.shape());
    for (int k = 0; k < chunks(); ++k) {
      const int off = offsets_[static_cast<size_t>(k)], g = groups_[static_cast<size_t>(k)];
      const Tensor<T> chunk = channel_slice(full, off, g);
      for (int pass = 0; pass < kPasses; ++pass) {
        const bool anchor_pass = pass == 0;
        const GaussianParams<T> p = pass_params(k, anchor_pass, constant(buffer), temporal);
        const Selector select = [anchor_pass](int, int, int y, int x) { return is_anchor(y, x) == anchor_pass; };
        out.segments.push_back(code_segment(
            [&](RangeEncoder& e) { return encode_gaussian(e, chunk, p.mu.value(), p.sigma.value(), select); }));
        merge_pass(buffer, off, chunk, select);
        merge_pass(out.mu, off, p.mu.value(), select);
        merge_pass(out.sigma, off, p.sigma.value(), select);
      }
    }
    out.c_hat = std::move(buffer);
    out.f_hat = refine(decode(constant(out.c_hat)), f_pred);
    return out;
  }

  struct Decoded {
    Tensor<T> c_hat, s_hat, mu, sigma;
    Var<T> f_hat;
  };

  Decoded decode_from(std::span<const uint8_t> hyper, const std::vector<std::span<const uint8_t>>& segments,
                      Shape latent_shape, Shape hyper_shape, const Var<T>& f_pred) const {
    NoGradGuard guard;
    require_shape(segments.size() == static_cast<size_t>(chunks() * kPasses), "contextual decode: segment count");
    Decoded d;
    RangeDecoder hd(hyper);
    d.s_hat = decode_factorized<T>(hd, hyper_shape, prior_.tables());
    const Var<T> temporal = temporal_context(f_pred, constant(d.s_hat));
    d.c_hat = Tensor<T>(latent_shape);
    d.mu = Tensor<T>(latent_shape);
    d.sigma = Tensor<T>(latent_shape);
    size_t seg = 0;
    for (int k = 0; k < chunks(); ++k) {
      const int off = offsets_[static_cast<size_t>(k)];
      for (int pass = 0; pass < kPasses; ++pass) {
        const bool anchor_pass = pass == 0;
        const GaussianParams<T> p = pass_params(k, anchor_pass, constant(d.c_hat), temporal);
        const Selector select = [anchor_pass](int, int, int y, int x) { return is_anchor(y, x) == anchor_pass; };
        Tensor<T> chunk(p.mu.shape());
        RangeDecoder dec(segments[seg++]);
        decode_gaussian(dec, chunk, p.mu.value(), p.sigma.value(), select);
        merge_pass(d.c_hat, off, chunk, select);
        merge_pass(d.mu, off, p.mu.value(), select);
        merge_pass(d.sigma, off, p.sigma.value(), select);
      }
    }
    d.f_hat = refine(decode(constant(d.c_hat)), f_pred);
    return d;
  }

  Shape latent_shape(int height, int width) const { return Shape{1, latent_, height / 16, width / 16}; }
  Shape hyper_shape(int height, int width) const { return Shape{1, hyper_, height / 64, width / 64}; }

  Conv2d<T>& refine1() { return refine1_; }
  Conv2d<T>& refine2() { return refine2_; }

 private:
  // Copies the selected positions of `src` (chunk-local channels) into `dst` at channel offset `off`.
  static void merge_pass(Tensor<T>& dst, int off, const Tensor<T>& src, const Selector& select) {
    const Shape s = src.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x)
            if (select(n, c, y, x)) dst.at(n, off + c, y, x) = src.at(n, c, y, x);
  }

  std::vector<int> groups_;
  std::vector<int> offsets_;
  int latent_ = 0;
  int hyper_ = 0;
  int width_ = 0;
  int ctx_ = 0;
  Analysis16<T> encoder_;
  Synthesis16<T> decoder_;
  HyperAnalysis<T> hyper_enc_;
  HyperSynthesis<T> hyper_dec_;
  FactorizedPrior<T> prior_;
  Analysis16<T> temporal_enc_;
  Conv2d<T> prior_fusion1_, prior_fusion2_;
  Conv2d<T> trunk1_, trunk2_;
  std::vector<Conv2d<T>> spatial_;
  std::vector<Conv2d<T>> channel1_, channel2_;
  std::vector<Conv2d<T>> heads_;
  Conv2d<T> refine1_, refine2_;
};

}  // namespace mstc
