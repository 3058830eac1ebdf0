#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mstc/metrics.hpp"
#include "mstc/model/video_model.hpp"
#include "mstc/video_io.hpp"

namespace mstc {

enum class Stage { intra, single_frame, cascaded, msssim_finetune };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::intra: return "intra";
    case Stage::single_frame: return "single_frame";
    case Stage::cascaded: return "cascaded";
    case Stage::msssim_finetune: return "msssim_finetune";
  }
  return "intra";
}

inline Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::intra, Stage::single_frame, Stage::cascaded, Stage::msssim_finetune})
    if (to_string(st) == s) return st;
  throw std::invalid_argument("unknown training stage " + s);
}

struct TrainConfig {
  Stage stage = Stage::single_frame;
  int frames = 1;  // T: P frames in the loss
  double learning_rate = 5e-5;
  int steps = 20000;
  double lambda = 2048;
  int batch = 4;
  int crop = 256;  // 0 trains on whole frames
  /// Cut the gradient through each reconstruction fed forward as the next reference.
  bool detach_reference = false;
  QuantMode quant = QuantMode::noise;
  uint64_t seed = 0;
  std::string log_path;

  Distortion distortion() const { return stage == Stage::msssim_finetune ? Distortion::ms_ssim : Distortion::mse; }

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be positive");
    if (steps < 0 || batch < 1) throw std::invalid_argument("train: steps >= 0 and batch >= 1 required");
    if (!(lambda > 0)) throw std::invalid_argument("train: lambda must be positive");
    if (crop < 0 || crop % CodecConfig::kPadMultiple != 0)
      throw std::invalid_argument("train: crop must be 0 or a multiple of 64");
    if ((stage == Stage::intra || stage == Stage::single_frame) && frames != 1)
      throw std::invalid_argument("train: T must be 1 for the " + to_string(stage) + " stage");
    if (stage == Stage::cascaded && frames < 2) throw std::invalid_argument("train: T must be >= 2 for the cascaded stage");
    if (frames < 1) throw std::invalid_argument("train: T must be positive");
  }

  /// Desk-scale defaults per stage; the comments give the long-schedule values.
  static TrainConfig defaults(Stage stage) {
    TrainConfig c;
    c.stage = stage;
    switch (stage) {
      case Stage::intra:
        c.steps = 20000;
        c.learning_rate = 1e-4;
        break;
      case Stage::single_frame:  // 2,000K steps at full scale
        c.steps = 20000;
        c.learning_rate = 5e-5;
        c.batch = 4;
        break;
      case Stage::cascaded:  // 500K steps at full scale
        c.steps = 5000;
        c.learning_rate = 5e-6;
        c.batch = 2;
        c.frames = 6;
        break;
      case Stage::msssim_finetune:  // 100K steps at full scale
        c.steps = 2000;
        c.learning_rate = 5e-6;
        c.batch = 2;
        c.frames = 6;
        break;
    }
    return c;
  }
};

template <typename T>
Var<T> distortion(const Var<T>& x, const Var<T>& x_hat, Distortion metric) {
  if (metric == Distortion::mse) return mse(x, x_hat);
  return add_scalar(scale(ms_ssim_var(x, x_hat), T(-1)), T(1));
}

/// (1/T) * sum_t [lambda * d(x_t, x_hat_t) + sum of that frame's rate terms].
template <typename T>
Var<T> rd_loss(const std::vector<Var<T>>& frames, const std::vector<Var<T>>& recons,
               const std::vector<std::vector<Var<T>>>& rates, double lambda, Distortion metric) {
  if (frames.empty() || frames.size() != recons.size() || frames.size() != rates.size())
    throw std::invalid_argument("rd_loss: frames, reconstructions and rate terms must have equal nonzero length");
  std::vector<Var<T>> terms;
  for (size_t t = 0; t < frames.size(); ++t) {
    std::vector<Var<T>> parts{scale(distortion(frames[t], recons[t], metric), static_cast<T>(lambda))};
    parts.insert(parts.end(), rates[t].begin(), rates[t].end());
    terms.push_back(add_all(parts));
  }
  return scale(add_all(terms), static_cast<T>(1.0 / static_cast<double>(frames.size())));
}

/// Adaptive-moment optimizer over every parameter of a store.
template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& store, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_learning_rate(double lr) { lr_ = lr; }

  /// Parameters without a gradient buffer are skipped.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& [name, param] : store_.parameters()) {
      if (param.grad().empty()) continue;
      Var<T> p = param;
      auto& [m, v] = moments_[name];
      if (m.empty()) {
        m.assign(p.value().size(), 0.0);
        v.assign(p.value().size(), 0.0);
      }
      Tensor<T>& w = p.mutable_value();
      const Tensor<T>& g = p.grad();
      for (size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = beta1_ * m[i] + (1 - beta1_) * gi;
        v[i] = beta2_ * v[i] + (1 - beta2_) * gi * gi;
        w[i] -= static_cast<T>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
      }
    }
  }

 private:
  ParamStore<T>& store_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct StepStats {
  int step = 0;
  double loss = 0;
  double rate = 0;        // estimated bpp, averaged over the loss frames
  double distortion = 0;  // averaged over the loss frames
  int reconstructions = 0;
};

inline nlohmann::json to_json(const StepStats& s) {
  return {{"step", s.step}, {"loss", s.loss}, {"rate", s.rate}, {"distortion", s.distortion}};
}

/// Stacks [1, C, H, W] crops into one [N, C, H, W] batch.
inline Frame stack_batch(const std::vector<Frame>& frames) {
  const Shape s = frames.front().shape();
  Frame out(Shape{static_cast<int>(frames.size()), s.c, s.h, s.w});
  for (size_t i = 0; i < frames.size(); ++i) {
    require_shape(frames[i].shape() == s, "stack_batch: mixed shapes");
    std::copy_n(frames[i].data(), s.numel(), out.plane(static_cast<int>(i), 0));
  }
  return out;
}

inline Frame crop_at(const Frame& f, int y0, int x0, int size) {
  Frame out(Shape{1, f.c(), size, size});
  for (int c = 0; c < f.c(); ++c)
    for (int y = 0; y < size; ++y)
      std::copy_n(f.plane(0, c) + static_cast<size_t>(y0 + y) * f.w() + x0, size,
                  out.plane(0, c) + static_cast<size_t>(y) * size);
  return out;
}

/// Runs one training stage over a set of clips.
class Trainer {
 public:
  Trainer(VideoModel<float>& model, std::vector<RawSequence> clips, TrainConfig cfg)
      : model_(model), clips_(std::move(clips)), cfg_(cfg), adam_(model.store(), cfg.learning_rate), rng_(cfg.seed) {
    cfg_.validate();
    if (clips_.empty()) throw std::invalid_argument("train: no clips");
    const int need = cfg_.stage == Stage::intra ? 1 : cfg_.frames + 1;
    for (const auto& c : clips_) {
      if (static_cast<int>(c.frames.size()) < need)
        throw std::invalid_argument("train: clip of " + std::to_string(c.frames.size()) + " frames, stage needs " +
                                    std::to_string(need));
      const int size = cfg_.crop == 0 ? 0 : cfg_.crop;
      if (size > 0 && (c.height < size || c.width < size)) throw std::invalid_argument("train: clip smaller than crop");
      if (size == 0 && (c.height % CodecConfig::kPadMultiple || c.width % CodecConfig::kPadMultiple))
        throw std::invalid_argument("train: whole-frame training needs dims divisible by 64");
    }
  }

  const TrainConfig& config() const { return cfg_; }

  /// Draws T+1 consecutive frames (1 for the intra stage) per batch item.
  std::vector<Frame> sample() {
    const int span = cfg_.stage == Stage::intra ? 1 : cfg_.frames + 1;
    std::vector<std::vector<Frame>> items(static_cast<size_t>(span));
    for (int b = 0; b < cfg_.batch; ++b) {
      const auto& clip = clips_[std::uniform_int_distribution<size_t>(0, clips_.size() - 1)(rng_)];
      const int start = std::uniform_int_distribution<int>(0, static_cast<int>(clip.frames.size()) - span)(rng_);
      int y0 = 0, x0 = 0;
      if (cfg_.crop > 0) {
        y0 = std::uniform_int_distribution<int>(0, clip.height - cfg_.crop)(rng_);
        x0 = std::uniform_int_distribution<int>(0, clip.width - cfg_.crop)(rng_);
      }
      for (int t = 0; t < span; ++t) {
        const Frame& f = clip.frames[static_cast<size_t>(start + t)];
        items[static_cast<size_t>(t)].push_back(cfg_.crop > 0 ? crop_at(f, y0, x0, cfg_.crop) : f);
      }
    }
    std::vector<Frame> out;
    for (const auto& v : items) out.push_back(stack_batch(v));
    return out;
  }

  StepStats step(const std::vector<Frame>& frames) {
    const double pixels = static_cast<double>(frames[0].n()) * frames[0].h() * frames[0].w();
    const Distortion metric = cfg_.distortion();
    std::vector<Var<float>> xs, recons;
    std::vector<std::vector<Var<float>>> rates;
    std::vector<double> dist;
    auto push = [&](const Var<float>& x, const FrameForward<float>& f) {
      xs.push_back(x);
      recons.push_back(f.x_hat);
      rates.push_back({scale(f.rates.total(), static_cast<float>(1.0 / pixels))});
    };

    if (cfg_.stage == Stage::intra) {
      const Var<float> x = constant(frames[0]);
      push(x, model_.intra_forward(x, cfg_.quant, rng_));
    } else {
      Var<float> ref = intra_reference(frames[0]);
      for (int t = 1; t <= cfg_.frames; ++t) {
        const Var<float> x = constant(frames[static_cast<size_t>(t)]);
        const FrameForward<float> f = model_.inter_forward(x, ref, cfg_.quant, rng_, true);
        push(x, f);
        ref = cfg_.detach_reference ? f.x_hat.detach() : f.x_hat;
      }
    }

    const Var<float> loss = rd_loss(xs, recons, rates, cfg_.lambda, metric);
    StepStats s;
    s.step = ++step_;
    s.loss = loss.item();
    s.reconstructions = static_cast<int>(recons.size());
    for (size_t t = 0; t < xs.size(); ++t) {
      s.rate += rates[t][0].item() / static_cast<double>(xs.size());
      s.distortion += distortion(xs[t].detach(), recons[t].detach(), metric).item() / static_cast<double>(xs.size());
    }
    model_.store().zero_grad();
    backward(loss);
    adam_.step();
    return s;
  }

  StepStats step() { return step(sample()); }

  /// Runs cfg.steps steps, appending one JSON line per step to cfg.log_path when set.
  std::vector<StepStats> run(const std::function<void(const StepStats&)>& on_step = {}) {
    std::ofstream log;
    if (!cfg_.log_path.empty()) {
      log.open(cfg_.log_path, std::ios::app);
      if (!log) throw IoError("cannot open training log " + cfg_.log_path);
    }
    std::vector<StepStats> curve;
    for (int i = 0; i < cfg_.steps; ++i) {
      curve.push_back(step());
      if (log) {
        nlohmann::json line = to_json(curve.back());
        line["stage"] = to_string(cfg_.stage);
        log << line.dump() << '\n';
      }
      if (on_step) on_step(curve.back());
    }
    return curve;
  }

 private:
  // Reconstruction of the intra codec with rounding, clamped as at coding time; no gradient.
  Var<float> intra_reference(const Frame& x) {
    NoGradGuard guard;
    const FrameForward<float> f = model_.intra_forward(constant(x), QuantMode::round, rng_);
    return constant(clamp01(f.x_hat.value()));
  }

  VideoModel<float>& model_;
  std::vector<RawSequence> clips_;
  TrainConfig cfg_;
  Adam<float> adam_;
  std::mt19937_64 rng_;
  int step_ = 0;
};

/// Moving average of the loss over a trailing window ending at index `at`.
inline double smoothed_loss(const std::vector<StepStats>& curve, size_t at, size_t window) {
  const size_t lo = at + 1 >= window ? at + 1 - window : 0;
  double s = 0;
  for (size_t i = lo; i <= at; ++i) s += curve[i].loss;
  return s / static_cast<double>(at + 1 - lo);
}

}  // namespace mstc
