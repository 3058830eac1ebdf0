#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mstc/entropy/likelihood.hpp"

namespace mstc {

enum class Distortion { mse, ms_ssim };

inline std::string to_string(Distortion d) { return d == Distortion::mse ? "mse" : "ms-ssim"; }

inline Distortion parse_distortion(const std::string& s) {
  if (s == "mse" || s == "MSE") return Distortion::mse;
  if (s == "ms-ssim" || s == "ms_ssim" || s == "MS-SSIM") return Distortion::ms_ssim;
  throw std::invalid_argument("unknown distortion metric " + s);
}

inline std::string to_string(QuantMode m) {
  switch (m) {
    case QuantMode::noise: return "noise";
    case QuantMode::straight_through: return "straight_through";
    case QuantMode::round: return "round";
  }
  return "noise";
}

inline QuantMode parse_quant_mode(const std::string& s) {
  if (s == "noise") return QuantMode::noise;
  if (s == "straight_through" || s == "ste") return QuantMode::straight_through;
  if (s == "round") return QuantMode::round;
  throw std::invalid_argument("unknown quantization mode " + s);
}

/// Default rate-distortion trade-offs; lambda_id in a container indexes this table.
inline const std::vector<double>& lambda_table() {
  static const std::vector<double> table{256, 512, 1024, 2048};
  return table;
}

inline int lambda_id_for(double lambda) {
  const auto& t = lambda_table();
  for (size_t i = 0; i < t.size(); ++i)
    if (t[i] == lambda) return static_cast<int>(i);
  return 255;
}

struct CodecConfig {
  int gop_size = 10;
  double lambda = 2048;
  Distortion distortion = Distortion::mse;

  int feature_channels = 64;      // C_f
  int motion_channels = 64;       // C_m
  int motion_feature_dim = 64;    // D
  int motion_latent_channels = 64;
  int motion_hyper_channels = 64;
  std::vector<int> context_groups{16, 16, 32, 64};
  int context_hyper_channels = 64;
  int deform_groups = 8;
  int intra_channels = 64;
  int intra_latent_channels = 96;
  int intra_hyper_channels = 64;

  /// Coarse-to-fine motion estimation; false keeps only the full-scale initial motion.
  bool multiscale_motion = true;
  QuantMode train_quant = QuantMode::noise;
  uint64_t seed = 0;

  static constexpr int kPadMultiple = 64;

  int context_latent_channels() const { return std::accumulate(context_groups.begin(), context_groups.end(), 0); }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v <= 0) throw std::invalid_argument(std::string("config: ") + what + " must be positive");
    };
    positive(gop_size, "gop_size");
    positive(feature_channels, "feature_channels");
    positive(motion_channels, "motion_channels");
    positive(motion_feature_dim, "motion_feature_dim");
    positive(motion_latent_channels, "motion_latent_channels");
    positive(motion_hyper_channels, "motion_hyper_channels");
    positive(context_hyper_channels, "context_hyper_channels");
    positive(deform_groups, "deform_groups");
    positive(intra_channels, "intra_channels");
    positive(intra_latent_channels, "intra_latent_channels");
    positive(intra_hyper_channels, "intra_hyper_channels");
    if (!(lambda > 0)) throw std::invalid_argument("config: lambda must be positive");
    if (context_groups.empty()) throw std::invalid_argument("config: context_groups is empty");
    for (int g : context_groups) positive(g, "context group size");
    if (feature_channels % deform_groups != 0)
      throw std::invalid_argument("config: feature_channels must be divisible by deform_groups");
  }
};

inline void to_json(nlohmann::json& j, const CodecConfig& c) {
  j = nlohmann::json{{"gop_size", c.gop_size},
                     {"lambda", c.lambda},
                     {"distortion_metric", to_string(c.distortion)},
                     {"feature_channels", c.feature_channels},
                     {"motion_channels", c.motion_channels},
                     {"motion_feature_dim", c.motion_feature_dim},
                     {"motion_latent_channels", c.motion_latent_channels},
                     {"motion_hyper_channels", c.motion_hyper_channels},
                     {"context_groups", c.context_groups},
                     {"context_hyper_channels", c.context_hyper_channels},
                     {"deform_groups", c.deform_groups},
                     {"intra_channels", c.intra_channels},
                     {"intra_latent_channels", c.intra_latent_channels},
                     {"intra_hyper_channels", c.intra_hyper_channels},
                     {"multiscale_motion", c.multiscale_motion},
                     {"train_quant", to_string(c.train_quant)},
                     {"seed", c.seed}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, CodecConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("gop_size", c.gop_size);
  get("lambda", c.lambda);
  if (j.contains("distortion_metric")) c.distortion = parse_distortion(j.at("distortion_metric").get<std::string>());
  get("feature_channels", c.feature_channels);
  get("motion_channels", c.motion_channels);
  get("motion_feature_dim", c.motion_feature_dim);
  get("motion_latent_channels", c.motion_latent_channels);
  get("motion_hyper_channels", c.motion_hyper_channels);
  get("context_groups", c.context_groups);
  get("context_hyper_channels", c.context_hyper_channels);
  get("deform_groups", c.deform_groups);
  get("intra_channels", c.intra_channels);
  get("intra_latent_channels", c.intra_latent_channels);
  get("intra_hyper_channels", c.intra_hyper_channels);
  get("multiscale_motion", c.multiscale_motion);
  if (j.contains("train_quant")) c.train_quant = parse_quant_mode(j.at("train_quant").get<std::string>());
  get("seed", c.seed);
  c.validate();
}

inline CodecConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return nlohmann::json::parse(in).get<CodecConfig>();
}

}  // namespace mstc
