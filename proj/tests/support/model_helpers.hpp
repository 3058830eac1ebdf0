#pragma once

#include <random>
#include <string>

#include "mstc/config.hpp"
#include "mstc/nn.hpp"

namespace mstc::testing {

/// Sets every parameter whose name contains `part` and ends with `suffix` to `value`.
template <typename T>
void fill_params(ParamStore<T>& store, const std::string& part, const std::string& suffix, T value) {
  for (const auto& [name, var] : store.parameters()) {
    if (name.find(part) == std::string::npos) continue;
    if (name.size() < suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    Var<T> v = var;
    v.mutable_value().fill(value);
  }
}

template <typename T>
void zero_biases(ParamStore<T>& store, const std::string& part = "") {
  fill_params(store, part, ".bias", T(0));
  fill_params(store, part, ".beta", T(0));
}

/// Redraws every parameter containing `part` uniformly in [-scale, scale].
template <typename T>
void randomize_params(ParamStore<T>& store, std::mt19937_64& rng, double scale, const std::string& part = "") {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (const auto& [name, var] : store.parameters()) {
    if (name.find(part) == std::string::npos) continue;
    Var<T> v = var;
    for (auto& x : v.mutable_value().span()) x = static_cast<T>(u(rng));
  }
}

/// Narrow model for fast property tests; the context latent keeps its full 128 channels.
inline CodecConfig tiny_config(uint64_t seed = 0) {
  CodecConfig c;
  c.feature_channels = 4;
  c.motion_channels = 4;
  c.motion_feature_dim = 4;
  c.motion_latent_channels = 4;
  c.motion_hyper_channels = 4;
  c.context_hyper_channels = 4;
  c.deform_groups = 2;
  c.intra_channels = 4;
  c.intra_latent_channels = 4;
  c.intra_hyper_channels = 4;
  c.seed = seed;
  return c;
}

}  // namespace mstc::testing
