#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "mstc/config.hpp"
#include "mstc/model/video_model.hpp"

namespace mstc {

// Layout: "MSTCCKPT", u32 header length, JSON header, then little-endian
// float32 tensors at the offsets (in floats) listed in the header.
inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'T', 'C', 'C', 'K', 'P', 'T'};
inline constexpr const char* kNumericMode = "float32/nchw/im2col-gemm/single-thread";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void save_checkpoint(const VideoModel<float>& model, const std::string& path, const nlohmann::json& extra = {}) {
  nlohmann::json header;
  header["config"] = model.config();
  header["numeric_mode"] = kNumericMode;
  if (!extra.is_null()) header["extra"] = extra;
  std::vector<const Tensor<float>*> blobs;
  size_t offset = 0;
  auto list = [&](const auto& group, const char* key) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, var] : group) {
      const Shape s = var.shape();
      entries.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
      offset += var.value().size();
      blobs.push_back(&var.value());
    }
    header[key] = std::move(entries);
  };
  list(model.store().parameters(), "parameters");
  list(model.store().buffers(), "buffers");

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot create " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const uint32_t len = static_cast<uint32_t>(text.size());
  const uint8_t len_bytes[4] = {static_cast<uint8_t>(len), static_cast<uint8_t>(len >> 8), static_cast<uint8_t>(len >> 16),
                                static_cast<uint8_t>(len >> 24)};
  out.write(reinterpret_cast<const char*>(len_bytes), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  static_assert(sizeof(float) == 4 && std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian float32");
  for (const auto* t : blobs)
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(float)));
  if (!out) throw CheckpointError("failed writing " + path);
}

struct LoadedCheckpoint {
  std::unique_ptr<VideoModel<float>> model;
  nlohmann::json header;
};

/// Builds the model from the embedded config and fills every parameter and
/// buffer; names and shapes must match exactly.
inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[8];
  uint8_t len_bytes[4];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(len_bytes), 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError(path + " is not a checkpoint");
  const uint32_t len = len_bytes[0] | (uint32_t{len_bytes[1]} << 8) | (uint32_t{len_bytes[2]} << 16) |
                       (uint32_t{len_bytes[3]} << 24);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw CheckpointError(path + ": truncated header");
  LoadedCheckpoint out;
  out.header = nlohmann::json::parse(text);
  if (out.header.value("numeric_mode", std::string()) != kNumericMode)
    throw CheckpointError(path + ": numeric mode " + out.header.value("numeric_mode", std::string("?")) +
                          " differs from " + kNumericMode);
  out.model = std::make_unique<VideoModel<float>>(out.header.at("config").get<CodecConfig>());
  const std::streamoff data_start = in.tellg();

  auto fill = [&](const std::map<std::string, Var<float>>& group, const char* key) {
    const auto& entries = out.header.at(key);
    if (entries.size() != group.size())
      throw CheckpointError(std::string(path) + ": " + key + " count " + std::to_string(entries.size()) + " vs model " +
                            std::to_string(group.size()));
    for (const auto& e : entries) {
      const std::string name = e.at("name");
      auto it = group.find(name);
      if (it == group.end()) throw CheckpointError(path + ": unknown tensor " + name);
      Var<float> v = it->second;
      const auto shape = e.at("shape").get<std::vector<int>>();
      const Shape s = v.shape();
      if (shape != std::vector<int>{s.n, s.c, s.h, s.w}) throw CheckpointError(path + ": shape mismatch for " + name);
      in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<size_t>() * sizeof(float)));
      in.read(reinterpret_cast<char*>(v.mutable_value().data()),
              static_cast<std::streamsize>(v.value().size() * sizeof(float)));
      if (!in) throw CheckpointError(path + ": truncated data for " + name);
    }
  };
  fill(out.model->store().parameters(), "parameters");
  fill(out.model->store().buffers(), "buffers");
  return out;
}

/// Copies every parameter and buffer value from `src` into `dst` (same config).
inline void copy_weights(const VideoModel<float>& src, VideoModel<float>& dst) {
  auto copy = [](const auto& from, const auto& to) {
    for (const auto& [name, var] : from) {
      Var<float> target = to.at(name);
      target.mutable_value() = var.value();
    }
  };
  copy(src.store().parameters(), dst.store().parameters());
  copy(src.store().buffers(), dst.store().buffers());
}

}  // namespace mstc
