#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mstc/metrics.hpp"
#include "mstc/pipeline.hpp"

namespace mstc {

inline const char* frame_type_name(FrameType t) { return t == FrameType::I ? "I" : "P"; }

/// Substream sizes of a record, grouped by role.
inline nlohmann::json substream_breakdown(const FrameRecord& r) {
  auto bits = [&](size_t i) { return 8 * r.substreams.at(i).size(); };
  if (r.type == FrameType::I) return {{"intra_hyper_bits", bits(0)}, {"intra_bits", bits(1)}};
  nlohmann::json segments = nlohmann::json::array();
  size_t context = 0;
  for (size_t i = 3; i < r.substreams.size(); ++i) {
    segments.push_back(bits(i));
    context += bits(i);
  }
  return {{"motion_hyper_bits", bits(0)},
          {"motion_bits", bits(1)},
          {"context_hyper_bits", bits(2)},
          {"context_bits", context},
          {"context_segment_bits", segments}};
}

/// Per-frame sizes from the container alone.
inline nlohmann::json container_stats(const Container& c) {
  const double pixels = static_cast<double>(c.header.width) * c.header.height;
  nlohmann::json frames = nlohmann::json::array();
  double total = 0;
  for (size_t i = 0; i < c.frames.size(); ++i) {
    const auto& r = c.frames[i];
    const double bits = 8.0 * static_cast<double>(r.payload_bytes());
    total += bits;
    nlohmann::json f = substream_breakdown(r);
    f["index"] = i;
    f["type"] = frame_type_name(r.type);
    f["bits"] = bits;
    f["bpp"] = bits / pixels;
    frames.push_back(std::move(f));
  }
  return {{"width", c.header.width},
          {"height", c.header.height},
          {"n_frames", c.header.n_frames},
          {"gop", c.header.gop},
          {"lambda_id", c.header.lambda_id},
          {"container_bytes", c.size_bytes()},
          {"payload_bits", total},
          {"bpp", total / (pixels * std::max<size_t>(c.frames.size(), 1))},
          {"frames", frames}};
}

inline nlohmann::json to_json(const ChannelEntropyReport& r) {
  return {{"channel_bits", r.channel_bits},
          {"group_sizes", r.group_sizes},
          {"group_bits", r.group_bits},
          {"total_bits", r.total_bits}};
}

struct SequenceQuality {
  double bpp = 0;
  double psnr = 0;
  double msssim = 0;
};

/// Decodes `c` and compares against `source`: per-frame bpp, PSNR, MS-SSIM,
/// substream breakdown and, for P frames, per-channel and per-group entropies.
inline nlohmann::json evaluate_sequence(const RawSequence& source, const Container& c, const VideoModel<float>& model,
                                        SequenceQuality* summary = nullptr) {
  if (source.frames.size() != c.frames.size()) throw std::invalid_argument("source and container frame counts differ");
  const Codec codec(model);
  const auto decoded = codec.decode_sequence(c);
  nlohmann::json report = container_stats(c);
  double psnr_sum = 0, msssim_sum = 0;
  std::vector<double> group_totals(model.config().context_groups.size(), 0.0);
  for (size_t i = 0; i < c.frames.size(); ++i) {
    auto& f = report["frames"][i];
    const double p = psnr(source.frames[i], decoded.sequence.frames[i]);
    const double m = ms_ssim(source.frames[i], decoded.sequence.frames[i]);
    f["psnr"] = p;
    f["msssim"] = m;
    f["concealed"] = static_cast<bool>(decoded.concealed[i]);
    psnr_sum += p;
    msssim_sum += m;
    if (c.frames[i].type == FrameType::P && !decoded.concealed[i]) {
      const auto& r = decoded.frames[i].context_report;
      f["context_entropy"] = to_json(r);
      for (size_t g = 0; g < r.group_bits.size(); ++g) group_totals[g] += r.group_bits[g];
    }
  }
  const double n = static_cast<double>(c.frames.size());
  report["psnr"] = psnr_sum / n;
  report["msssim"] = msssim_sum / n;
  report["context_group_bits"] = group_totals;
  report["context_group_sizes"] = model.config().context_groups;
  if (summary) *summary = {report["bpp"].get<double>(), psnr_sum / n, msssim_sum / n};
  return report;
}

}  // namespace mstc
