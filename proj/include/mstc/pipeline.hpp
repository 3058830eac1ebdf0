#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstc/model/video_model.hpp"
#include "mstc/video_io.hpp"

namespace mstc {

inline constexpr uint8_t kContainerVersion = 1;
inline constexpr size_t kHeaderBytes = 13;
inline constexpr int kIntraSubstreams = 2;
inline constexpr int kInterSubstreams = 11;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CrcError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct ContainerHeader {
  uint16_t width = 0;
  uint16_t height = 0;
  uint16_t n_frames = 0;
  uint8_t gop = 0;
  uint8_t lambda_id = 0;
};

/// One coded frame. I frames hold {hyper, main}; P frames hold {motion hyper,
/// motion, context hyper, then the 8 context segments in coding order}.
struct FrameRecord {
  FrameType type = FrameType::I;
  std::vector<std::vector<uint8_t>> substreams;
  uint32_t crc = 0;

  size_t payload_bytes() const {
    size_t n = 0;
    for (const auto& s : substreams) n += s.size();
    return n;
  }
  size_t serialized_bytes() const { return 1 + 4 * substreams.size() + payload_bytes() + 4; }
};

inline int substream_count(FrameType t) { return t == FrameType::I ? kIntraSubstreams : kInterSubstreams; }

namespace detail {

inline void put_u16(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}
  uint32_t u8() { return take(1)[0]; }
  uint32_t u16() {
    auto b = take(2);
    return b[0] | (uint32_t{b[1]} << 8);
  }
  uint32_t u32() {
    auto b = take(4);
    return b[0] | (uint32_t{b[1]} << 8) | (uint32_t{b[2]} << 16) | (uint32_t{b[3]} << 24);
  }
  std::span<const uint8_t> take(size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("container truncated at byte " + std::to_string(pos_));
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

inline uint32_t crc32_update(uint32_t crc, std::span<const uint8_t> bytes) {
  return static_cast<uint32_t>(::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

/// CRC-32 over the frame type, the substream lengths and the payloads.
inline uint32_t record_crc(const FrameRecord& r) {
  std::vector<uint8_t> head{static_cast<uint8_t>(r.type)};
  for (const auto& s : r.substreams) detail::put_u32(head, static_cast<uint32_t>(s.size()));
  uint32_t crc = detail::crc32_update(0, head);
  for (const auto& s : r.substreams) crc = detail::crc32_update(crc, s);
  return crc;
}

struct Container {
  ContainerHeader header;
  std::vector<FrameRecord> frames;

  std::vector<uint8_t> serialize() const {
    std::vector<uint8_t> out{'M', 'S', 'T', 'C', kContainerVersion};
    detail::put_u16(out, header.width);
    detail::put_u16(out, header.height);
    detail::put_u16(out, header.n_frames);
    out.push_back(header.gop);
    out.push_back(header.lambda_id);
    for (const auto& r : frames) {
      out.push_back(static_cast<uint8_t>(r.type));
      for (const auto& s : r.substreams) detail::put_u32(out, static_cast<uint32_t>(s.size()));
      for (const auto& s : r.substreams) out.insert(out.end(), s.begin(), s.end());
      detail::put_u32(out, r.crc);
    }
    return out;
  }

  /// Parses the framing only; CRCs are checked when frames are decoded.
  static Container parse(std::span<const uint8_t> bytes) {
    detail::Reader in(bytes);
    auto magic = in.take(4);
    if (std::memcmp(magic.data(), "MSTC", 4) != 0) throw FormatError("not an MSTC container");
    if (const uint32_t v = in.u8(); v != kContainerVersion)
      throw FormatError("unsupported container version " + std::to_string(v));
    Container c;
    c.header.width = static_cast<uint16_t>(in.u16());
    c.header.height = static_cast<uint16_t>(in.u16());
    c.header.n_frames = static_cast<uint16_t>(in.u16());
    c.header.gop = static_cast<uint8_t>(in.u8());
    c.header.lambda_id = static_cast<uint8_t>(in.u8());
    for (int i = 0; i < c.header.n_frames; ++i) {
      FrameRecord r;
      const uint32_t t = in.u8();
      if (t > 1) throw FormatError("frame " + std::to_string(i) + " has unknown type " + std::to_string(t));
      r.type = static_cast<FrameType>(t);
      std::vector<uint32_t> lengths(static_cast<size_t>(substream_count(r.type)));
      for (auto& l : lengths) l = in.u32();
      for (uint32_t l : lengths) {
        auto s = in.take(l);
        r.substreams.emplace_back(s.begin(), s.end());
      }
      r.crc = in.u32();
      c.frames.push_back(std::move(r));
    }
    if (!in.done()) throw FormatError("trailing bytes after the last frame");
    return c;
  }

  size_t size_bytes() const {
    size_t n = kHeaderBytes;
    for (const auto& r : frames) n += r.serialized_bytes();
    return n;
  }
};

/// Previous reconstruction (padded) and its full-resolution features.
struct ReconBuffer {
  std::optional<Frame> frame;
  Var<float> features;

  bool ready() const { return frame.has_value(); }
  void reset() {
    frame.reset();
    features = Var<float>();
  }
};

/// Substream sizes of one frame, in bytes, and the bits the models charged.
struct FrameStats {
  FrameType type = FrameType::I;
  std::vector<size_t> substream_bytes;
  std::vector<double> model_bits;
  double bits = 0;  // 8 x total substream bytes
  double bpp = 0;   // bits over original pixel count
  bool concealed = false;

  /// Coded bits per logical group: I {intra, intra hyper}; P {motion, motion hyper, context, context hyper}.
  double group_bits(const std::string& name) const {
    auto bytes = [&](size_t i) { return 8.0 * static_cast<double>(substream_bytes.at(i)); };
    if (type == FrameType::I) {
      if (name == "intra_hyper") return bytes(0);
      if (name == "intra") return bytes(1);
    } else {
      if (name == "motion_hyper") return bytes(0);
      if (name == "motion") return bytes(1);
      if (name == "context_hyper") return bytes(2);
      if (name == "context") {
        double b = 0;
        for (size_t i = 3; i < substream_bytes.size(); ++i) b += bytes(i);
        return b;
      }
    }
    return 0;
  }
};

/// Quantized latents of a frame: I {z_hat, y_hat}; P {z_hat, m_hat, s_hat, c_hat}.
struct FrameLatents {
  std::vector<Tensor<float>> tensors;
};

struct CodedFrame {
  FrameRecord record;
  Frame recon;  // padded, clamped to [0, 1]
  FrameStats stats;
  FrameLatents latents;
  ChannelEntropyReport context_report;  // P frames only
};

struct DecodedFrame {
  Frame recon;
  FrameLatents latents;
  ChannelEntropyReport context_report;  // P frames only
};

class Codec {
 public:
  explicit Codec(const VideoModel<float>& model) : model_(model) {}

  const VideoModel<float>& model() const { return model_; }

  CodedFrame encode_i_frame(const Frame& x, PadInfo original) const {
    check_dims(x);
    const auto coded = model_.intra().encode(constant(x));
    CodedFrame out;
    out.record.type = FrameType::I;
    out.record.substreams = {coded.hyper.bytes, coded.main.bytes};
    out.record.crc = record_crc(out.record);
    out.recon = clamp01(coded.out.value());
    out.latents.tensors = {coded.z_hat, coded.y_hat};
    out.stats = make_stats(out.record, {coded.hyper.model_bits, coded.main.model_bits}, original);
    return out;
  }

  DecodedFrame decode_i_frame(const FrameRecord& r, int height, int width) const {
    check_record(r, FrameType::I);
    const auto d = model_.intra().decode(r.substreams[0], r.substreams[1], model_.intra().dims(height, width));
    DecodedFrame out;
    out.recon = clamp01(d.out.value());
    out.latents.tensors = {d.z_hat, d.y_hat};
    return out;
  }

  CodedFrame encode_p_frame(const Frame& x, ReconBuffer& buffer, PadInfo original) const {
    check_dims(x);
    require_buffer(buffer, x);
    NoGradGuard guard;
    const Var<float> xv = constant(x);
    const FeaturePyramid<float> cur = model_.extractor()(xv);
    const FeaturePyramid<float> ref = model_.extractor()(constant(*buffer.frame));
    const Var<float> v = model_.motion_estimator()(cur, ref, false);
    const auto motion = model_.motion_codec().encode(v);
    const Var<float> f_pred = model_.compensation()(motion.out, buffer.features);
    const auto ctx = model_.context().encode_and_code(cur[0], f_pred);

    CodedFrame out;
    out.record.type = FrameType::P;
    out.record.substreams = {motion.hyper.bytes, motion.main.bytes, ctx.hyper.bytes};
    std::vector<double> bits{motion.hyper.model_bits, motion.main.model_bits, ctx.hyper.model_bits};
    for (const auto& s : ctx.segments) {
      out.record.substreams.push_back(s.bytes);
      bits.push_back(s.model_bits);
    }
    out.record.crc = record_crc(out.record);
    out.recon = clamp01(model_.reconstructor()(ctx.f_hat).value());
    out.latents.tensors = {motion.z_hat, motion.y_hat, ctx.s_hat, ctx.c_hat};
    out.stats = make_stats(out.record, bits, original);
    out.context_report = channel_entropy_report(ctx.c_hat, ctx.mu, ctx.sigma, model_.context().groups());
    return out;
  }

  /// Throws CrcError when the record fails its checksum.
  DecodedFrame decode_p_frame(const FrameRecord& r, const ReconBuffer& buffer) const {
    if (!buffer.ready()) throw std::logic_error("P frame decoded without a reference frame");
    check_record(r, FrameType::P);
    NoGradGuard guard;
    const int h = buffer.frame->h(), w = buffer.frame->w();
    const auto dims = model_.motion_codec().dims(h, w);
    const auto motion = model_.motion_codec().decode(r.substreams[0], r.substreams[1], dims);
    const Var<float> f_pred = model_.compensation()(motion.out, buffer.features);
    std::vector<std::span<const uint8_t>> segments;
    for (size_t i = 3; i < r.substreams.size(); ++i) segments.emplace_back(r.substreams[i]);
    const auto& ctx_model = model_.context();
    const auto ctx = ctx_model.decode_from(r.substreams[2], segments, ctx_model.latent_shape(h, w),
                                           ctx_model.hyper_shape(h, w), f_pred);
    DecodedFrame out;
    out.recon = clamp01(model_.reconstructor()(ctx.f_hat).value());
    out.latents.tensors = {motion.z_hat, motion.y_hat, ctx.s_hat, ctx.c_hat};
    out.context_report = channel_entropy_report(ctx.c_hat, ctx.mu, ctx.sigma, ctx_model.groups());
    return out;
  }

  void update_buffer(ReconBuffer& buffer, const Frame& recon) const {
    NoGradGuard guard;
    buffer.frame = recon;
    buffer.features = model_.extractor().level0(constant(recon));
  }

  struct EncodedSequence {
    Container container;
    std::vector<CodedFrame> frames;  // recon is padded
  };

  EncodedSequence encode_sequence(const RawSequence& seq, int gop_size) const {
    if (seq.frames.empty()) throw std::invalid_argument("encode_sequence: empty sequence");
    check_header_range(seq.width, seq.height, static_cast<int>(seq.frames.size()), gop_size);
    EncodedSequence out;
    out.container.header = {static_cast<uint16_t>(seq.width), static_cast<uint16_t>(seq.height),
                            static_cast<uint16_t>(seq.frames.size()), static_cast<uint8_t>(gop_size),
                            static_cast<uint8_t>(lambda_id_for(model_.config().lambda))};
    const auto schedule = gop_schedule(static_cast<int>(seq.frames.size()), gop_size);
    ReconBuffer buffer;
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      auto [padded, dims] = pad_to_multiple(seq.frames[i], CodecConfig::kPadMultiple);
      CodedFrame f;
      if (schedule[i] == FrameType::I) {
        buffer.reset();
        f = encode_i_frame(padded, dims);
      } else {
        f = encode_p_frame(padded, buffer, dims);
      }
      update_buffer(buffer, f.recon);
      out.container.frames.push_back(f.record);
      out.frames.push_back(std::move(f));
    }
    return out;
  }

  struct DecodedSequence {
    RawSequence sequence;               // cropped to the original size
    std::vector<DecodedFrame> frames;   // padded reconstructions and latents
    std::vector<bool> concealed;
  };

  /// A frame failing its CRC is replaced by the previous reconstruction (or
  /// mid-grey if there is none); decoding resumes from there.
  DecodedSequence decode_sequence(const Container& c) const {
    const int h = pad_up(c.header.height), w = pad_up(c.header.width);
    DecodedSequence out;
    out.sequence.width = c.header.width;
    out.sequence.height = c.header.height;
    ReconBuffer buffer;
    for (const auto& r : c.frames) {
      DecodedFrame d;
      bool concealed = false;
      try {
        if (r.type == FrameType::I) {
          buffer.reset();
          d = decode_i_frame(r, h, w);
        } else {
          d = decode_p_frame(r, buffer);
        }
      } catch (const CrcError&) {
        concealed = true;
        d.recon = buffer.ready() ? *buffer.frame : make_frame(h, w, 0.5f);
      }
      update_buffer(buffer, d.recon);
      out.sequence.frames.push_back(crop(d.recon, PadInfo{c.header.height, c.header.width}));
      out.concealed.push_back(concealed);
      out.frames.push_back(std::move(d));
    }
    return out;
  }

 private:
  static int pad_up(int v) { return (v + CodecConfig::kPadMultiple - 1) / CodecConfig::kPadMultiple * CodecConfig::kPadMultiple; }

  static void check_dims(const Frame& x) {
    require_shape(x.n() == 1 && x.c() == 3 && x.h() % CodecConfig::kPadMultiple == 0 &&
                      x.w() % CodecConfig::kPadMultiple == 0,
                  "codec input must be a padded RGB frame, got " + x.shape().str());
  }

  static void require_buffer(const ReconBuffer& buffer, const Frame& x) {
    if (!buffer.ready()) throw std::logic_error("P frame coded without a reference frame");
    require_shape(buffer.frame->shape() == x.shape(), "reference frame " + buffer.frame->shape().str() + " vs " + x.shape().str());
  }

  static void check_record(const FrameRecord& r, FrameType expected) {
    if (r.type != expected) throw FormatError("unexpected frame type");
    if (r.substreams.size() != static_cast<size_t>(substream_count(r.type))) throw FormatError("wrong substream count");
    if (record_crc(r) != r.crc) throw CrcError("frame CRC mismatch");
  }

  static void check_header_range(int width, int height, int n, int gop) {
    if (width < 1 || height < 1 || width > 65535 || height > 65535) throw std::invalid_argument("frame size out of range");
    if (n > 65535) throw std::invalid_argument("too many frames for one container");
    if (gop < 1 || gop > 255) throw std::invalid_argument("gop size must be in [1, 255]");
  }

  static FrameStats make_stats(const FrameRecord& r, std::vector<double> model_bits, PadInfo original) {
    FrameStats s;
    s.type = r.type;
    for (const auto& b : r.substreams) s.substream_bytes.push_back(b.size());
    s.model_bits = std::move(model_bits);
    s.bits = 8.0 * static_cast<double>(r.payload_bytes());
    s.bpp = s.bits / (static_cast<double>(original.height) * original.width);
    return s;
  }

  const VideoModel<float>& model_;
};

}  // namespace mstc
