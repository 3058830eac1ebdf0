#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mstc/tensor.hpp"

namespace mstc {

/// One picture: [1, 3, H, W] RGB in [0, 1].
using Frame = Tensor<float>;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawSequence {
  std::vector<Frame> frames;
  int width = 0;
  int height = 0;
  double frame_rate = 30.0;
};

enum class VideoFormat { png_dir, yuv420 };

inline VideoFormat parse_video_format(const std::string& s) {
  if (s == "png" || s == "png_dir") return VideoFormat::png_dir;
  if (s == "yuv" || s == "yuv420") return VideoFormat::yuv420;
  throw std::invalid_argument("unknown video format " + s);
}

// BT.601 full range, 8-bit code values.
struct Yuv {
  double y, u, v;
};

inline Yuv rgb_to_yuv(double r, double g, double b) {
  return {0.299 * r + 0.587 * g + 0.114 * b, -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0,
          0.5 * r - 0.418688 * g - 0.081312 * b + 128.0};
}

inline std::array<double, 3> yuv_to_rgb(double y, double u, double v) {
  return {y + 1.402 * (v - 128.0), y - 0.344136 * (u - 128.0) - 0.714136 * (v - 128.0), y + 1.772 * (u - 128.0)};
}

inline uint8_t to_byte(double v) { return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

inline Frame make_frame(int height, int width, float fill = 0.f) { return Frame(Shape{1, 3, height, width}, fill); }

/// Frame from 8-bit Y, U, V planes; chroma is (w/2)x(h/2), upsampled by repetition.
inline Frame frame_from_i420(const uint8_t* y, const uint8_t* u, const uint8_t* v, int width, int height) {
  Frame f = make_frame(height, width);
  const int cw = width / 2;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const size_t ci = static_cast<size_t>(r / 2) * cw + c / 2;
      const auto rgb = yuv_to_rgb(y[static_cast<size_t>(r) * width + c], u[ci], v[ci]);
      for (int ch = 0; ch < 3; ++ch) f.at(0, ch, r, c) = static_cast<float>(std::clamp(rgb[ch] / 255.0, 0.0, 1.0));
    }
  return f;
}

/// I420 bytes of a frame; chroma is the mean over each 2x2 block.
inline std::vector<uint8_t> frame_to_i420(const Frame& f) {
  const int h = f.h(), w = f.w();
  if (h % 2 || w % 2) throw IoError("yuv420 needs even dimensions");
  std::vector<uint8_t> out(static_cast<size_t>(w) * h * 3 / 2);
  uint8_t* yp = out.data();
  uint8_t* up = yp + static_cast<size_t>(w) * h;
  uint8_t* vp = up + static_cast<size_t>(w / 2) * (h / 2);
  for (int r = 0; r < h; r += 2)
    for (int c = 0; c < w; c += 2) {
      double us = 0, vs = 0;
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) {
          const Yuv p = rgb_to_yuv(255.0 * f.at(0, 0, r + dr, c + dc), 255.0 * f.at(0, 1, r + dr, c + dc),
                                   255.0 * f.at(0, 2, r + dr, c + dc));
          yp[static_cast<size_t>(r + dr) * w + c + dc] = to_byte(p.y);
          us += p.u;
          vs += p.v;
        }
      const size_t ci = static_cast<size_t>(r / 2) * (w / 2) + c / 2;
      up[ci] = to_byte(us / 4);
      vp[ci] = to_byte(vs / 4);
    }
  return out;
}

inline Frame read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) throw IoError("cannot read png " + path + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode png " + path + ": " + image.message);
  }
  const int w = static_cast<int>(image.width), h = static_cast<int>(image.height);
  Frame f = make_frame(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch)
        f.at(0, ch, r, c) = buf[(static_cast<size_t>(r) * w + c) * 3 + ch] / 255.0f;
  return f;
}

inline void write_png(const std::string& path, const Frame& f) {
  const int h = f.h(), w = f.w();
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) buf[(static_cast<size_t>(r) * w + c) * 3 + ch] = to_byte(255.0 * f.at(0, ch, r, c));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write png " + path + ": " + image.message);
}

inline std::string png_frame_name(int index) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%05d.png", index);
  return name;
}

/// Reads a PNG directory (frame_%05d.png, in name order) or an I420 file.
/// For png_dir, width/height of 0 accept whatever the files hold; n_frames of 0
/// reads every frame present.
inline RawSequence load_sequence(const std::string& path, VideoFormat format, int width, int height, int n_frames) {
  namespace fs = std::filesystem;
  RawSequence seq;
  if (format == VideoFormat::png_dir) {
    if (!fs::is_directory(path)) throw IoError("no such directory " + path);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".png") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (n_frames > 0) {
      if (static_cast<int>(files.size()) < n_frames)
        throw IoError(path + " holds " + std::to_string(files.size()) + " frames, need " + std::to_string(n_frames));
      files.resize(static_cast<size_t>(n_frames));
    }
    if (files.empty()) throw IoError("no frame_*.png files in " + path);
    for (const auto& f : files) seq.frames.push_back(read_png(f));
    seq.height = seq.frames.front().h();
    seq.width = seq.frames.front().w();
    for (const auto& f : seq.frames)
      if (f.h() != seq.height || f.w() != seq.width) throw IoError("frames in " + path + " differ in size");
    if ((width > 0 && width != seq.width) || (height > 0 && height != seq.height))
      throw IoError("frames are " + std::to_string(seq.width) + "x" + std::to_string(seq.height) + ", expected " +
                    std::to_string(width) + "x" + std::to_string(height));
    return seq;
  }
  if (width <= 0 || height <= 0 || width % 2 || height % 2)
    throw IoError("yuv420 needs positive even dimensions, got " + std::to_string(width) + "x" + std::to_string(height));
  if (n_frames <= 0) throw IoError("yuv420 needs a frame count");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const size_t luma = static_cast<size_t>(width) * height, chroma = luma / 4;
  std::vector<uint8_t> buf(luma + 2 * chroma);
  for (int i = 0; i < n_frames; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw IoError(path + " is truncated at frame " + std::to_string(i));
    seq.frames.push_back(frame_from_i420(buf.data(), buf.data() + luma, buf.data() + luma + chroma, width, height));
  }
  seq.width = width;
  seq.height = height;
  return seq;
}

inline void save_sequence(const RawSequence& seq, const std::string& path, VideoFormat format) {
  namespace fs = std::filesystem;
  if (format == VideoFormat::png_dir) {
    fs::create_directories(path);
    for (size_t i = 0; i < seq.frames.size(); ++i)
      write_png((fs::path(path) / png_frame_name(static_cast<int>(i))).string(), seq.frames[i]);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path);
  for (const auto& f : seq.frames) {
    const auto bytes = frame_to_i420(f);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

struct PadInfo {
  int height = 0;
  int width = 0;
};

/// Extends a frame to the next multiple of `multiple` by replicating its last row and column.
inline std::pair<Frame, PadInfo> pad_to_multiple(const Frame& f, int multiple) {
  if (multiple < 1) throw std::invalid_argument("pad multiple must be >= 1");
  const int h = f.h(), w = f.w();
  const int ph = (h + multiple - 1) / multiple * multiple, pw = (w + multiple - 1) / multiple * multiple;
  Frame out(Shape{f.n(), f.c(), ph, pw});
  for (int n = 0; n < f.n(); ++n)
    for (int c = 0; c < f.c(); ++c)
      for (int r = 0; r < ph; ++r)
        for (int x = 0; x < pw; ++x) out.at(n, c, r, x) = f.at(n, c, std::min(r, h - 1), std::min(x, w - 1));
  return {std::move(out), PadInfo{h, w}};
}

inline Frame crop(const Frame& f, PadInfo dims) {
  Frame out(Shape{f.n(), f.c(), dims.height, dims.width});
  for (int n = 0; n < f.n(); ++n)
    for (int c = 0; c < f.c(); ++c)
      for (int r = 0; r < dims.height; ++r)
        std::copy_n(f.plane(n, c) + static_cast<size_t>(r) * f.w(), dims.width, out.plane(n, c) + static_cast<size_t>(r) * dims.width);
  return out;
}

enum class FrameType : uint8_t { I = 0, P = 1 };

/// Frame i is intra coded iff i is a multiple of the GOP size.
inline std::vector<FrameType> gop_schedule(int n_frames, int gop_size) {
  if (n_frames < 1 || gop_size < 1) throw std::invalid_argument("gop_schedule needs positive arguments");
  std::vector<FrameType> out(static_cast<size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) out[static_cast<size_t>(i)] = i % gop_size == 0 ? FrameType::I : FrameType::P;
  return out;
}

}  // namespace mstc
