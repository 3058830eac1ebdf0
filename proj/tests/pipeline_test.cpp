#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mstc/checkpoint.hpp"
#include "mstc/pipeline.hpp"
#include "mstc/report.hpp"
#include "mstc/synthetic.hpp"
#include "support/gradcheck.hpp"
#include "support/model_helpers.hpp"

namespace mstc {
namespace {

using testing::tiny_config;

RawSequence noise_clip(int n, int h, int w, std::mt19937_64& rng) {
  RawSequence seq = moving_rectangle_clip(n, h, w, 3, 2, rng());
  std::uniform_real_distribution<float> d(-0.05f, 0.05f);
  for (auto& f : seq.frames)
    for (auto& v : f.span()) v = std::clamp(v + d(rng), 0.0f, 1.0f);
  return seq;
}

void expect_bit_identical(const Tensor<float>& a, const Tensor<float>& b) {
  ASSERT_EQ(a.shape(), b.shape());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
}

class PipelineTest : public ::testing::Test {
 protected:
  PipelineTest() : model_(tiny_config(5)), codec_(model_) {}
  VideoModel<float> model_;
  Codec codec_;
};

TEST_F(PipelineTest, IntraRoundTripAndAccounting) {
  std::mt19937_64 rng(1);
  const auto seq = noise_clip(1, 64, 64, rng);
  const auto coded = codec_.encode_i_frame(seq.frames[0], PadInfo{64, 64});
  ASSERT_EQ(coded.record.substreams.size(), 2u);
  EXPECT_EQ(coded.stats.bits, coded.stats.group_bits("intra") + coded.stats.group_bits("intra_hyper"));
  EXPECT_EQ(coded.stats.bits, 8.0 * static_cast<double>(coded.record.payload_bytes()));
  EXPECT_DOUBLE_EQ(coded.stats.bpp, coded.stats.bits / (64.0 * 64.0));
  const auto dec = codec_.decode_i_frame(coded.record, 64, 64);
  EXPECT_EQ(dec.recon.shape(), (Shape{1, 3, 64, 64}));
  expect_bit_identical(dec.recon, coded.recon);
  for (size_t i = 0; i < 2; ++i) expect_bit_identical(dec.latents.tensors[i], coded.latents.tensors[i]);
}

TEST_F(PipelineTest, InterRoundTripAndAccounting) {
  std::mt19937_64 rng(2);
  const auto seq = noise_clip(2, 64, 128, rng);
  ReconBuffer enc_buf, dec_buf;
  const auto i_frame = codec_.encode_i_frame(seq.frames[0], PadInfo{64, 128});
  codec_.update_buffer(enc_buf, i_frame.recon);
  codec_.update_buffer(dec_buf, codec_.decode_i_frame(i_frame.record, 64, 128).recon);

  const auto p = codec_.encode_p_frame(seq.frames[1], enc_buf, PadInfo{64, 128});
  ASSERT_EQ(p.record.substreams.size(), 11u);
  const double groups = p.stats.group_bits("motion") + p.stats.group_bits("motion_hyper") +
                        p.stats.group_bits("context") + p.stats.group_bits("context_hyper");
  EXPECT_EQ(p.stats.bits, groups);
  EXPECT_DOUBLE_EQ(p.stats.bpp, p.stats.bits / (64.0 * 128.0));
  for (size_t i = 0; i < p.stats.model_bits.size(); ++i) {
    EXPECT_GE(8.0 * p.stats.substream_bytes[i], p.stats.model_bits[i]);
    EXPECT_LE(8.0 * p.stats.substream_bytes[i], p.stats.model_bits[i] + 32);
  }

  const auto d = codec_.decode_p_frame(p.record, dec_buf);
  expect_bit_identical(d.recon, p.recon);
  ASSERT_EQ(d.latents.tensors.size(), 4u);
  for (size_t i = 0; i < 4; ++i) expect_bit_identical(d.latents.tensors[i], p.latents.tensors[i]);
  EXPECT_EQ(d.context_report.total_bits, p.context_report.total_bits);
}

TEST_F(PipelineTest, InterFrameErrors) {
  std::mt19937_64 rng(3);
  const auto seq = noise_clip(2, 64, 64, rng);
  ReconBuffer empty;
  EXPECT_THROW(codec_.encode_p_frame(seq.frames[1], empty, PadInfo{64, 64}), std::logic_error);

  ReconBuffer buf;
  codec_.update_buffer(buf, codec_.encode_i_frame(seq.frames[0], PadInfo{64, 64}).recon);
  auto p = codec_.encode_p_frame(seq.frames[1], buf, PadInfo{64, 64});
  EXPECT_THROW(codec_.decode_p_frame(p.record, empty), std::logic_error);
  p.record.substreams[1].push_back(0x5a);
  EXPECT_THROW(codec_.decode_p_frame(p.record, buf), CrcError);
}

TEST_F(PipelineTest, SequenceGopAndPadding) {
  std::mt19937_64 rng(4);
  const auto seq = noise_clip(30, 65, 70, rng);
  const auto enc = codec_.encode_sequence(seq, 10);
  for (int i = 0; i < 30; ++i)
    EXPECT_EQ(enc.container.frames[static_cast<size_t>(i)].type, i % 10 == 0 ? FrameType::I : FrameType::P);
  const auto dec = codec_.decode_sequence(enc.container);
  ASSERT_EQ(dec.sequence.frames.size(), 30u);
  for (int i = 0; i < 30; ++i) {
    EXPECT_EQ(dec.sequence.frames[static_cast<size_t>(i)].shape(), (Shape{1, 3, 65, 70}));
    expect_bit_identical(dec.frames[static_cast<size_t>(i)].recon, enc.frames[static_cast<size_t>(i)].recon);
    EXPECT_DOUBLE_EQ(enc.frames[static_cast<size_t>(i)].stats.bpp,
                     enc.frames[static_cast<size_t>(i)].stats.bits / (65.0 * 70.0));
  }
}

TEST_F(PipelineTest, ContainerFraming) {
  std::mt19937_64 rng(5);
  const auto enc = codec_.encode_sequence(noise_clip(4, 64, 64, rng), 3);
  const auto bytes = enc.container.serialize();
  size_t records = 0;
  for (const auto& r : enc.container.frames) records += r.serialized_bytes();
  EXPECT_EQ(bytes.size(), kHeaderBytes + records);
  EXPECT_EQ(enc.container.size_bytes(), bytes.size());
  EXPECT_EQ(enc.container.header.lambda_id, 3);  // 2048 in the default table
  EXPECT_EQ(enc.container.header.gop, 3);

  const auto back = Container::parse(bytes);
  EXPECT_EQ(back.serialize(), bytes);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Container::parse(bad), FormatError);
  EXPECT_THROW(Container::parse(std::span(bytes).first(bytes.size() - 3)), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(Container::parse(trailing), FormatError);
}

TEST_F(PipelineTest, CorruptionStaysInsideItsGop) {
  std::mt19937_64 rng(6);
  const auto enc = codec_.encode_sequence(noise_clip(12, 64, 64, rng), 10);
  const auto clean = codec_.decode_sequence(enc.container);
  Container broken = enc.container;
  broken.frames[3].substreams[3][0] ^= 0xff;
  const auto dirty = codec_.decode_sequence(Container::parse(broken.serialize()));
  EXPECT_TRUE(dirty.concealed[3]);
  for (int i : {0, 1, 2, 10, 11}) expect_bit_identical(dirty.sequence.frames[static_cast<size_t>(i)], clean.sequence.frames[static_cast<size_t>(i)]);
  expect_bit_identical(dirty.sequence.frames[3], clean.sequence.frames[2]);
}

TEST_F(PipelineTest, ReportMatchesContainer) {
  std::mt19937_64 rng(7);
  const auto seq = noise_clip(3, 64, 64, rng);
  const auto enc = codec_.encode_sequence(seq, 10);
  SequenceQuality q;
  const auto report = evaluate_sequence(seq, enc.container, model_, &q);
  double payload = 0;
  for (const auto& r : enc.container.frames) payload += 8.0 * static_cast<double>(r.payload_bytes());
  EXPECT_DOUBLE_EQ(report["bpp"].get<double>(), payload / (64.0 * 64.0 * 3));
  EXPECT_EQ(report["context_group_bits"].size(), 4u);
  EXPECT_EQ(report["frames"][1]["context_entropy"]["channel_bits"].size(), 128u);
  EXPECT_EQ(report["frames"].size(), 3u);
  EXPECT_GT(q.psnr, 0);
}

TEST(Checkpoint, ReloadReproducesEvalOutputs) {
  VideoModel<float> model(tiny_config(8));
  std::mt19937_64 rng(8);
  testing::randomize_params(model.store(), rng, 0.05, "compensation.offset_mask");
  const auto path = (std::filesystem::temp_directory_path() / "mstc_ckpt_test.ckpt").string();
  save_checkpoint(model, path, {{"note", "test"}});
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.header["extra"]["note"], "test");
  for (const auto& [name, v] : model.store().parameters())
    expect_bit_identical(loaded.model->store().parameters().at(name).value(), v.value());

  const auto seq = noise_clip(3, 64, 64, rng);
  const auto a = Codec(model).encode_sequence(seq, 10).container.serialize();
  const auto b = Codec(*loaded.model).encode_sequence(seq, 10).container.serialize();
  EXPECT_EQ(a, b);

  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

}  // namespace
}  // namespace mstc
