// mstc: command line front end for the learned video codec.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mstc/mstc.hpp"

namespace {

using namespace mstc;
using nlohmann::json;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path);
  out << j.dump(2) << '\n';
}

struct SourceOptions {
  std::string path;
  std::string format = "png";
  int width = 0;
  int height = 0;
  int frames = 0;

  void add_to(CLI::App* app, const std::string& flag) {
    app->add_option(flag, path, "PNG directory (frame_00000.png, ...) or raw I420 file")->required();
    app->add_option("--format", format, "png or yuv420")->check(CLI::IsMember({"png", "png_dir", "yuv", "yuv420"}));
    app->add_option("--width", width, "frame width (required for yuv420)");
    app->add_option("--height", height, "frame height (required for yuv420)");
    app->add_option("--frames", frames, "frames to read; 0 reads all PNGs");
  }

  RawSequence load() const { return load_sequence(path, parse_video_format(format), width, height, frames); }
};

int cmd_synth(const std::string& out, const std::string& format, int frames, int height, int width, int dx, int dy,
              uint64_t seed) {
  save_sequence(moving_rectangle_clip(frames, height, width, dx, dy, seed), out, parse_video_format(format));
  std::cout << json{{"frames", frames}, {"width", width}, {"height", height}, {"out", out}}.dump() << '\n';
  return 0;
}

int cmd_init(const std::string& config_path, const std::string& out, std::optional<double> lambda) {
  CodecConfig cfg = config_path.empty() ? CodecConfig{} : load_config(config_path);
  if (lambda) cfg.lambda = *lambda;
  cfg.validate();
  VideoModel<float> model(cfg);
  save_checkpoint(model, out, {{"stage", "init"}});
  std::cout << json{{"parameters", model.store().parameter_count()}, {"lambda", cfg.lambda}, {"out", out}}.dump() << '\n';
  return 0;
}

int cmd_encode(const SourceOptions& src, int gop, std::optional<double> lambda, const std::string& ckpt,
               const std::string& out) {
  const auto loaded = load_checkpoint(ckpt);
  const double model_lambda = loaded.model->config().lambda;
  if (lambda && *lambda != model_lambda)
    throw std::invalid_argument("checkpoint was trained for lambda " + std::to_string(model_lambda) + ", not " +
                                std::to_string(*lambda));
  const RawSequence seq = src.load();
  const auto enc = Codec(*loaded.model).encode_sequence(seq, gop > 0 ? gop : loaded.model->config().gop_size);
  const auto bytes = enc.container.serialize();
  write_file(out, bytes);
  std::cout << json{{"frames", seq.frames.size()},
                    {"container_bytes", bytes.size()},
                    {"bpp", container_stats(enc.container)["bpp"]}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_decode(const std::string& in, const std::string& ckpt, const std::string& out, const std::string& format) {
  const Container c = Container::parse(read_file(in));
  const auto loaded = load_checkpoint(ckpt);
  const int expected = lambda_id_for(loaded.model->config().lambda);
  if (c.header.lambda_id != expected)
    throw std::invalid_argument("container lambda id " + std::to_string(c.header.lambda_id) +
                                " does not match the checkpoint's " + std::to_string(expected));
  const auto dec = Codec(*loaded.model).decode_sequence(c);
  save_sequence(dec.sequence, out, parse_video_format(format));
  const auto concealed = std::count(dec.concealed.begin(), dec.concealed.end(), true);
  std::cout << json{{"frames", dec.sequence.frames.size()}, {"concealed", concealed}, {"out", out}}.dump() << '\n';
  return 0;
}

int cmd_stats(const std::string& in) {
  std::cout << container_stats(Container::parse(read_file(in))).dump(2) << '\n';
  return 0;
}

int cmd_metrics(const SourceOptions& ref, const SourceOptions& dist) {
  const RawSequence a = ref.load(), b = dist.load();
  if (a.frames.size() != b.frames.size()) throw std::invalid_argument("reference and distorted frame counts differ");
  json frames = json::array();
  double psnr_sum = 0, msssim_sum = 0;
  for (size_t i = 0; i < a.frames.size(); ++i) {
    const double p = psnr(a.frames[i], b.frames[i]);
    const double m = ms_ssim(a.frames[i], b.frames[i]);
    frames.push_back({{"psnr", p}, {"msssim", m}});
    psnr_sum += p;
    msssim_sum += m;
  }
  const double n = static_cast<double>(a.frames.size());
  std::cout << json{{"psnr", psnr_sum / n}, {"msssim", msssim_sum / n}, {"frames", frames}}.dump(2) << '\n';
  return 0;
}

int cmd_bdrate(const std::string& anchor, const std::string& test, const std::string& metric,
               const std::string& method) {
  const double v = bd_rate(read_rd_csv(anchor), read_rd_csv(test), parse_quality_metric(metric), parse_bd_method(method));
  std::cout << json{{"bd_rate_percent", v}, {"metric", metric}, {"method", method}}.dump() << '\n';
  return 0;
}

int cmd_report(const std::string& container, const SourceOptions& src, const std::string& ckpt, const std::string& out) {
  const Container c = Container::parse(read_file(container));
  SourceOptions s = src;
  if (s.frames == 0) s.frames = c.header.n_frames;
  if (s.width == 0) s.width = c.header.width;
  if (s.height == 0) s.height = c.header.height;
  const auto loaded = load_checkpoint(ckpt);
  write_json(out, evaluate_sequence(s.load(), c, *loaded.model));
  return 0;
}

int cmd_rdcurve(const SourceOptions& src, const std::vector<std::string>& ckpts, int gop, const std::string& out) {
  const RawSequence seq = src.load();
  std::vector<RDPoint> points;
  for (const auto& path : ckpts) {
    const auto loaded = load_checkpoint(path);
    const auto enc = Codec(*loaded.model).encode_sequence(seq, gop > 0 ? gop : loaded.model->config().gop_size);
    SequenceQuality q;
    evaluate_sequence(seq, enc.container, *loaded.model, &q);
    points.push_back({loaded.model->config().lambda, q.bpp, q.psnr, q.msssim});
  }
  std::sort(points.begin(), points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  write_rd_csv(out, points);
  std::cout << json{{"points", points.size()}, {"out", out}}.dump() << '\n';
  return 0;
}

struct TrainOptions {
  std::string stage = "single_frame";
  std::vector<std::string> clips;
  std::string format = "png";
  int width = 0, height = 0, frames = 0;
  int synthetic = 0;
  std::string config;
  std::string init;
  std::string out;
  std::string log;
  std::string eval_log;
  std::optional<int> steps, batch, crop, t;
  std::optional<double> lr, lambda;
  uint64_t seed = 0;
  bool detach = false;
  int eval_every = 0;
};

// Eval-mode coded bpp of one clip, for tracking the gap to the training rate estimate.
double coded_bpp(const VideoModel<float>& model, const RawSequence& clip) {
  const auto enc = Codec(model).encode_sequence(clip, static_cast<int>(clip.frames.size()));
  const double pixels = static_cast<double>(clip.width) * clip.height * static_cast<double>(clip.frames.size());
  return 8.0 * static_cast<double>(enc.container.size_bytes() - kHeaderBytes) / pixels;
}

int cmd_train(const TrainOptions& o) {
  std::unique_ptr<VideoModel<float>> model;
  if (!o.init.empty()) {
    model = std::move(load_checkpoint(o.init).model);
  } else {
    CodecConfig cfg = o.config.empty() ? CodecConfig{} : load_config(o.config);
    if (o.lambda) cfg.lambda = *o.lambda;
    model = std::make_unique<VideoModel<float>>(cfg);
  }
  TrainConfig tc = TrainConfig::defaults(parse_stage(o.stage));
  if (o.steps) tc.steps = *o.steps;
  if (o.batch) tc.batch = *o.batch;
  if (o.crop) tc.crop = *o.crop;
  if (o.t) tc.frames = *o.t;
  if (o.lr) tc.learning_rate = *o.lr;
  tc.lambda = o.lambda.value_or(model->config().lambda);
  tc.seed = o.seed;
  tc.detach_reference = o.detach;
  tc.log_path = o.log;

  std::vector<RawSequence> clips;
  for (const auto& p : o.clips) clips.push_back(load_sequence(p, parse_video_format(o.format), o.width, o.height, o.frames));
  if (o.synthetic > 0) clips.push_back(moving_rectangle_clip(o.synthetic, 64, 64));
  if (clips.empty()) throw std::invalid_argument("train: give --clip paths or --synthetic N");

  Trainer trainer(*model, clips, tc);
  std::ofstream gap_log;
  if (o.eval_every > 0 && !o.eval_log.empty()) gap_log.open(o.eval_log, std::ios::app);
  const auto curve = trainer.run([&](const StepStats& s) {
    if (o.eval_every > 0 && (s.step + 1) % o.eval_every == 0) {
      const json line{{"step", s.step}, {"train_rate", s.rate}, {"coded_bpp", coded_bpp(*model, clips.front())}};
      if (gap_log) gap_log << line.dump() << '\n' << std::flush;
      std::cerr << line.dump() << '\n';
    }
  });
  save_checkpoint(*model, o.out, {{"stage", o.stage}, {"steps", tc.steps}});
  const size_t last = curve.empty() ? 0 : curve.size() - 1;
  std::cout << json{{"stage", o.stage},
                    {"steps", curve.size()},
                    {"final_loss", curve.empty() ? 0.0 : smoothed_loss(curve, last, 50)},
                    {"out", o.out}}
                   .dump()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned video codec with multiscale motion and contextual entropy coding"};
  app.require_subcommand(1);
  std::function<int()> run;

  // synth
  std::string synth_out, synth_format = "png";
  int synth_frames = 7, synth_h = 64, synth_w = 64, synth_dx = 3, synth_dy = 2;
  uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic moving-rectangle clip");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--format", synth_format)->check(CLI::IsMember({"png", "png_dir", "yuv", "yuv420"}));
  synth->add_option("--frames", synth_frames);
  synth->add_option("--height", synth_h);
  synth->add_option("--width", synth_w);
  synth->add_option("--dx", synth_dx);
  synth->add_option("--dy", synth_dy);
  synth->add_option("--seed", synth_seed);
  synth->callback([&] {
    run = [&] { return cmd_synth(synth_out, synth_format, synth_frames, synth_h, synth_w, synth_dx, synth_dy, synth_seed); };
  });

  // init
  std::string init_config, init_out;
  std::optional<double> init_lambda;
  auto* init = app.add_subcommand("init", "Write a randomly initialised checkpoint");
  init->add_option("--config", init_config, "codec config JSON");
  init->add_option("--lambda", init_lambda);
  init->add_option("--out", init_out)->required();
  init->callback([&] { run = [&] { return cmd_init(init_config, init_out, init_lambda); }; });

  // encode
  SourceOptions enc_src;
  int enc_gop = 0;
  std::optional<double> enc_lambda;
  std::string enc_ckpt, enc_out;
  auto* encode = app.add_subcommand("encode", "Encode a sequence into a container");
  enc_src.add_to(encode, "--input");
  encode->add_option("--gop", enc_gop, "GOP size; 0 uses the checkpoint's");
  encode->add_option("--lambda", enc_lambda, "must match the checkpoint");
  encode->add_option("--checkpoint", enc_ckpt)->required();
  encode->add_option("--out", enc_out)->required();
  encode->callback([&] { run = [&] { return cmd_encode(enc_src, enc_gop, enc_lambda, enc_ckpt, enc_out); }; });

  // decode
  std::string dec_in, dec_ckpt, dec_out, dec_format = "png";
  auto* decode = app.add_subcommand("decode", "Decode a container");
  decode->add_option("--in", dec_in)->required();
  decode->add_option("--checkpoint", dec_ckpt)->required();
  decode->add_option("--out", dec_out)->required();
  decode->add_option("--format", dec_format)->check(CLI::IsMember({"png", "png_dir", "yuv", "yuv420"}));
  decode->callback([&] { run = [&] { return cmd_decode(dec_in, dec_ckpt, dec_out, dec_format); }; });

  // stats
  std::string stats_in;
  auto* stats = app.add_subcommand("stats", "Per-frame bpp and substream breakdown as JSON");
  stats->add_option("--in", stats_in)->required();
  stats->callback([&] { run = [&] { return cmd_stats(stats_in); }; });

  // metrics
  SourceOptions met_ref, met_dist;
  auto* metrics = app.add_subcommand("metrics", "PSNR and MS-SSIM between two sequences");
  metrics->add_option("--ref", met_ref.path)->required();
  metrics->add_option("--dist", met_dist.path)->required();
  metrics->add_option("--format", met_ref.format)->check(CLI::IsMember({"png", "png_dir", "yuv", "yuv420"}));
  metrics->add_option("--width", met_ref.width);
  metrics->add_option("--height", met_ref.height);
  metrics->add_option("--frames", met_ref.frames);
  metrics->callback([&] {
    run = [&] {
      SourceOptions d = met_ref;
      d.path = met_dist.path;
      return cmd_metrics(met_ref, d);
    };
  });

  // bdrate
  std::string bd_anchor, bd_test, bd_metric = "psnr", bd_method = "pchip";
  auto* bdrate = app.add_subcommand("bdrate", "BD-rate of a test RD curve against an anchor (CSV lambda,bpp,psnr,msssim)");
  bdrate->add_option("--anchor", bd_anchor)->required();
  bdrate->add_option("--test", bd_test)->required();
  bdrate->add_option("--metric", bd_metric)->check(CLI::IsMember({"psnr", "msssim", "ms-ssim"}));
  bdrate->add_option("--method", bd_method)->check(CLI::IsMember({"pchip", "cubic"}));
  bdrate->callback([&] { run = [&] { return cmd_bdrate(bd_anchor, bd_test, bd_metric, bd_method); }; });

  // report
  std::string rep_container, rep_ckpt, rep_out = "-";
  SourceOptions rep_src;
  auto* report = app.add_subcommand("report", "Decode and evaluate a container against its source");
  report->add_option("--container", rep_container)->required();
  rep_src.add_to(report, "--source");
  report->add_option("--checkpoint", rep_ckpt)->required();
  report->add_option("--out", rep_out, "JSON path, - for stdout");
  report->callback([&] { run = [&] { return cmd_report(rep_container, rep_src, rep_ckpt, rep_out); }; });

  // rdcurve
  SourceOptions rd_src;
  std::vector<std::string> rd_ckpts;
  int rd_gop = 0;
  std::string rd_out;
  auto* rdcurve = app.add_subcommand("rdcurve", "One RD point per checkpoint (lambda grid) as CSV");
  rd_src.add_to(rdcurve, "--input");
  rdcurve->add_option("--checkpoint", rd_ckpts)->required();
  rdcurve->add_option("--gop", rd_gop);
  rdcurve->add_option("--out", rd_out)->required();
  rdcurve->callback([&] { run = [&] { return cmd_rdcurve(rd_src, rd_ckpts, rd_gop, rd_out); }; });

  // train
  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--stage", tr.stage)->check(CLI::IsMember({"intra", "single_frame", "cascaded", "msssim_finetune"}));
  train->add_option("--clip", tr.clips, "training clip (repeatable)");
  train->add_option("--format", tr.format)->check(CLI::IsMember({"png", "png_dir", "yuv", "yuv420"}));
  train->add_option("--width", tr.width);
  train->add_option("--height", tr.height);
  train->add_option("--frames", tr.frames);
  train->add_option("--synthetic", tr.synthetic, "add a synthetic 64x64 clip of N frames");
  train->add_option("--config", tr.config, "codec config JSON for a fresh model");
  train->add_option("--init", tr.init, "checkpoint to continue from");
  train->add_option("--out", tr.out, "checkpoint to write")->required();
  train->add_option("--log", tr.log, "JSON-lines training log");
  train->add_option("--steps", tr.steps);
  train->add_option("--batch", tr.batch);
  train->add_option("--crop", tr.crop, "crop size, 0 for whole frames");
  train->add_option("--T", tr.t, "P frames in the loss");
  train->add_option("--lr", tr.lr);
  train->add_option("--lambda", tr.lambda);
  train->add_option("--seed", tr.seed);
  train->add_flag("--detach", tr.detach, "cut gradients between unrolled frames");
  train->add_option("--eval-every", tr.eval_every, "measure coded bpp against the rate estimate every N steps");
  train->add_option("--eval-log", tr.eval_log, "JSON-lines file for those measurements");
  train->callback([&] { run = [&] { return cmd_train(tr); }; });

  CLI11_PARSE(app, argc, argv);
  try {
    return run();
  } catch (const std::exception& e) {
    std::cerr << "mstc: " << e.what() << '\n';
    return 1;
  }
}
