// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance              criteria 1-7 and 9-11
//   acceptance --only 8     the overfit run and its single-scale ablation
//   acceptance --only 1,4   any subset

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mstc/mstc.hpp"
#include "mstc/model/motion_comp.hpp"
#include "mstc/model/ms_mam.hpp"
#include "support/gradcheck.hpp"
#include "support/model_helpers.hpp"

namespace {

using namespace mstc;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

RawSequence noisy_clip(int n, int h, int w, std::mt19937_64& rng) {
  RawSequence seq = moving_rectangle_clip(n, h, w, 1 + static_cast<int>(rng() % 5), static_cast<int>(rng() % 5) - 2, rng());
  std::uniform_real_distribution<float> d(-0.08f, 0.08f);
  for (auto& f : seq.frames)
    for (auto& v : f.span()) v = std::clamp(v + d(rng), 0.0f, 1.0f);
  return seq;
}

std::unique_ptr<VideoModel<float>> random_model(uint64_t seed, std::mt19937_64& rng) {
  auto m = std::make_unique<VideoModel<float>>(testing::tiny_config(seed));
  // Default initialisation collapses to a constant picture; random weights make
  // every reconstruction depend on its input.
  testing::randomize_params(m->store(), rng, 0.3);
  return m;
}

// ---- 1 ----
Outcome bit_exact_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  int frames = 0, latents = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const int h = 64 + static_cast<int>(rng() % 65), w = 64 + static_cast<int>(rng() % 129);
    const auto model = random_model(1000 + inst, rng);
    const Codec codec(*model);
    const auto seq = noisy_clip(3, h, w, rng);
    const auto enc = codec.encode_sequence(seq, 10);
    const auto dec = codec.decode_sequence(Container::parse(enc.container.serialize()));
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      if (!same_bits(enc.frames[i].recon, dec.frames[i].recon))
        return {false, fmt("instance %d (%dx%d) frame %zu reconstruction differs", inst, w, h, i)};
      const auto& a = enc.frames[i].latents.tensors;
      const auto& b = dec.frames[i].latents.tensors;
      if (a.size() != b.size()) return {false, fmt("instance %d frame %zu latent count differs", inst, i)};
      for (size_t k = 0; k < a.size(); ++k)
        if (!same_bits(a[k], b[k])) return {false, fmt("instance %d frame %zu latent %zu differs", inst, i, k)};
      latents += static_cast<int>(a.size());
      ++frames;
    }
  }
  const double s = seconds_since(t0);
  return {s < 600, fmt("50 instances, %d frames, %d latent tensors identical; %.1f s (limit 600 s)", frames, latents, s)};
}

// ---- 2 ----
Outcome rate_accounting() {
  std::mt19937_64 rng(202);
  int segments = 0;
  double worst_over = -1e9, worst_under = 1e9;
  for (int c = 0; c < 200; ++c) {
    const auto model = random_model(2000 + c / 10, rng);
    const Codec codec(*model);
    const int h = 64 * (1 + static_cast<int>(rng() % 2)), w = 64 * (1 + static_cast<int>(rng() % 2));
    const auto seq = noisy_clip(2, h, w, rng);
    const PadInfo dims{h, w};
    ReconBuffer buf;
    const auto i_frame = codec.encode_i_frame(seq.frames[0], dims);
    codec.update_buffer(buf, i_frame.recon);
    const auto p_frame = codec.encode_p_frame(seq.frames[1], buf, dims);
    for (const auto* st : {&i_frame.stats, &p_frame.stats})
      for (size_t i = 0; i < st->model_bits.size(); ++i) {
        const double coded = 8.0 * static_cast<double>(st->substream_bytes[i]), model_bits = st->model_bits[i];
        worst_under = std::min(worst_under, coded - model_bits);
        worst_over = std::max(worst_over, coded - model_bits);
        if (coded < model_bits || coded > model_bits + 32)
          return {false, fmt("case %d segment %zu: %.0f coded bits vs %.3f model bits", c, i, coded, model_bits)};
        ++segments;
      }
  }
  return {true, fmt("200 cases, %d segments; coded - model bits in [%.3f, %.3f] (bound [0, 32])", segments, worst_under,
                    worst_over)};
}

// ---- 3 ----
TableModel random_table(std::mt19937_64& rng) {
  const int count = 1 + static_cast<int>(rng() % 512);
  const int shape = static_cast<int>(rng() % 3);
  std::vector<double> w(static_cast<size_t>(count) + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : w) v = shape == 0 ? u(rng) : shape == 1 ? std::pow(u(rng), 8.0) : std::exp(-20.0 * u(rng));
  w[0] *= 0.01;  // escape bucket
  double total = 0;
  for (double v : w) total += v;
  std::vector<double> cdf(static_cast<size_t>(count) + 2);
  for (int i = 1; i <= count + 1; ++i) cdf[static_cast<size_t>(i)] = cdf[static_cast<size_t>(i - 1)] + w[static_cast<size_t>(i - 1)] / total;
  return TableModel(static_cast<int>(rng() % 2001) - 1000, cdf);
}

Outcome coder_fuzz() {
  std::mt19937_64 rng(303);
  size_t symbols = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<TableModel> models;
    for (int m = 0; m < 1 + static_cast<int>(rng() % 4); ++m) models.push_back(random_table(rng));
    const int len = static_cast<int>(rng() % 64);
    std::vector<std::pair<size_t, int>> seq;
    for (int i = 0; i < len; ++i) {
      const size_t m = rng() % models.size();
      const auto& tm = models[m];
      int v = tm.lo() + static_cast<int>(rng() % static_cast<uint64_t>(tm.count()));
      if (rng() % 40 == 0) v = tm.lo() + static_cast<int>(rng() % 20000) - 10000;  // escapes both sides
      seq.emplace_back(m, v);
    }
    RangeEncoder enc;
    for (auto [m, v] : seq) encode_value(enc, models[m], v);
    const auto bytes = enc.finish();
    RangeDecoder dec(bytes);
    for (auto [m, v] : seq)
      if (decode_value(dec, models[m]) != v) return {false, fmt("trial %d does not round-trip", trial)};
    symbols += seq.size();
  }

  std::vector<double> cdf(258);
  for (int i = 2; i < 258; ++i) cdf[static_cast<size_t>(i)] = (i - 1) / 256.0;
  const TableModel uniform(0, cdf);
  RangeEncoder enc;
  std::vector<int> values(1024);
  for (auto& v : values) v = static_cast<int>(rng() % 256);
  for (int v : values) encode_value(enc, uniform, v);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (int v : values)
    if (decode_value(dec, uniform) != v) return {false, "uniform-256 stream does not round-trip"};
  return {bytes.size() <= 1034,
          fmt("10000 sequences (%zu symbols) exact; uniform-256: 1024 symbols in %zu bytes (limit 1034)", symbols, bytes.size())};
}

// ---- 4 ----
Outcome gaussian_rate_oracle() {
  constexpr double kOracle = 1.3848665342909896;  // -log2(Phi(0.5) - Phi(-0.5))
  const double table = gaussian_symbol_bits(0, 0, 1);
  auto one = [](double v) { return constant(Tensor<double>(Shape{1, 1, 1, 1}, v)); };
  const double train = gaussian_bits(one(0), one(0), one(1)).item();
  const double err = std::max(std::abs(table - kOracle), std::abs(train - kOracle));
  return {err < 1e-3, fmt("coding model %.10f bits, training estimate %.10f bits, oracle %.10f (tol 1e-3)", table, train,
                          kOracle)};
}

// ---- 5 ----
std::vector<Var<double>> params_with(const ParamStore<double>& store, const std::string& part) {
  std::vector<Var<double>> out;
  for (const auto& [name, v] : store.parameters())
    if (name.find(part) != std::string::npos) out.push_back(v);
  return out;
}

Outcome gradient_checks() {
  using testing::gradcheck;
  using testing::random_tensor;
  std::mt19937_64 rng(505);
  std::vector<std::pair<std::string, double>> errs;

  {
    auto x = parameter(random_tensor({1, 3, 8, 8}, rng, 0, 1));
    auto y = parameter(random_tensor({1, 3, 8, 8}, rng, 0, 1));
    auto r = parameter(random_tensor({1, 2, 4, 4}, rng));
    auto fn = [&](const std::vector<Var<double>>&) {
      return rd_loss<double>({x, x}, {y, add(y, constant(Tensor<double>(y.shape(), 0.01)))},
                             {{sum(square(r))}, {mean(r), sum(r)}}, 2048, Distortion::mse);
    };
    errs.emplace_back("rd_loss", gradcheck(fn, {x, y, r}));
  }
  {
    ParamStore<double> store(51);
    MotionCompensation<double> mc(store, "comp", 2, 4, 2);
    testing::randomize_params(store, rng, 0.4);
    auto v = parameter(random_tensor({1, 2, 4, 4}, rng));
    auto f = parameter(random_tensor({1, 4, 4, 4}, rng));
    auto fn = [&](const std::vector<Var<double>>&) { return testing::probe_sum(mc.warp(mc.offsets_and_masks(v), f)); };
    errs.emplace_back("dcn_warp", gradcheck(fn, {v, f, mc.offset_mask_weight(), mc.dcn_weight()}));
  }
  {
    ParamStore<double> store(52);
    FusionBlock<double> fb(store, "fb", 2, 3);
    testing::randomize_params(store, rng, 0.5);
    auto fine = parameter(random_tensor({2, 2, 8, 8}, rng));
    auto coarse = parameter(random_tensor({2, 2, 4, 4}, rng));
    auto inputs = params_with(store, "fb");
    inputs.push_back(fine);
    inputs.push_back(coarse);
    auto fn = [&](const std::vector<Var<double>>&) { return testing::probe_sum(fb(fine, coarse, true)); };
    errs.emplace_back("fusion_block", gradcheck(fn, inputs));
  }
  {
    ParamStore<double> store(53);
    MotionAwareEncoder<double> mae(store, "mae", 2, 3);
    testing::randomize_params(store, rng, 0.5);
    auto v = parameter(random_tensor({2, 2, 4, 4}, rng));
    auto inputs = params_with(store, "mae");
    inputs.push_back(v);
    auto fn = [&](const std::vector<Var<double>>&) { return sum(square(mae(v, true))); };
    errs.emplace_back("motion_aware_encode", gradcheck(fn, inputs));
  }
  bool pass = true;
  std::string detail;
  for (const auto& [name, e] : errs) {
    pass = pass && e < 1e-3;
    detail += fmt("%s%s %.2e", detail.empty() ? "" : ", ", name.c_str(), e);
  }
  return {pass, "max rel. err " + detail + " (tol 1e-3)"};
}

// ---- 6 ----
Outcome causality() {
  const std::vector<int> groups{16, 16, 32, 64};
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> sym(-6, 6);
  int checks = 0;
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore<float> store(600 + trial);
    ContextualCodec<float> codec(store, "ctx", 4, groups, 4);
    testing::randomize_params(store, rng, 0.3);
    const int h = 4 + static_cast<int>(rng() % 3), w = 4 + static_cast<int>(rng() % 3);
    const auto temporal = constant(testing::random_tensor_f({1, 128, h, w}, rng));
    Tensor<float> base(Shape{1, 128, h, w});
    for (auto& v : base.span()) v = static_cast<float>(sym(rng));
    auto same = [](const GaussianParams<float>& a, const GaussianParams<float>& b) {
      return same_bits(a.mu.value(), b.mu.value()) && same_bits(a.sigma.value(), b.sigma.value());
    };
    for (int k = 0; k < 4; ++k) {
      const int begin = codec.chunk_offset(k), end = begin + groups[static_cast<size_t>(k)];
      Tensor<float> non_anchor = base, later = base;
      for (int c = begin; c < 128; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            if (!is_anchor(y, x) || c >= end) non_anchor.at(0, c, y, x) += static_cast<float>(sym(rng) | 1);
            if (c >= end) later.at(0, c, y, x) -= static_cast<float>(sym(rng) | 1);
          }
      if (!same(codec.pass_params(k, true, constant(base), temporal), codec.pass_params(k, true, constant(non_anchor), temporal)))
        return {false, fmt("trial %d chunk %d: anchor pass depends on non-anchor symbols", trial, k)};
      for (bool anchor : {true, false})
        if (!same(codec.pass_params(k, anchor, constant(base), temporal), codec.pass_params(k, anchor, constant(later), temporal)))
          return {false, fmt("trial %d chunk %d: parameters depend on later chunks", trial, k)};
      checks += 3;
    }
  }
  return {true, fmt("%d perturbation checks, parameters bit-identical", checks)};
}

// ---- 7 ----
Outcome dcn_degeneracy() {
  std::mt19937_64 rng(707);
  float worst = 0;
  for (int draw = 0; draw < 20; ++draw) {
    const int g = 1 + static_cast<int>(rng() % 4), c = 4 * g, h = 6 + static_cast<int>(rng() % 10), w = 6 + static_cast<int>(rng() % 10);
    const auto x = constant(testing::random_tensor_f({1, c, h, w}, rng));
    const auto wt = constant(testing::random_tensor_f({c, c, 3, 3}, rng));
    const auto b = constant(testing::random_tensor_f({1, c, 1, 1}, rng));
    const auto offsets = constant(Tensor<float>(Shape{1, 2 * g * 9, h, w}));
    const auto masks = constant(Tensor<float>(Shape{1, g * 9, h, w}, 1.0f));
    worst = std::max(worst, max_abs_diff(deform_conv2d(x, offsets, masks, wt, b, g).value(), conv2d(x, wt, b, 1, 1).value()));
  }
  return {worst < 1e-5f, fmt("20 draws, max |dcn - conv| = %.3e (tol 1e-5)", static_cast<double>(worst))};
}

// ---- 8 ----
CodecConfig overfit_config(bool multiscale) {
  CodecConfig c;
  c.lambda = 2048;
  c.feature_channels = 16;
  c.motion_channels = 16;
  c.motion_feature_dim = 16;
  c.motion_latent_channels = 16;
  c.motion_hyper_channels = 16;
  c.context_hyper_channels = 16;
  c.deform_groups = 4;
  c.intra_channels = 32;
  c.intra_latent_channels = 32;
  c.intra_hyper_channels = 16;
  c.multiscale_motion = multiscale;
  c.seed = 8;
  return c;
}

struct OverfitResult {
  double p_psnr = 0, p_bpp = 0, seq_bpp = 0, rd_loss = 0, seconds = 0;
  int steps = 0;
};

struct Schedule {
  int intra = 1500, single = 3000, cascaded = 200;
};

OverfitResult overfit(bool multiscale, const Schedule& sch, bool verbose) {
  const auto t0 = Clock::now();
  const RawSequence clip = moving_rectangle_clip(7, 64, 64);
  VideoModel<float> model(overfit_config(multiscale));
  auto stage = [&](Stage s, int frames, int steps, double lr) {
    if (steps <= 0) return;
    TrainConfig tc = TrainConfig::defaults(s);
    tc.frames = frames;
    tc.steps = steps;
    tc.learning_rate = lr;
    tc.batch = 1;
    tc.crop = 0;
    tc.lambda = 2048;
    tc.seed = 8;
    Trainer trainer(model, {clip}, tc);
    trainer.run([&](const StepStats& st) {
      if (verbose && (st.step + 1) % 250 == 0)
        std::fprintf(stderr, "  [%s %s] step %d loss %.3f rate %.3f mse %.5f (%.0f s)\n", multiscale ? "full" : "ablated",
                     to_string(s).c_str(), st.step + 1, st.loss, st.rate, st.distortion, seconds_since(t0));
    });
  };
  stage(Stage::intra, 1, sch.intra * 2 / 3, 1e-3);
  stage(Stage::intra, 1, sch.intra / 3, 2e-4);
  stage(Stage::single_frame, 1, sch.single * 2 / 3, 1e-3);
  stage(Stage::single_frame, 1, sch.single / 3, 2e-4);
  stage(Stage::cascaded, 6, sch.cascaded, 5e-5);

  const auto enc = Codec(model).encode_sequence(clip, 7);
  const auto dec = Codec(model).decode_sequence(enc.container);
  OverfitResult r;
  double mse_sum = 0;
  for (size_t i = 1; i < clip.frames.size(); ++i) {
    const double p = psnr(clip.frames[i], dec.sequence.frames[i]);
    const double mse = std::pow(10.0, -p / 10.0);
    r.p_psnr += p;
    r.p_bpp += enc.frames[i].stats.bpp;
    r.rd_loss += 2048 * mse + enc.frames[i].stats.bpp;
    mse_sum += mse;
  }
  const double n = static_cast<double>(clip.frames.size() - 1);
  r.p_psnr /= n;
  r.p_bpp /= n;
  r.rd_loss /= n;
  r.seq_bpp = container_stats(enc.container)["bpp"].get<double>();
  r.steps = sch.intra + sch.single + sch.cascaded;
  r.seconds = seconds_since(t0);
  return r;
}

Outcome overfit_smoke(const Schedule& sch, bool verbose) {
  const auto full = overfit(true, sch, verbose);
  const auto ablated = overfit(false, sch, verbose);
  const bool quality = full.p_psnr >= 30.0 && full.p_bpp <= 1.0;
  const bool steps = full.steps <= 10000;
  const bool time = full.seconds <= 3600 && ablated.seconds <= 3600;
  const bool ablation = ablated.rd_loss >= full.rd_loss;
  return {quality && steps && time && ablation,
          fmt("P-frame PSNR %.2f dB (>= 30), P-frame bpp %.3f (<= 1.0), sequence bpp %.3f, %d steps, %.0f s; "
              "RD loss %.3f vs single-scale ablation %.3f (%.0f s)",
              full.p_psnr, full.p_bpp, full.seq_bpp, full.steps, full.seconds, full.rd_loss, ablated.rd_loss,
              ablated.seconds)};
}

// ---- 9 ----
Outcome bd_rate_oracle() {
  std::vector<RDPoint> anchor{{256, 0.11, 30.2, 0.91}, {512, 0.23, 32.7, 0.94}, {1024, 0.41, 35.0, 0.96}, {2048, 0.86, 37.6, 0.98}};
  auto doubled = anchor;
  for (auto& p : doubled) p.bpp *= 2;
  double worst = 0;
  bool exact_zero = true;
  std::string detail;
  for (auto metric : {QualityMetric::psnr, QualityMetric::msssim})
    for (auto method : {BdMethod::pchip, BdMethod::cubic}) {
      exact_zero = exact_zero && bd_rate(anchor, anchor, metric, method) == 0.0;
      worst = std::max(worst, std::abs(bd_rate(anchor, doubled, metric, method) - 100.0));
    }
  return {exact_zero && worst < 0.1,
          fmt("identical curves %.4f%%; doubled rate 100%% off by at most %.2e points (tol 0.1)", exact_zero ? 0.0 : 1.0,
              worst)};
}

// ---- 10 ----
Outcome gop_semantics() {
  std::mt19937_64 rng(1010);
  const auto model = random_model(1010, rng);
  const Codec codec(*model);
  const auto enc = codec.encode_sequence(noisy_clip(14, 64, 80, rng), 10);
  const auto clean = codec.decode_sequence(enc.container);
  Container broken = enc.container;
  auto& payload = broken.frames[3].substreams[4];
  payload[payload.size() / 2] ^= 0x5a;
  const auto dirty = codec.decode_sequence(Container::parse(broken.serialize()));
  std::string changed;
  for (int i = 0; i < 14; ++i) {
    const bool same = same_bits(dirty.sequence.frames[static_cast<size_t>(i)], clean.sequence.frames[static_cast<size_t>(i)]);
    if ((i < 3 || i >= 10) && !same) return {false, fmt("frame %d differs from the clean decode", i)};
    if (!same) changed += fmt("%s%d", changed.empty() ? "" : ",", i);
  }
  const bool concealed = dirty.concealed[3] && !clean.concealed[3] &&
                         same_bits(dirty.sequence.frames[3], clean.sequence.frames[2]) &&
                         !same_bits(dirty.sequence.frames[3], clean.sequence.frames[3]);
  return {concealed, fmt("frames 0-2 and 10-13 bit-identical; affected frames {%s}; frame 3 concealed with frame 2: %s",
                         changed.c_str(), concealed ? "yes" : "no")};
}

// ---- 11 ----
Outcome channel_report() {
  std::mt19937_64 rng(1111);
  const auto model = random_model(1111, rng);
  const Codec codec(*model);
  const auto enc = codec.encode_sequence(noisy_clip(2, 128, 128, rng), 10);
  const auto& r = enc.frames[1].context_report;
  const std::vector<int> groups{16, 16, 32, 64};
  if (r.channel_bits.size() != 128 || r.group_sizes != groups) return {false, "report is not 128 channels in 16/16/32/64"};
  int c0 = 0;
  double total = 0;
  for (size_t g = 0; g < groups.size(); ++g) {
    double acc = 0;
    for (int c = c0; c < c0 + groups[g]; ++c) acc += r.channel_bits[static_cast<size_t>(c)];
    if (acc != r.group_bits[g]) return {false, fmt("group %zu: channel sum %.17g != %.17g", g, acc, r.group_bits[g])};
    total += r.group_bits[g];
    c0 += groups[g];
  }
  if (total != r.total_bits) return {false, fmt("group sum %.17g != total %.17g", total, r.total_bits)};
  double segments = 0;
  for (size_t i = 3; i < enc.frames[1].stats.model_bits.size(); ++i) segments += enc.frames[1].stats.model_bits[i];
  return {true, fmt("128 channels, groups {%.1f, %.1f, %.1f, %.1f} sum exactly to %.4f bits (coded segments model %.4f)",
                    r.group_bits[0], r.group_bits[1], r.group_bits[2], r.group_bits[3], r.total_bits, segments)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  Schedule sch;
  bool verbose = false;
  app.add_option("--only", only, "criteria to run (default: all but 8)")->delimiter(',');
  app.add_option("--intra-steps", sch.intra);
  app.add_option("--single-steps", sch.single);
  app.add_option("--cascaded-steps", sch.cascaded);
  app.add_flag("--verbose", verbose);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"bit-exact round trip", bit_exact_round_trip},
      {"rate accounting", rate_accounting},
      {"entropy coder fuzz", coder_fuzz},
      {"gaussian rate oracle", gaussian_rate_oracle},
      {"gradient checks", gradient_checks},
      {"contextual causality", causality},
      {"dcn degeneracy", dcn_degeneracy},
      {"overfit smoke and single-scale ablation", [&] { return overfit_smoke(sch, verbose); }},
      {"bd-rate oracle", bd_rate_oracle},
      {"gop error containment", gop_semantics},
      {"channel entropy report", channel_report},
  };
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty())
    for (int i = 1; i <= 11; ++i)
      if (i != 8) selected.insert(i);

  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > 11) {
      std::fprintf(stderr, "no criterion %d\n", id);
      return 2;
    }
    const auto& [name, run] = criteria[static_cast<size_t>(id - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
