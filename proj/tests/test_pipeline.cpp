#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mmtts/errors.hpp"
#include "mmtts/pipeline.hpp"
#include "mmtts/plot.hpp"
#include "support/fixtures.hpp"

using namespace mmtts;
using namespace mmtts::testing;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One corpus + trained tiny checkpoints shared by the synthesis and
// evaluation cases, built on first use.
struct TrainedBundle {
  std::string dir, manifest, s1_ckpt, s2_ckpt, prompt_wav;
  ModelConfig cfg;
  Corpus corpus;
  TrainResult s1_res, s2_res;
};

TrainedBundle& bundle() {
  static TrainedBundle b = [] {
    TrainedBundle t;
    t.dir = temp_dir("pipeline_bundle");
    write_toy_tree(t.dir + "/corpus", overfit_fixture(4, 0.3));
    BuildConfig bc;
    bc.seed = 5;
    auto built = build_manifest(t.dir + "/corpus", bc);
    t.manifest = t.dir + "/manifest.jsonl";
    write_manifest(t.manifest, built.entries);
    t.cfg = tiny_config();
    t.cfg.stage1_iters = 8;
    t.cfg.stage2_iters = 5;
    t.cfg.lr_stage1 = 3e-4;
    t.corpus = load_corpus(t.manifest, "", t.cfg, "all");
    t.s1_ckpt = t.dir + "/s1.ckpt";
    t.s2_ckpt = t.dir + "/s2.ckpt";
    std::ostringstream log;
    t.s1_res = train_stage1(t.corpus, t.cfg, t.s1_ckpt, "", log);
    t.s2_res = train_stage2(t.corpus, t.s1_ckpt, t.cfg, t.s2_ckpt, log);
    t.prompt_wav = t.corpus.items.front().entry.audio_path;
    return t;
  }();
  return b;
}

}  // namespace

TEST_CASE("tokenize_text maps bytes modulo the vocabulary") {
  auto ids = tokenize_text("abc", 256);
  CHECK(ids == std::vector<int>{97, 98, 99});
  auto folded = tokenize_text("abc", 16);
  CHECK(folded == std::vector<int>{1, 2, 3});
  CHECK(tokenize_text("a b", 256).size() == 3);
  CHECK_THROWS_AS(tokenize_text("", 256), InvalidInputError);
  CHECK_THROWS_AS(tokenize_text("x", 0), ConfigError);
}

TEST_CASE("corpus loading standardizes features and honors split filters") {
  std::string dir = temp_dir("pipe_corpus");
  write_toy_tree(dir + "/corpus", six_clip_fixture());
  BuildConfig bc;
  bc.seed = 7;
  auto built = build_manifest(dir + "/corpus", bc);
  std::string manifest = dir + "/manifest.jsonl";
  write_manifest(manifest, built.entries);

  ModelConfig cfg = tiny_config();
  Corpus corpus = load_corpus(manifest, "", cfg, "all");
  REQUIRE(corpus.items.size() == 6);
  CHECK(corpus.warnings.empty());

  for (const auto& item : corpus.items) {
    CHECK(item.tokens == tokenize_text(item.entry.transcript, cfg.vocab_size));
    REQUIRE(item.mel.ndim() == 2);
    CHECK(item.mel.dim(1) == cfg.n_mels);
    int t_frames = item.mel.dim(0);
    CHECK(t_frames > 0);
    CHECK(static_cast<int>(item.targets.pitch.size()) == t_frames);
    CHECK(static_cast<int>(item.targets.energy.size()) == t_frames);
    int dsum = 0;
    for (int d : item.targets.durations) dsum += d;
    CHECK(dsum == t_frames);
    CHECK(item.targets.durations.size() == item.tokens.size());
    CHECK(!item.image_payload.empty());
    CHECK(!item.text_payload.empty());
    CHECK(item.wav.sample_rate_hz == cfg.sample_rate);
  }

  // Standardized views have zero mean and unit variance corpus-wide.
  auto moments = [](const std::vector<double>& xs) {
    double s = 0, q = 0;
    for (double x : xs) {
      s += x;
      q += x * x;
    }
    double m = s / static_cast<double>(xs.size());
    return std::pair<double, double>(m, q / static_cast<double>(xs.size()) - m * m);
  };
  std::vector<double> mel_vals, pitch_vals, energy_vals;
  for (size_t i = 0; i < corpus.items.size(); ++i) {
    Tensor sm = corpus.standardized_mel(static_cast<int>(i));
    for (int64_t k = 0; k < sm.numel(); ++k) mel_vals.push_back(sm.data()[k]);
    for (double p : corpus.items[i].targets.pitch) pitch_vals.push_back(p);
    for (double e : corpus.items[i].targets.energy) energy_vals.push_back(e);
  }
  auto [mm, mv] = moments(mel_vals);
  CHECK(std::abs(mm) < 1e-9);
  CHECK(mv == doctest::Approx(1.0).epsilon(1e-6));
  auto [pm, pv] = moments(pitch_vals);
  CHECK(std::abs(pm) < 1e-9);
  CHECK(pv == doctest::Approx(1.0).epsilon(1e-6));
  auto [em, ev] = moments(energy_vals);
  CHECK(std::abs(em) < 1e-9);
  CHECK(ev == doctest::Approx(1.0).epsilon(1e-6));

  size_t split_total = 0;
  for (const char* f : {"train", "dev", "test"}) {
    Corpus part = load_corpus(manifest, "", cfg, f);
    for (const auto& item : part.items) CHECK(split_name(item.entry.split) == f);
    split_total += part.items.size();
  }
  CHECK(split_total == 6);
  CHECK_THROWS_AS(load_corpus(manifest, "", cfg, "validation"), ConfigError);
}

TEST_CASE("alignment files drive durations, with uniform fallbacks") {
  std::string dir = temp_dir("pipe_align");
  write_toy_tree(dir + "/corpus", six_clip_fixture());
  BuildConfig bc;
  bc.seed = 7;
  auto built = build_manifest(dir + "/corpus", bc);
  std::string manifest = dir + "/manifest.jsonl";
  write_manifest(manifest, built.entries);

  ModelConfig cfg = tiny_config();
  Corpus base = load_corpus(manifest, "", cfg, "all");
  REQUIRE(base.items.size() == 6);
  const auto& a = base.items[0];
  const auto& b = base.items[1];
  const auto& c = base.items[2];
  int la = static_cast<int>(a.tokens.size()), ta = a.mel.dim(0);
  REQUIRE(ta > la);  // 0.45 s of audio vs short byte-token strings

  std::string align_path = dir + "/align.txt";
  {
    std::ofstream out(align_path);
    out << a.entry.utt_id;
    for (int i = 0; i < la; ++i) out << " 1";
    out << "\n";
    out << b.entry.utt_id << " 3 3 3\n";  // wrong token count
    out << c.entry.utt_id;
    for (size_t i = 0; i < c.tokens.size(); ++i) out << " 1000";  // sum far past T
    out << "\n";
  }

  Corpus aligned = load_corpus(manifest, align_path, cfg, "all");
  REQUIRE(aligned.items.size() == 6);
  const auto& da = aligned.items[0].targets.durations;
  REQUIRE(static_cast<int>(da.size()) == la);
  for (int i = 0; i + 1 < la; ++i) CHECK(da[static_cast<size_t>(i)] == 1);
  CHECK(da.back() == ta - (la - 1));  // last token absorbs the remainder

  // Both malformed lines fall back to uniform durations with a warning.
  CHECK(aligned.items[1].targets.durations == b.targets.durations);
  CHECK(aligned.items[2].targets.durations == c.targets.durations);
  REQUIRE(aligned.warnings.size() == 2);
  CHECK(aligned.warnings[0].find("token count mismatch") != std::string::npos);
  CHECK(aligned.warnings[1].find("length mismatch") != std::string::npos);

  CHECK_THROWS_AS(load_corpus(manifest, dir + "/missing_align.txt", cfg, "all"), IoError);
}

TEST_CASE("stage-1 creation is seed-deterministic") {
  ModelConfig cfg = tiny_config();
  auto m1 = create_stage1(cfg);
  auto m2 = create_stage1(cfg);
  auto s1 = m1->params.snapshot();
  auto s2 = m2->params.snapshot();
  REQUIRE(s1.size() == s2.size());
  for (const auto& [name, t] : s1) {
    REQUIRE(s2.count(name) == 1);
    const Tensor& o = s2.at(name);
    REQUIRE(t.numel() == o.numel());
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(t.data()[i] == o.data()[i]);
  }

  cfg.seed = 77;
  auto m3 = create_stage1(cfg);
  auto s3 = m3->params.snapshot();
  bool any_diff = false;
  for (const auto& [name, t] : s1) {
    const Tensor& o = s3.at(name);
    for (int64_t i = 0; i < t.numel() && !any_diff; ++i)
      if (t.data()[i] != o.data()[i]) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("short stage-1 training improves the loss and round-trips the checkpoint") {
  TrainedBundle& t = bundle();
  CHECK(t.s1_res.steps_run == 8);
  CHECK(std::isfinite(t.s1_res.first_loss));
  CHECK(std::isfinite(t.s1_res.final_loss));
  CHECK(t.s1_res.final_loss < t.s1_res.first_loss);

  auto loaded = load_stage1(t.s1_ckpt);
  CHECK(loaded->cfg.style_dim == t.cfg.style_dim);
  CHECK(loaded->cfg.enc_hidden == t.cfg.enc_hidden);
  CHECK(loaded->mel_mean == doctest::Approx(t.corpus.mel_mean));
  CHECK(loaded->mel_std == doctest::Approx(t.corpus.mel_std));
  CHECK(loaded->pitch_mean == doctest::Approx(t.corpus.pitch_mean));
  CHECK(loaded->pitch_std == doctest::Approx(t.corpus.pitch_std));
  CHECK(loaded->energy_mean == doctest::Approx(t.corpus.energy_mean));
  CHECK(loaded->energy_std == doctest::Approx(t.corpus.energy_std));

  auto fresh = create_stage1(t.cfg);
  CHECK(loaded->params.param_count() == fresh->params.param_count());

  // The checkpoint stores trained values, not init values.
  auto trained = loaded->params.snapshot();
  auto init = fresh->params.snapshot();
  bool moved = false;
  for (const auto& [name, tv] : trained) {
    const Tensor& iv = init.at(name);
    for (int64_t i = 0; i < tv.numel() && !moved; ++i)
      if (tv.data()[i] != iv.data()[i]) moved = true;
  }
  CHECK(moved);

  CHECK_THROWS_AS(load_stage1(t.dir + "/nope.ckpt"), IoError);
}

TEST_CASE("stage-1 training is reproducible and resumable") {
  TrainedBundle& t = bundle();
  std::ostringstream log;

  ModelConfig cfg6 = t.cfg;
  cfg6.stage1_iters = 6;
  std::string straight_ckpt = t.dir + "/straight.ckpt";
  TrainResult straight = train_stage1(t.corpus, cfg6, straight_ckpt, "", log);

  TrainResult again = train_stage1(t.corpus, cfg6, "", "", log);
  CHECK(again.first_loss == straight.first_loss);
  CHECK(again.final_loss == straight.final_loss);

  ModelConfig cfg3 = cfg6;
  cfg3.stage1_iters = 3;
  std::string half_ckpt = t.dir + "/half.ckpt";
  TrainResult leg1 = train_stage1(t.corpus, cfg3, half_ckpt, "", log);
  CHECK(leg1.first_loss == straight.first_loss);

  std::ostringstream resume_log;
  TrainResult leg2 = train_stage1(t.corpus, cfg6, t.dir + "/resumed.ckpt", half_ckpt, resume_log);
  CHECK(leg2.steps_run == 3);
  CHECK(resume_log.str().find("resumed from") != std::string::npos);
  // Batches cover the whole 4-item corpus every step, so the resumed leg can
  // differ from the tail of the straight run only by summation order.
  CHECK(leg2.final_loss == doctest::Approx(straight.final_loss).epsilon(1e-6));

  // A checkpoint without optimizer state cannot seed a resume.
  Checkpoint ck = load_checkpoint(half_ckpt);
  for (auto it = ck.tensors.begin(); it != ck.tensors.end();)
    it = (it->first.rfind("opt.", 0) == 0) ? ck.tensors.erase(it) : std::next(it);
  std::string stripped = t.dir + "/stripped.ckpt";
  save_checkpoint(stripped, ck);
  CHECK_THROWS_AS(train_stage1(t.corpus, cfg6, "", stripped, log), ConfigError);

  Corpus empty;
  CHECK_THROWS_AS(train_stage1(empty, cfg6, "", "", log), InvalidInputError);
}

TEST_CASE("stage-2 training leaves the stage-1 checkpoint untouched") {
  TrainedBundle& t = bundle();
  CHECK(t.s2_res.steps_run == 5);
  CHECK(std::isfinite(t.s2_res.first_loss));
  CHECK(std::isfinite(t.s2_res.final_loss));

  std::string before = slurp(t.s1_ckpt);
  std::ostringstream log;
  ModelConfig cfg = t.cfg;
  cfg.stage2_iters = 2;
  train_stage2(t.corpus, t.s1_ckpt, cfg, t.dir + "/s2_again.ckpt", log);
  CHECK(slurp(t.s1_ckpt) == before);

  auto s2 = load_stage2(t.s2_ckpt);
  CHECK(s2->mel_mean == doctest::Approx(t.corpus.mel_mean));
  CHECK(s2->mel_std == doctest::Approx(t.corpus.mel_std));

  Corpus empty;
  CHECK_THROWS_AS(train_stage2(empty, t.s1_ckpt, cfg, "", log), InvalidInputError);
}

TEST_CASE("synthesis works from all three prompt modalities") {
  TrainedBundle& t = bundle();
  ModelConfig rt;
  rt.sampler = "euler";
  rt.euler_steps = 4;
  rt.seed = 42;

  const std::string text = "good morning";
  auto check_result = [&](const SynthesisResult& r, const std::string& spoken) {
    CHECK(!r.wav.samples.empty());
    CHECK(r.wav.sample_rate_hz == 16000);
    for (double s : r.wav.samples) {
      REQUIRE(std::isfinite(s));
      REQUIRE(std::abs(s) <= 1.0);
    }
    REQUIRE(r.stage1_mel.frames.ndim() == 2);
    CHECK(r.stage1_mel.frames.dim(1) == t.cfg.n_mels);
    CHECK(r.refined_mel.frames.shape() == r.stage1_mel.frames.shape());
    CHECK(r.durations.size() == tokenize_text(spoken, t.cfg.vocab_size).size());
  };

  SynthesisResult speech =
      synthesize(text, Modality::speech, t.prompt_wav, t.s1_ckpt, t.s2_ckpt, rt);
  check_result(speech, text);

  // Any byte payload stands in for an image file.
  SynthesisResult image =
      synthesize(text, Modality::image, t.prompt_wav, t.s1_ckpt, t.s2_ckpt, rt);
  check_result(image, text);

  SynthesisResult txt =
      synthesize(text, Modality::text, "a calm low voice", t.s1_ckpt, t.s2_ckpt, rt);
  check_result(txt, text);

  // The refiner actually changes the mel; prompts from different modalities
  // produce different styles.
  bool refined_differs = false;
  for (int64_t i = 0; i < speech.refined_mel.frames.numel(); ++i)
    if (speech.refined_mel.frames.data()[i] != speech.stage1_mel.frames.data()[i])
      refined_differs = true;
  CHECK(refined_differs);
  bool style_differs = false;
  for (int64_t i = 0; i < speech.stage1_mel.frames.numel() &&
                      i < txt.stage1_mel.frames.numel() && !style_differs;
       ++i)
    if (speech.stage1_mel.frames.data()[i] != txt.stage1_mel.frames.data()[i])
      style_differs = true;
  CHECK(style_differs);

  // No stage-2 checkpoint: the stage-1 mel passes through untouched.
  SynthesisResult plain = synthesize(text, Modality::text, "a voice", t.s1_ckpt, "", rt);
  REQUIRE(plain.refined_mel.frames.shape() == plain.stage1_mel.frames.shape());
  for (int64_t i = 0; i < plain.refined_mel.frames.numel(); ++i)
    CHECK(plain.refined_mel.frames.data()[i] == plain.stage1_mel.frames.data()[i]);

  ModelConfig rk = rt;
  rk.sampler = "rk45";
  SynthesisResult adaptive = synthesize("hi", Modality::text, "a voice", t.s1_ckpt, t.s2_ckpt, rk);
  check_result(adaptive, "hi");

  ModelConfig bad = rt;
  bad.sampler = "verlet";
  CHECK_THROWS_AS(synthesize(text, Modality::text, "a voice", t.s1_ckpt, t.s2_ckpt, bad),
                  ConfigError);
  CHECK_THROWS_AS(synthesize("", Modality::text, "a voice", t.s1_ckpt, t.s2_ckpt, rt),
                  InvalidInputError);
  CHECK_THROWS_AS(synthesize(text, Modality::speech, t.dir + "/no.wav", t.s1_ckpt, "", rt),
                  IoError);
}

TEST_CASE("evaluation aggregates finite metrics over the corpus") {
  TrainedBundle& t = bundle();
  ModelConfig rt;
  rt.sampler = "euler";
  rt.euler_steps = 4;

  MelStatsEmbedder embedder(t.cfg);
  PitchBandClassifier gender(t.cfg, {{170.0, "male"}, {4000.0, "female"}});
  std::ostringstream log;
  MetricReport rep = evaluate_corpus(t.corpus, t.s1_ckpt, t.s2_ckpt, rt, 2, nullptr, &gender,
                                     embedder, log);
  CHECK(rep.n_items == 2);
  CHECK(std::isfinite(rep.mcd));
  CHECK(rep.mcd >= 0.0);
  CHECK(rep.secs >= -1.0);
  CHECK(rep.secs <= 1.0);
  CHECK(rep.acc_emo == 0.0);
  CHECK(rep.acc_gen >= 0.0);
  CHECK(rep.acc_gen <= 1.0);
  CHECK(log.str().find("mcd") != std::string::npos);

  Corpus empty;
  CHECK_THROWS_AS(evaluate_corpus(empty, t.s1_ckpt, "", rt, 0, nullptr, nullptr, embedder, log),
                  InvalidInputError);
}

TEST_CASE("mel plots are deterministic truecolor PNGs") {
  std::string dir = temp_dir("pipe_plot");
  MelSpectrogram mel;
  mel.n_mels = 5;
  Rng rng(9);
  mel.frames = Tensor::zeros({7, 5});
  for (int64_t i = 0; i < mel.frames.numel(); ++i) mel.frames.data()[i] = rng.normal();

  std::string p1 = dir + "/a.png", p2 = dir + "/b.png", p3 = dir + "/c.png";
  plot_mel_png(mel, p1, 3);
  plot_mel_png(mel, p2, 3);
  plot_mel_png(mel, p3, 4);

  std::string a = slurp(p1);
  CHECK(a == slurp(p2));
  CHECK(a != slurp(p3));

  REQUIRE(a.size() > 33);
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(a[static_cast<size_t>(i)]) == sig[i]);
  auto be32 = [&](size_t off) {
    return (static_cast<uint32_t>(static_cast<unsigned char>(a[off])) << 24) |
           (static_cast<uint32_t>(static_cast<unsigned char>(a[off + 1])) << 16) |
           (static_cast<uint32_t>(static_cast<unsigned char>(a[off + 2])) << 8) |
           static_cast<uint32_t>(static_cast<unsigned char>(a[off + 3]));
  };
  CHECK(be32(16) == 7u * 3u);   // width: frames x pixels_per_frame
  CHECK(be32(20) == 5u * 3u);   // height: mel bins x pixels_per_frame

  CHECK_THROWS_AS(plot_mel_png(mel, p1, 0), InvalidInputError);
}
