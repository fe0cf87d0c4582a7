#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mmtts/errors.hpp"
#include "mmtts/pipeline.hpp"
#include "mmtts/plot.hpp"

namespace {

mmtts::ModelConfig load_config(const std::string& path) {
  mmtts::ModelConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw mmtts::IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = mmtts::parse_config(ss.str());
  }
  mmtts::apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-modal prompt style transfer TTS"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "Key=value config file")->capture_default_str();

  // build-manifest
  auto* bm = app.add_subcommand("build-manifest", "Scan a corpus tree and emit a JSONL manifest");
  std::string bm_root, bm_out;
  mmtts::BuildConfig bc;
  bool bm_no_para = false;
  bm->add_option("--root", bm_root, "Corpus root: <speaker>/<emotion>/<level>/<clip>.wav")
      ->required();
  bm->add_option("--out", bm_out, "Output manifest path")->required();
  bm->add_option("--seed", bc.seed, "Build seed");
  bm->add_option("--frames-per-clip", bc.frames_per_clip, "Face frames sampled per clip");
  bm->add_option("--train-fraction", bc.train_fraction, "Speaker fraction for train");
  bm->add_option("--dev-fraction", bc.dev_fraction, "Speaker fraction for dev");
  bm->add_flag("--no-paraphrases", bm_no_para, "Keep only template prompts");

  // train-stage1
  auto* t1 = app.add_subcommand("train-stage1", "Train the acoustic model and prompt encoders");
  std::string t1_manifest, t1_align, t1_out, t1_resume, t1_split = "train";
  bool t1_speech_only = false;
  t1->add_option("--manifest", t1_manifest, "Training manifest")->required();
  t1->add_option("--out", t1_out, "Output checkpoint")->required();
  t1->add_option("--alignment", t1_align, "Duration file: utt_id d1 d2 ...");
  t1->add_option("--resume", t1_resume, "Checkpoint to resume from");
  t1->add_option("--split", t1_split, "Manifest split to train on (train|dev|test|all)");
  t1->add_flag("--speech-prompt-only", t1_speech_only,
               "Pretrain on the speech modality alone (no adapter loss)");

  // train-stage2
  auto* t2 = app.add_subcommand("train-stage2", "Train the rectified-flow mel refiner");
  std::string t2_manifest, t2_align, t2_stage1, t2_out, t2_split = "train";
  t2->add_option("--manifest", t2_manifest, "Training manifest")->required();
  t2->add_option("--stage1", t2_stage1, "Frozen stage-1 checkpoint")->required();
  t2->add_option("--out", t2_out, "Output checkpoint")->required();
  t2->add_option("--alignment", t2_align, "Duration file: utt_id d1 d2 ...");
  t2->add_option("--split", t2_split, "Manifest split to train on (train|dev|test|all)");

  // synthesize
  auto* sy = app.add_subcommand("synthesize", "Generate speech from text and one style prompt");
  std::string sy_text, sy_speech, sy_image, sy_textprompt, sy_stage1, sy_stage2, sy_out;
  std::string sy_sampler;
  int sy_euler_steps = -1;
  sy->add_option("--text", sy_text, "Text to speak")->required();
  sy->add_option("--speech-prompt", sy_speech, "Reference wav prompt");
  sy->add_option("--image-prompt", sy_image, "Face image prompt");
  sy->add_option("--text-prompt", sy_textprompt, "Style description prompt");
  sy->add_option("--stage1", sy_stage1, "Stage-1 checkpoint")->required();
  sy->add_option("--stage2", sy_stage2, "Stage-2 checkpoint (omit to skip refinement)");
  sy->add_option("--out", sy_out, "Output prefix: writes <out>.wav and mel dumps")->required();
  sy->add_option("--sampler", sy_sampler, "ODE sampler (euler|rk45)");
  sy->add_option("--euler-steps", sy_euler_steps, "Euler step count");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Objective metrics over a manifest split");
  std::string ev_manifest, ev_align, ev_stage1, ev_stage2, ev_split = "test", ev_report;
  int ev_max = 0;
  ev->add_option("--manifest", ev_manifest, "Manifest")->required();
  ev->add_option("--stage1", ev_stage1, "Stage-1 checkpoint")->required();
  ev->add_option("--stage2", ev_stage2, "Stage-2 checkpoint (optional)");
  ev->add_option("--alignment", ev_align, "Duration file");
  ev->add_option("--split", ev_split, "Split to evaluate (train|dev|test|all)");
  ev->add_option("--max-items", ev_max, "Cap on evaluated utterances (0 = all)");
  ev->add_option("--report", ev_report, "Also write the record-format report here");

  // plot-mel
  auto* pm = app.add_subcommand("plot-mel", "Render a mel dump to PNG");
  std::string pm_in, pm_out;
  pm->add_option("--mel", pm_in, "Input .mel file")->required();
  pm->add_option("--out", pm_out, "Output .png")->required();

  CLI11_PARSE(app, argc, argv);

  if (bm->parsed()) {
    bc.use_paraphrases = !bm_no_para;
    auto res = mmtts::build_manifest(bm_root, bc);
    mmtts::write_manifest(bm_out, res.entries);
    std::cout << "pairs " << res.summary.pairs << "\n"
              << "hours " << res.summary.total_hours << "\n"
              << "speakers " << res.summary.speakers << " (male " << res.summary.male_speakers
              << ", female " << res.summary.female_speakers << ")\n";
    for (const auto& w : res.summary.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << bm_out << "\n";
    return 0;
  }

  if (t1->parsed()) {
    mmtts::ModelConfig cfg = load_config(config_path);
    cfg.speech_prompt_only = cfg.speech_prompt_only || t1_speech_only;
    auto corpus = mmtts::load_corpus(t1_manifest, t1_align, cfg, t1_split);
    for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
    auto res = mmtts::train_stage1(corpus, cfg, t1_out, t1_resume, std::cout);
    std::cout << "stage1 done: steps " << res.steps_run << " first_loss " << res.first_loss
              << " final_loss " << res.final_loss << "\nwrote " << t1_out << "\n";
    return 0;
  }

  if (t2->parsed()) {
    mmtts::ModelConfig cfg = load_config(config_path);
    auto corpus = mmtts::load_corpus(t2_manifest, t2_align, cfg, t2_split);
    for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
    auto res = mmtts::train_stage2(corpus, t2_stage1, cfg, t2_out, std::cout);
    std::cout << "stage2 done: steps " << res.steps_run << " first_loss " << res.first_loss
              << " final_loss " << res.final_loss << "\nwrote " << t2_out << "\n";
    return 0;
  }

  if (sy->parsed()) {
    mmtts::ModelConfig cfg = load_config(config_path);
    if (!sy_sampler.empty()) cfg.sampler = sy_sampler;
    if (sy_euler_steps > 0) cfg.euler_steps = sy_euler_steps;
    int n_prompts = (!sy_speech.empty()) + (!sy_image.empty()) + (!sy_textprompt.empty());
    if (n_prompts != 1)
      throw mmtts::MissingPromptError(
          "pass exactly one of --speech-prompt, --image-prompt, --text-prompt");
    mmtts::Modality modality = mmtts::Modality::speech;
    std::string prompt = sy_speech;
    if (!sy_image.empty()) {
      modality = mmtts::Modality::image;
      prompt = sy_image;
    } else if (!sy_textprompt.empty()) {
      modality = mmtts::Modality::text;
      prompt = sy_textprompt;
    }
    auto res = mmtts::synthesize(sy_text, modality, prompt, sy_stage1, sy_stage2, cfg);
    mmtts::write_wav(sy_out + ".wav", res.wav);
    mmtts::save_mel(sy_out + "_stage1.mel", res.stage1_mel);
    mmtts::save_mel(sy_out + "_refined.mel", res.refined_mel);
    std::cout << "wrote " << sy_out << ".wav (" << res.wav.samples.size() << " samples, "
              << res.refined_mel.frames.dim(0) << " frames)\n";
    return 0;
  }

  if (ev->parsed()) {
    mmtts::ModelConfig cfg = load_config(config_path);
    auto corpus = mmtts::load_corpus(ev_manifest, ev_align, cfg, ev_split);
    mmtts::PitchBandClassifier gender_clf(
        cfg, {{170.0, "male"}, {4000.0, "female"}});
    std::vector<std::pair<double, std::string>> emo_bands;
    {
      double lo = 80.0, hi = 400.0;
      int k = static_cast<int>(mmtts::kEmotions.size());
      for (int i = 0; i < k; ++i)
        emo_bands.emplace_back(lo + (hi - lo) * (i + 1) / k, mmtts::kEmotions[i]);
      emo_bands.back().first = 4000.0;
    }
    mmtts::PitchBandClassifier emotion_clf(cfg, emo_bands);
    mmtts::MelStatsEmbedder embedder(cfg);
    auto rep = mmtts::evaluate_corpus(corpus, ev_stage1, ev_stage2, cfg, ev_max, &emotion_clf,
                                      &gender_clf, embedder, std::cout);
    std::cout << mmtts::format_report(rep);
    if (!ev_report.empty()) {
      std::ofstream out(ev_report);
      out << mmtts::report_records(rep);
    }
    if (!std::isfinite(rep.mcd) || !std::isfinite(rep.secs)) {
      std::cerr << "error: non-finite metrics\n";
      return 3;
    }
    return 0;
  }

  if (pm->parsed()) {
    mmtts::MelSpectrogram mel = mmtts::load_mel(pm_in);
    mmtts::plot_mel_png(mel, pm_out);
    std::cout << "wrote " << pm_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mmtts::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
