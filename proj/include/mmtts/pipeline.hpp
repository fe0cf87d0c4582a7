#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mmtts/acoustic.hpp"
#include "mmtts/checkpoint.hpp"
#include "mmtts/config.hpp"
#include "mmtts/dataset.hpp"
#include "mmtts/evaluation.hpp"
#include "mmtts/reflow.hpp"
#include "mmtts/style_space.hpp"
#include "mmtts/vocoder.hpp"

namespace mmtts {

std::vector<int> tokenize_text(const std::string& text, int vocab_size);

struct CorpusItem {
  ManifestEntry entry;
  std::vector<int> tokens;
  Tensor mel;  // [T x n_mels], log domain, unnormalized
  VarianceTargets targets;  // pitch/energy already standardized
  std::vector<uint8_t> image_payload;
  std::vector<uint8_t> text_payload;
  Waveform wav;
};

struct Corpus {
  std::vector<CorpusItem> items;
  double mel_mean = 0.0, mel_std = 1.0;
  double pitch_mean = 0.0, pitch_std = 1.0;
  double energy_mean = 0.0, energy_std = 1.0;
  std::vector<std::string> warnings;

  Tensor standardized_mel(int index) const;
};

// split_filter: train | dev | test | all.
Corpus load_corpus(const std::string& manifest_path, const std::string& alignment_path,
                   const ModelConfig& cfg, const std::string& split_filter);

// Stage-1 bundle: acoustic model plus the multi-modal prompt encoder.
struct Stage1Model {
  ModelConfig cfg;
  ParamStore params;
  AcousticModel acoustic;
  SpeechStyleEncoder sse;
  AdapterHead text_adapter, image_adapter;
  std::unique_ptr<EmbeddingProvider> provider;
  double mel_mean = 0.0, mel_std = 1.0;
  double pitch_mean = 0.0, pitch_std = 1.0;
  double energy_mean = 0.0, energy_std = 1.0;
};

std::unique_ptr<Stage1Model> create_stage1(const ModelConfig& cfg);
std::unique_ptr<Stage1Model> load_stage1(const std::string& ckpt_path);

struct Stage2Model {
  ModelConfig cfg;
  ParamStore params;
  DriftNet drift;
  double mel_mean = 0.0, mel_std = 1.0;
};

std::unique_ptr<Stage2Model> create_stage2(const ModelConfig& cfg);
std::unique_ptr<Stage2Model> load_stage2(const std::string& ckpt_path);

struct TrainResult {
  double first_loss = 0.0;
  double final_loss = 0.0;
  int steps_run = 0;
};

TrainResult train_stage1(Corpus& corpus, const ModelConfig& cfg, const std::string& out_ckpt,
                         const std::string& resume_ckpt, std::ostream& log);
TrainResult train_stage2(Corpus& corpus, const std::string& stage1_ckpt, const ModelConfig& cfg,
                         const std::string& out_ckpt, std::ostream& log);

struct SynthesisResult {
  Waveform wav;
  MelSpectrogram stage1_mel;
  MelSpectrogram refined_mel;
  std::vector<int> durations;
};

// prompt_arg: wav path (speech), image path (image), or the description
// itself (text). runtime_cfg carries sampler and seed choices; architecture
// comes from the checkpoints.
SynthesisResult synthesize(const std::string& text, Modality modality,
                           const std::string& prompt_arg, const std::string& stage1_ckpt,
                           const std::string& stage2_ckpt, const ModelConfig& runtime_cfg);

MetricReport evaluate_corpus(Corpus& corpus, const std::string& stage1_ckpt,
                             const std::string& stage2_ckpt, const ModelConfig& runtime_cfg,
                             int max_items, Classifier* emotion_clf, Classifier* gender_clf,
                             SpeakerEmbedder& embedder, std::ostream& log);

}  // namespace mmtts
