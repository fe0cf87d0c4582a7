#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mmtts/vocoder.hpp"

namespace mmtts {

struct MetricReport {
  double mcd = 0.0;
  double secs = 0.0;
  double acc_emo = 0.0;
  double acc_gen = 0.0;
  int n_items = 0;
};

std::string format_report(const MetricReport& r);       // human-readable table
std::string report_records(const MetricReport& r);      // line-delimited fields

// Type-II DCT of each log-mel frame, first k coefficients.
Tensor mel_to_cepstra(const MelSpectrogram& mel, int k);

// Monotone, contiguous alignment path minimizing summed euclidean distance.
std::vector<std::pair<int, int>> dtw_path(const Tensor& a, const Tensor& b);

// (10/ln10) * sqrt(2) * mean over the DTW path of the c_1..c_{K-1} distance.
double mcd(const Tensor& ref_cepstra, const Tensor& syn_cepstra);

double secs(const std::vector<double>& emb_a, const std::vector<double>& emb_b);

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string name() const = 0;
  virtual std::string classify(const Waveform& wav) = 0;
};

class SpeakerEmbedder {
 public:
  virtual ~SpeakerEmbedder() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> embed(const Waveform& wav) = 0;
};

// Test stubs: the classifier bins utterances by median F0 against the given
// thresholds; the embedder summarizes per-band mel statistics.
class PitchBandClassifier : public Classifier {
 public:
  PitchBandClassifier(const ModelConfig& cfg, std::vector<std::pair<double, std::string>> bands)
      : cfg_(cfg), bands_(std::move(bands)) {}
  std::string name() const override { return "pitch-band"; }
  std::string classify(const Waveform& wav) override;

 private:
  ModelConfig cfg_;
  std::vector<std::pair<double, std::string>> bands_;  // (upper F0 bound, label), ascending
};

class MelStatsEmbedder : public SpeakerEmbedder {
 public:
  explicit MelStatsEmbedder(const ModelConfig& cfg) : cfg_(cfg) {}
  std::string name() const override { return "mel-stats"; }
  std::vector<double> embed(const Waveform& wav) override;

 private:
  ModelConfig cfg_;
};

double classification_accuracy(const std::vector<std::pair<Waveform, std::string>>& items,
                               Classifier& classifier,
                               std::vector<std::string>* failures = nullptr);

}  // namespace mmtts
