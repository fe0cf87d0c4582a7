#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mmtts/vocoder.hpp"

namespace mmtts {

enum class Gender { male, female };
enum class Split { train, dev, test };

extern const std::vector<std::string> kEmotions;  // the 8-emotion label set

struct StyleLabels {
  Gender gender = Gender::male;
  std::string emotion = "neutral";
  int emotion_level = 1;  // 1..3
};

struct ManifestEntry {
  std::string utt_id;
  std::string audio_path;
  std::string transcript;
  std::string face_image_path;  // may be empty
  std::string prompt_text;
  StyleLabels labels;
  Split split = Split::train;
};

struct ManifestSummary {
  int64_t pairs = 0;
  double total_hours = 0.0;
  int speakers = 0;
  int male_speakers = 0;
  int female_speakers = 0;
  std::vector<std::string> warnings;
};

struct BuildResult {
  std::vector<ManifestEntry> entries;
  ManifestSummary summary;
};

std::string gender_name(Gender g);
std::string split_name(Split s);
Split split_from_name(const std::string& s);

// ASR seam; the file-backed stub reads pre-computed hypotheses.
class AsrPlugin {
 public:
  virtual ~AsrPlugin() = default;
  virtual std::string name() const = 0;
  virtual std::string transcribe(const Waveform& wav) = 0;
};

class FileBackedAsr : public AsrPlugin {
 public:
  explicit FileBackedAsr(std::map<std::string, std::string> by_key) : table_(std::move(by_key)) {}
  std::string name() const override { return "file-backed"; }
  std::string transcribe(const Waveform& wav) override;
  void bind(const std::string& key) { current_ = key; }

 private:
  std::map<std::string, std::string> table_;
  std::string current_;
};

// 1 - normalized edit distance on lowercased, punctuation-stripped text.
std::pair<std::string, double> match_transcript(const std::string& asr_hypothesis,
                                                const std::vector<std::string>& candidates);

std::vector<int> select_frames(int video_frame_count, int k, uint64_t seed);

std::string render_prompt(const StyleLabels& labels);
// Inverse of render_prompt for any of its 48 outputs (and their paraphrases'
// keyword forms): recovers the labels from the words.
StyleLabels parse_prompt(const std::string& prompt);

using ParaphraseTable = std::map<std::string, std::vector<std::string>>;
const ParaphraseTable& default_paraphrases();
std::string paraphrase(const std::string& prompt, const ParaphraseTable& table, uint64_t seed);

struct BuildConfig {
  uint64_t seed = 0;
  int frames_per_clip = 2;
  double train_fraction = 0.8;
  double dev_fraction = 0.1;
  bool use_paraphrases = true;
};

// Walks `<speaker>/<emotion>/<level>/<clip>.wav`. Transcripts come from
// sidecar `<clip>.txt` files; `<clip>.png` is picked up as the face image
// when present.
BuildResult build_manifest(const std::string& root_dir, const BuildConfig& cfg);

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace mmtts
