#pragma once

#include <string>
#include <vector>

#include "mmtts/config.hpp"
#include "mmtts/vocoder.hpp"

namespace mmtts::testing {

// Harmonic tone with a soft attack/release envelope so mels have structure
// and frame energies are stable.
Waveform make_tone(double f0, double seconds, int sample_rate, double amp = 0.3);

struct ToyClip {
  std::string speaker;   // e.g. "M03"
  std::string emotion;
  int level = 1;
  std::string clip_id;   // file stem
  std::string transcript;
  double f0 = 120.0;
  double seconds = 0.5;
};

// Writes `<root>/<speaker>/<emotion>/<level>/<clip>.wav` plus a sidecar
// transcript for every clip.
void write_toy_tree(const std::string& root, const std::vector<ToyClip>& clips,
                    int sample_rate = 16000);

// The bundled 6-clip fixture: 3 speakers x 2 clips, both genders, two
// emotions, stable pitches.
std::vector<ToyClip> six_clip_fixture();

// n-utterance single-split corpus for overfit runs: distinct transcripts,
// gender-consistent pitches, all 8 emotions cycled.
std::vector<ToyClip> overfit_fixture(int n_utterances, double seconds);

// Small configuration that keeps graph sizes friendly to a single core.
ModelConfig tiny_config();

std::string temp_dir(const std::string& tag);

}  // namespace mmtts::testing
