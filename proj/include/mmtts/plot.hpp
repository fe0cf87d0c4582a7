#pragma once

#include <string>

#include "mmtts/vocoder.hpp"

namespace mmtts {

// Writes the mel as a PNG heat map, time on x, mel bin on y (low bins at the
// bottom). Each frame becomes a fixed-width column block, so the image width
// is a multiple of T. Deterministic bytes for identical input.
void plot_mel_png(const MelSpectrogram& mel, const std::string& out_path, int pixels_per_frame = 4);

}  // namespace mmtts
