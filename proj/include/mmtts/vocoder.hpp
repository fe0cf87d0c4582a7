#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mmtts/config.hpp"
#include "mmtts/tensor.hpp"

namespace mmtts {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate_hz = 16000;
};

struct MelSpectrogram {
  Tensor frames{std::vector<int>{1, 1}, std::vector<double>{0.0}};  // [T x n_mels], log domain
  int sample_rate_hz = 16000;
  int hop_length = 200;
  int n_mels = 80;
};

Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wav);

// Flat binary mel container for pipeline artifacts.
void save_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::string& path);

class MelFrontend {
 public:
  explicit MelFrontend(const ModelConfig& cfg);

  // [T x n_mels] log-magnitude mel, T = ceil(len / hop).
  MelSpectrogram extract_mel(const Waveform& wav) const;

  // Frame-synchronous F0 (0 on unvoiced) and L2 spectral energy.
  std::pair<std::vector<double>, std::vector<double>> extract_pitch_energy(
      const Waveform& wav) const;

  Waveform griffin_lim(const MelSpectrogram& mel, int iters) const;

  const Tensor& filterbank() const { return fb_; }  // [n_mels x (n_fft/2+1)]
  int frame_count(size_t n_samples) const;

 private:
  Tensor stft_magnitude(const std::vector<double>& x, int t_frames) const;
  std::vector<double> istft(const Tensor& mag, const Tensor& phase, size_t n_samples) const;

  ModelConfig cfg_;
  Tensor fb_;
  std::vector<double> window_;
};

// Neural vocoder plugin seam; the repo ships the Griffin-Lim implementation.
class Vocoder {
 public:
  virtual ~Vocoder() = default;
  virtual std::string name() const = 0;
  virtual Waveform vocode(const MelSpectrogram& mel) = 0;
};

class GriffinLimVocoder : public Vocoder {
 public:
  GriffinLimVocoder(const ModelConfig& cfg, int iters) : fe_(cfg), iters_(iters) {}
  std::string name() const override { return "griffin-lim"; }
  Waveform vocode(const MelSpectrogram& mel) override { return fe_.griffin_lim(mel, iters_); }

 private:
  MelFrontend fe_;
  int iters_;
};

std::unique_ptr<Vocoder> make_vocoder(const std::string& name, const ModelConfig& cfg);

}  // namespace mmtts
