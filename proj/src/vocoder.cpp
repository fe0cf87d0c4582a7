#include "mmtts/vocoder.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>

#include "mmtts/errors.hpp"

namespace mmtts {

namespace {

// FFTW plan creation is not thread-safe; executions on private buffers are.
std::mutex g_fftw_mutex;

struct FftwForward {
  int n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;
  explicit FftwForward(int n_fft) : n(n_fft) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftwForward() {
    {
      std::lock_guard<std::mutex> lock(g_fftw_mutex);
      fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
  }
};

struct FftwInverse {
  int n;
  fftw_complex* in;
  double* out;
  fftw_plan plan;
  explicit FftwInverse(int n_fft) : n(n_fft) {
    in = fftw_alloc_complex(n / 2 + 1);
    out = fftw_alloc_real(n);
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    plan = fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftwInverse() {
    {
      std::lock_guard<std::mutex> lock(g_fftw_mutex);
      fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
  }
};

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor build_filterbank(const ModelConfig& cfg) {
  int bins = cfg.n_fft / 2 + 1;
  double m_lo = hz_to_mel(cfg.mel_fmin);
  double m_hi = hz_to_mel(cfg.mel_fmax);
  std::vector<double> pts(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    pts[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (cfg.n_mels + 1));
  Tensor fb = Tensor::zeros({cfg.n_mels, bins});
  for (int m = 0; m < cfg.n_mels; ++m) {
    double lo = pts[m], mid = pts[m + 1], hi = pts[m + 2];
    for (int k = 0; k < bins; ++k) {
      double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      fb.at(m, k) = std::max(0.0, w);
    }
  }
  return fb;
}

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ostream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}
void wr_u16(std::ostream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav: " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw InvalidInputError("not a RIFF/WAVE file: " + path);

  int channels = 0, bits = 0, rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    uint32_t chunk_len = rd_u32(raw.data() + pos + 4);
    if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0 && pos + 8 + 16 <= raw.size()) {
      const unsigned char* f = raw.data() + pos + 8;
      uint16_t fmt = rd_u16(f);
      channels = rd_u16(f + 2);
      rate = static_cast<int>(rd_u32(f + 4));
      bits = rd_u16(f + 14);
      if (fmt != 1) throw InvalidInputError("wav must be PCM: " + path);
    } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<size_t>(chunk_len, raw.size() - data_off);
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (channels != 1) throw InvalidInputError("wav must be mono: " + path);
  if (bits != 16) throw InvalidInputError("wav must be 16-bit PCM: " + path);
  if (data_off == 0 || data_len < 2) throw InvalidInputError("wav has no samples: " + path);

  Waveform wav;
  wav.sample_rate_hz = rate;
  size_t n = data_len / 2;
  wav.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s = static_cast<int16_t>(raw[data_off + 2 * i] | (raw[data_off + 2 * i + 1] << 8));
    wav.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return wav;
}

void write_wav(const std::string& path, const Waveform& wav) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write wav: " + path);
  uint32_t data_len = static_cast<uint32_t>(wav.samples.size() * 2);
  out.write("RIFF", 4);
  wr_u32(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  wr_u32(out, 16);
  wr_u16(out, 1);
  wr_u16(out, 1);
  wr_u32(out, static_cast<uint32_t>(wav.sample_rate_hz));
  wr_u32(out, static_cast<uint32_t>(wav.sample_rate_hz * 2));
  wr_u16(out, 2);
  wr_u16(out, 16);
  out.write("data", 4);
  wr_u32(out, data_len);
  for (double s : wav.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0));
    char b[2] = {static_cast<char>(q & 0xff), static_cast<char>((q >> 8) & 0xff)};
    out.write(b, 2);
  }
  if (!out) throw IoError("failed writing wav: " + path);
}

void save_mel(const std::string& path, const MelSpectrogram& mel) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write mel: " + path);
  out.write("MMTTSMEL", 8);
  wr_u32(out, static_cast<uint32_t>(mel.sample_rate_hz));
  wr_u32(out, static_cast<uint32_t>(mel.hop_length));
  wr_u32(out, static_cast<uint32_t>(mel.n_mels));
  wr_u32(out, static_cast<uint32_t>(mel.frames.rows()));
  out.write(reinterpret_cast<const char*>(mel.frames.data()),
            static_cast<std::streamsize>(mel.frames.numel() * 8));
  if (!out) throw IoError("failed writing mel: " + path);
}

MelSpectrogram load_mel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mel: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "MMTTSMEL", 8) != 0)
    throw IoError("not a mel file: " + path);
  unsigned char hdr[16];
  in.read(reinterpret_cast<char*>(hdr), 16);
  if (!in) throw IoError("mel file truncated: " + path);
  MelSpectrogram mel;
  mel.sample_rate_hz = static_cast<int>(rd_u32(hdr));
  mel.hop_length = static_cast<int>(rd_u32(hdr + 4));
  mel.n_mels = static_cast<int>(rd_u32(hdr + 8));
  int t_len = static_cast<int>(rd_u32(hdr + 12));
  mel.frames = Tensor::zeros({t_len, mel.n_mels});
  in.read(reinterpret_cast<char*>(mel.frames.data()),
          static_cast<std::streamsize>(mel.frames.numel() * 8));
  if (!in) throw IoError("mel file truncated: " + path);
  return mel;
}

MelFrontend::MelFrontend(const ModelConfig& cfg) : cfg_(cfg), fb_(build_filterbank(cfg)) {
  window_.resize(cfg_.win_length);
  for (int i = 0; i < cfg_.win_length; ++i)
    window_[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / cfg_.win_length));
}

int MelFrontend::frame_count(size_t n_samples) const {
  return static_cast<int>((n_samples + cfg_.hop_length - 1) / cfg_.hop_length);
}

// Frames centered at i*hop; Hann window of win_length sits centered in the
// n_fft buffer, zero-padded.
Tensor MelFrontend::stft_magnitude(const std::vector<double>& x, int t_frames) const {
  int bins = cfg_.n_fft / 2 + 1;
  int half = cfg_.win_length / 2;
  int pad = (cfg_.n_fft - cfg_.win_length) / 2;
  FftwForward fft(cfg_.n_fft);
  Tensor mag = Tensor::zeros({bins, t_frames});
  for (int t = 0; t < t_frames; ++t) {
    std::fill(fft.in, fft.in + cfg_.n_fft, 0.0);
    int center = t * cfg_.hop_length;
    for (int n = 0; n < cfg_.win_length; ++n) {
      int64_t src = static_cast<int64_t>(center) - half + n;
      if (src >= 0 && src < static_cast<int64_t>(x.size()))
        fft.in[pad + n] = x[src] * window_[n];
    }
    fftw_execute(fft.plan);
    for (int k = 0; k < bins; ++k)
      mag.at(k, t) = std::hypot(fft.out[k][0], fft.out[k][1]);
  }
  return mag;
}

MelSpectrogram MelFrontend::extract_mel(const Waveform& wav) const {
  if (wav.samples.empty()) throw InvalidInputError("extract_mel: empty audio");
  int t_frames = frame_count(wav.samples.size());
  Tensor mag = stft_magnitude(wav.samples, t_frames);
  int bins = cfg_.n_fft / 2 + 1;
  MelSpectrogram mel;
  mel.sample_rate_hz = cfg_.sample_rate;
  mel.hop_length = cfg_.hop_length;
  mel.n_mels = cfg_.n_mels;
  mel.frames = Tensor::zeros({t_frames, cfg_.n_mels});
  for (int t = 0; t < t_frames; ++t)
    for (int m = 0; m < cfg_.n_mels; ++m) {
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) acc += fb_.at(m, k) * mag.at(k, t);
      mel.frames.at(t, m) = std::log(std::max(acc, cfg_.log_floor));
    }
  return mel;
}

std::pair<std::vector<double>, std::vector<double>> MelFrontend::extract_pitch_energy(
    const Waveform& wav) const {
  if (wav.samples.empty()) throw InvalidInputError("extract_pitch_energy: empty audio");
  int t_frames = frame_count(wav.samples.size());
  Tensor mag = stft_magnitude(wav.samples, t_frames);
  int bins = cfg_.n_fft / 2 + 1;

  std::vector<double> pitch(t_frames, 0.0), energy(t_frames, 0.0);
  for (int t = 0; t < t_frames; ++t) {
    double e2 = 0.0;
    for (int k = 0; k < bins; ++k) e2 += mag.at(k, t) * mag.at(k, t);
    energy[t] = std::sqrt(e2);
  }

  int half = cfg_.win_length / 2;
  int lag_min = cfg_.sample_rate / 400;
  int lag_max = cfg_.sample_rate / 60;
  std::vector<double> seg(cfg_.win_length);
  for (int t = 0; t < t_frames; ++t) {
    int center = t * cfg_.hop_length;
    for (int n = 0; n < cfg_.win_length; ++n) {
      int64_t src = static_cast<int64_t>(center) - half + n;
      seg[n] = (src >= 0 && src < static_cast<int64_t>(wav.samples.size())) ? wav.samples[src] : 0.0;
    }
    double r0 = 0.0;
    for (double s : seg) r0 += s * s;
    if (r0 < 1e-8) continue;
    int best_lag = 0;
    double best_r = 0.0;
    std::vector<double> rs(lag_max + 2, 0.0);
    for (int lag = lag_min - 1; lag <= lag_max + 1 && lag < cfg_.win_length; ++lag) {
      double r = 0.0;
      for (int n = 0; n + lag < cfg_.win_length; ++n) r += seg[n] * seg[n + lag];
      rs[lag] = r;
      if (lag >= lag_min && lag <= lag_max && r > best_r) {
        best_r = r;
        best_lag = lag;
      }
    }
    if (best_lag == 0 || best_r / r0 < 0.5) continue;
    double lag_f = best_lag;
    if (best_lag > lag_min - 1 && best_lag + 1 < static_cast<int>(rs.size())) {
      double a = rs[best_lag - 1], b = rs[best_lag], c = rs[best_lag + 1];
      double den = a - 2.0 * b + c;
      if (std::abs(den) > 1e-12) lag_f += 0.5 * (a - c) / den;
    }
    pitch[t] = cfg_.sample_rate / lag_f;
  }
  return {pitch, energy};
}

std::vector<double> MelFrontend::istft(const Tensor& mag, const Tensor& phase,
                                       size_t n_samples) const {
  int bins = cfg_.n_fft / 2 + 1;
  int t_frames = mag.dim(1);
  int half = cfg_.win_length / 2;
  int pad = (cfg_.n_fft - cfg_.win_length) / 2;
  FftwInverse ifft(cfg_.n_fft);
  std::vector<double> acc(n_samples, 0.0), norm(n_samples, 0.0);
  for (int t = 0; t < t_frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      ifft.in[k][0] = mag.at(k, t) * std::cos(phase.at(k, t));
      ifft.in[k][1] = mag.at(k, t) * std::sin(phase.at(k, t));
    }
    fftw_execute(ifft.plan);
    int center = t * cfg_.hop_length;
    for (int n = 0; n < cfg_.win_length; ++n) {
      int64_t dst = static_cast<int64_t>(center) - half + n;
      if (dst < 0 || dst >= static_cast<int64_t>(n_samples)) continue;
      double v = ifft.out[pad + n] / cfg_.n_fft;
      acc[dst] += v * window_[n];
      norm[dst] += window_[n] * window_[n];
    }
  }
  for (size_t i = 0; i < n_samples; ++i)
    if (norm[i] > 1e-8) acc[i] /= norm[i];
  return acc;
}

Waveform MelFrontend::griffin_lim(const MelSpectrogram& mel, int iters) const {
  if (iters < 1) throw InvalidInputError("griffin_lim: iters must be >= 1");
  if (mel.frames.rows() < 1) throw InvalidInputError("griffin_lim: empty mel");
  int t_frames = mel.frames.rows();
  int bins = cfg_.n_fft / 2 + 1;

  // Approximate mel inversion: transposed filterbank scaled by per-band
  // Gram diagonal, then a few projected-gradient refinements.
  std::vector<double> gram(cfg_.n_mels, 0.0);
  for (int m = 0; m < cfg_.n_mels; ++m) {
    double g = 0.0;
    for (int k = 0; k < bins; ++k) g += fb_.at(m, k) * fb_.at(m, k);
    gram[m] = std::max(g, 1e-12);
  }
  Tensor lin_target = Tensor::zeros({cfg_.n_mels, t_frames});
  for (int t = 0; t < t_frames; ++t)
    for (int m = 0; m < cfg_.n_mels; ++m) lin_target.at(m, t) = std::exp(mel.frames.at(t, m));

  Tensor mag = Tensor::zeros({bins, t_frames});
  for (int refine = 0; refine < 10; ++refine) {
    for (int t = 0; t < t_frames; ++t) {
      for (int m = 0; m < cfg_.n_mels; ++m) {
        double have = 0.0;
        for (int k = 0; k < bins; ++k) have += fb_.at(m, k) * mag.at(k, t);
        double corr = (lin_target.at(m, t) - have) / gram[m];
        for (int k = 0; k < bins; ++k) mag.at(k, t) += fb_.at(m, k) * corr;
      }
      for (int k = 0; k < bins; ++k) mag.at(k, t) = std::max(0.0, mag.at(k, t));
    }
  }

  size_t n_samples = static_cast<size_t>(t_frames) * cfg_.hop_length;
  Tensor phase = Tensor::zeros({bins, t_frames});
  std::vector<double> x;
  for (int it = 0; it < iters; ++it) {
    x = istft(mag, phase, n_samples);
    Tensor remg = Tensor::zeros({bins, t_frames});
    FftwForward fft(cfg_.n_fft);
    int half = cfg_.win_length / 2;
    int pad = (cfg_.n_fft - cfg_.win_length) / 2;
    for (int t = 0; t < t_frames; ++t) {
      std::fill(fft.in, fft.in + cfg_.n_fft, 0.0);
      int center = t * cfg_.hop_length;
      for (int n = 0; n < cfg_.win_length; ++n) {
        int64_t src = static_cast<int64_t>(center) - half + n;
        if (src >= 0 && src < static_cast<int64_t>(x.size())) fft.in[pad + n] = x[src] * window_[n];
      }
      fftw_execute(fft.plan);
      for (int k = 0; k < bins; ++k) phase.at(k, t) = std::atan2(fft.out[k][1], fft.out[k][0]);
    }
  }
  x = istft(mag, phase, n_samples);

  Waveform out;
  out.sample_rate_hz = cfg_.sample_rate;
  out.samples = std::move(x);
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.95)
    for (double& s : out.samples) s *= 0.95 / peak;
  return out;
}

std::unique_ptr<Vocoder> make_vocoder(const std::string& name, const ModelConfig& cfg) {
  if (name == "griffin-lim") return std::make_unique<GriffinLimVocoder>(cfg, 64);
  throw ConfigError("unknown vocoder '" + name + "' (available: griffin-lim)");
}

}  // namespace mmtts
