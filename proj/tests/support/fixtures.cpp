#include "support/fixtures.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace mmtts::testing {

Waveform make_tone(double f0, double seconds, int sample_rate, double amp) {
  Waveform w;
  w.sample_rate_hz = sample_rate;
  size_t n = static_cast<size_t>(seconds * sample_rate);
  w.samples.resize(n);
  const double two_pi = 2.0 * 3.14159265358979323846;
  size_t ramp = std::min<size_t>(n / 10, 400);
  for (size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / sample_rate;
    double s = std::sin(two_pi * f0 * t) + 0.5 * std::sin(two_pi * 2 * f0 * t) +
               0.25 * std::sin(two_pi * 3 * f0 * t);
    double env = 1.0;
    if (i < ramp) env = static_cast<double>(i) / ramp;
    if (n - 1 - i < ramp) env = std::min(env, static_cast<double>(n - 1 - i) / ramp);
    w.samples[i] = amp * s * env / 1.75;
  }
  return w;
}

void write_toy_tree(const std::string& root, const std::vector<ToyClip>& clips,
                    int sample_rate) {
  for (const auto& c : clips) {
    fs::path dir = fs::path(root) / c.speaker / c.emotion / ("level_" + std::to_string(c.level));
    fs::create_directories(dir);
    write_wav((dir / (c.clip_id + ".wav")).string(), make_tone(c.f0, c.seconds, sample_rate));
    std::ofstream txt(dir / (c.clip_id + ".txt"));
    txt << c.transcript << "\n";
  }
}

std::vector<ToyClip> six_clip_fixture() {
  return {
      {"M03", "neutral", 1, "001", "the north wind blew hard", 125.0, 0.45},
      {"M03", "happy", 2, "002", "a bright sunny morning", 140.0, 0.45},
      {"W09", "neutral", 1, "001", "the traveler took his cloak", 235.0, 0.45},
      {"W09", "sad", 3, "002", "rain fell on the gray town", 210.0, 0.45},
      {"M05", "angry", 2, "001", "stop right there now", 118.0, 0.45},
      {"M05", "neutral", 1, "002", "warm sun and soft wind", 130.0, 0.45},
  };
}

std::vector<ToyClip> overfit_fixture(int n_utterances, double seconds) {
  const char* texts[] = {
      "the sun rose", "wind in the trees", "a cold river", "green hills far away",
      "bread and honey", "the old clock ticks", "ships on the sea", "a quiet road",
      "light in the window", "dust on the shelf", "the last train", "stars over the bay",
      "a narrow bridge", "smoke from the fire", "the open gate", "snow on the roof"};
  std::vector<ToyClip> clips;
  for (int i = 0; i < n_utterances; ++i) {
    ToyClip c;
    bool male = i % 2 == 0;
    c.speaker = male ? "M0" + std::to_string(1 + i % 4) : "W0" + std::to_string(1 + i % 4);
    c.emotion = "neutral";
    c.level = 1;
    c.clip_id = "u" + std::to_string(100 + i);
    c.transcript = texts[i % 16];
    c.f0 = male ? 115.0 + 6.0 * (i % 4) : 215.0 + 8.0 * (i % 4);
    c.seconds = seconds;
    clips.push_back(std::move(c));
  }
  return clips;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.style_dim = 16;
  cfg.adapter_hidden = 16;
  cfg.sse_gru_layers = 1;
  cfg.sse_conv_kernel = 3;
  cfg.sse_attention_heads = 1;
  cfg.sse_conv_filter = 32;  // 2 * style_dim
  cfg.vocab_size = 256;
  cfg.phoneme_embed_dim = 16;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.enc_hidden = 16;
  cfg.enc_conv_kernel = 3;
  cfg.enc_conv_filter = 32;
  cfg.enc_heads = 2;
  cfg.dropout = 0.0;
  cfg.var_conv_kernel = 3;
  cfg.var_conv_filter = 8;
  cfg.var_dropout = 0.0;
  cfg.kp_filter = 8;
  cfg.saconv_kernel = 3;
  cfg.n_mels = 80;
  cfg.reflow_residual_layers = 2;
  cfg.reflow_residual_channels = 16;
  cfg.reflow_conv_filter = 32;
  cfg.reflow_step_embed_dim = 16;
  cfg.provider_dim = 32;
  cfg.batch_size = 4;
  cfg.log_every = 50;
  cfg.seed = 1234;
  return cfg;
}

std::string temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("mmtts_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace mmtts::testing
