#pragma once

#include <cstdint>
#include <string>

namespace mmtts {

// All hyperparameters, with defaults matching the reference configuration.
struct ModelConfig {
  // style space
  int style_dim = 256;
  int adapter_hidden = 256;
  int sse_gru_layers = 3;
  int sse_conv_kernel = 5;
  int sse_attention_heads = 1;
  int sse_conv_filter = 512;

  // acoustic model
  int vocab_size = 256;
  int phoneme_embed_dim = 192;
  int enc_layers = 4;
  int dec_layers = 4;
  int enc_hidden = 256;
  int enc_conv_kernel = 9;
  int enc_conv_filter = 1024;
  int enc_heads = 2;
  double dropout = 0.1;
  int var_conv_kernel = 3;
  int var_conv_filter = 256;
  double var_dropout = 0.5;
  int kp_conv_kernel = 3;
  int kp_filter = 16;
  int saconv_kernel = 3;
  int n_mels = 80;

  // reflow refiner
  int reflow_residual_layers = 20;
  int reflow_residual_channels = 256;
  int reflow_conv_kernel = 3;
  int reflow_conv_filter = 512;
  int reflow_step_embed_dim = 256;

  // audio front-end
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop_length = 200;
  int win_length = 800;
  double mel_fmin = 0.0;
  double mel_fmax = 8000.0;
  double log_floor = 1e-5;

  // training
  double lr_stage1 = 1e-4;
  double lr_stage2 = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int stage1_iters = 200000;
  int stage2_iters = 200000;
  int log_every = 100;
  uint64_t seed = 1234;
  bool speech_prompt_only = false;

  // sampler
  std::string sampler = "rk45";
  int euler_steps = 1;
  double rtol = 1e-5;
  double atol = 1e-5;

  // embedding provider
  std::string provider = "stub";
  int provider_dim = 512;

  void validate() const;
};

// Plain `key = value` text, one field per line, '#' comments.
ModelConfig parse_config(const std::string& text);
std::string serialize_config(const ModelConfig& cfg);
ModelConfig load_config_file(const std::string& path);

// MMTTS_SEED, when set, wins over the config value.
void apply_env_overrides(ModelConfig& cfg);

}  // namespace mmtts
