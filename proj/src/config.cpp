#include "mmtts/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mmtts/errors.hpp"

namespace mmtts {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&)> set;
};

int parse_int(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + k + ": '" + v + "'");
  }
}

double parse_double(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + k + ": '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad seed for " + k + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + k + ": '" + v + "'");
}

#define INT_FIELD(name)                                                     \
  {#name, {[](const ModelConfig& c) { return std::to_string(c.name); },    \
           [](ModelConfig& c, const std::string& v) { c.name = parse_int(#name, v); }}}
#define DBL_FIELD(name)                                                     \
  {#name, {[](const ModelConfig& c) { return fmt_double(c.name); },        \
           [](ModelConfig& c, const std::string& v) { c.name = parse_double(#name, v); }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      INT_FIELD(style_dim),
      INT_FIELD(adapter_hidden),
      INT_FIELD(sse_gru_layers),
      INT_FIELD(sse_conv_kernel),
      INT_FIELD(sse_attention_heads),
      INT_FIELD(sse_conv_filter),
      INT_FIELD(vocab_size),
      INT_FIELD(phoneme_embed_dim),
      INT_FIELD(enc_layers),
      INT_FIELD(dec_layers),
      INT_FIELD(enc_hidden),
      INT_FIELD(enc_conv_kernel),
      INT_FIELD(enc_conv_filter),
      INT_FIELD(enc_heads),
      DBL_FIELD(dropout),
      INT_FIELD(var_conv_kernel),
      INT_FIELD(var_conv_filter),
      DBL_FIELD(var_dropout),
      INT_FIELD(kp_conv_kernel),
      INT_FIELD(kp_filter),
      INT_FIELD(saconv_kernel),
      INT_FIELD(n_mels),
      INT_FIELD(reflow_residual_layers),
      INT_FIELD(reflow_residual_channels),
      INT_FIELD(reflow_conv_kernel),
      INT_FIELD(reflow_conv_filter),
      INT_FIELD(reflow_step_embed_dim),
      INT_FIELD(sample_rate),
      INT_FIELD(n_fft),
      INT_FIELD(hop_length),
      INT_FIELD(win_length),
      DBL_FIELD(mel_fmin),
      DBL_FIELD(mel_fmax),
      DBL_FIELD(log_floor),
      DBL_FIELD(lr_stage1),
      DBL_FIELD(lr_stage2),
      DBL_FIELD(adam_beta1),
      DBL_FIELD(adam_beta2),
      DBL_FIELD(adam_eps),
      INT_FIELD(batch_size),
      INT_FIELD(stage1_iters),
      INT_FIELD(stage2_iters),
      INT_FIELD(log_every),
      {"seed", {[](const ModelConfig& c) { return std::to_string(c.seed); },
                [](ModelConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }}},
      {"speech_prompt_only",
       {[](const ModelConfig& c) { return std::string(c.speech_prompt_only ? "true" : "false"); },
        [](ModelConfig& c, const std::string& v) { c.speech_prompt_only = parse_bool("speech_prompt_only", v); }}},
      {"sampler", {[](const ModelConfig& c) { return c.sampler; },
                   [](ModelConfig& c, const std::string& v) { c.sampler = v; }}},
      INT_FIELD(euler_steps),
      DBL_FIELD(rtol),
      DBL_FIELD(atol),
      {"provider", {[](const ModelConfig& c) { return c.provider; },
                    [](ModelConfig& c, const std::string& v) { c.provider = v; }}},
      INT_FIELD(provider_dim),
  };
  return f;
}

#undef INT_FIELD
#undef DBL_FIELD

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](const char* name, auto v) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive("style_dim", style_dim);
  positive("adapter_hidden", adapter_hidden);
  positive("sse_gru_layers", sse_gru_layers);
  positive("sse_conv_kernel", sse_conv_kernel);
  positive("sse_attention_heads", sse_attention_heads);
  positive("sse_conv_filter", sse_conv_filter);
  positive("enc_hidden", enc_hidden);
  positive("n_mels", n_mels);
  positive("reflow_residual_layers", reflow_residual_layers);
  positive("reflow_residual_channels", reflow_residual_channels);
  positive("sample_rate", sample_rate);
  positive("hop_length", hop_length);
  positive("euler_steps", euler_steps);
  positive("rtol", rtol);
  positive("atol", atol);
  positive("provider_dim", provider_dim);
  if (enc_hidden % enc_heads != 0) throw ConfigError("enc_heads must divide enc_hidden");
  if (style_dim % sse_attention_heads != 0)
    throw ConfigError("sse_attention_heads must divide style_dim");
  if (reflow_step_embed_dim % 2 != 0) throw ConfigError("reflow_step_embed_dim must be even");
  if (reflow_conv_filter != 2 * reflow_residual_channels)
    throw ConfigError("reflow_conv_filter must be twice reflow_residual_channels (gated units)");
  if (sampler != "rk45" && sampler != "euler")
    throw ConfigError("sampler must be rk45 or euler, got '" + sampler + "'");
  if (win_length > n_fft) throw ConfigError("win_length must not exceed n_fft");
  if (saconv_kernel % 2 == 0 || enc_conv_kernel % 2 == 0 || var_conv_kernel % 2 == 0)
    throw ConfigError("conv kernels must be odd for same padding");
  if (dropout < 0.0 || dropout >= 1.0 || var_dropout < 0.0 || var_dropout >= 1.0)
    throw ConfigError("dropout must lie in [0, 1)");
}

ModelConfig parse_config(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + s);
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end())
      throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(lineno) + ")");
    it->second.set(cfg, val);
  }
  cfg.validate();
  return cfg;
}

std::string serialize_config(const ModelConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, field] : fields()) out << key << " = " << field.get(cfg) << "\n";
  return out.str();
}

ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_env_overrides(ModelConfig& cfg) {
  if (const char* s = std::getenv("MMTTS_SEED")) cfg.seed = parse_u64("MMTTS_SEED", s);
}

}  // namespace mmtts
