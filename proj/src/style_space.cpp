#include "mmtts/style_space.hpp"

#include <cmath>

#include "mmtts/errors.hpp"

namespace mmtts {

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::speech: return "speech";
    case Modality::image: return "image";
    case Modality::text: return "text";
  }
  return "?";
}

std::vector<float> StubProvider::embed(const std::vector<uint8_t>& payload, Modality kind) {
  uint64_t h = fnv1a64(payload.data(), payload.size());
  h ^= seed_ + 0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(kind) + 1);
  Rng rng(h);
  std::vector<float> out(dim_);
  for (int i = 0; i < dim_; ++i) out[i] = static_cast<float>(rng.normal());
  return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& name, int output_dim,
                                                 uint64_t seed) {
  if (name == "stub") return std::make_unique<StubProvider>(output_dim, seed);
  throw ConfigError("unknown embedding provider '" + name + "' (available: stub)");
}

AdapterHead AdapterHead::create(ParamStore& ps, const std::string& prefix, int in_dim,
                                int hidden, int out_dim, Rng& rng) {
  AdapterHead a;
  a.fc1 = Linear::create(ps, prefix + ".fc1", in_dim, hidden, rng);
  a.fc2 = Linear::create(ps, prefix + ".fc2", hidden, out_dim, rng);
  return a;
}

Var AdapterHead::operator()(const Var& provider_vec) const {
  return fc2(relu(fc1(provider_vec)));
}

Var encode_adapter_prompt(const std::vector<uint8_t>& payload, Modality kind,
                          EmbeddingProvider& provider, const AdapterHead& adapter) {
  std::vector<float> raw = provider.embed(payload, kind);
  if (static_cast<int>(raw.size()) != provider.output_dim())
    throw IntegrationError("provider " + provider.name() + " returned wrong width");
  int in_dim = adapter.fc1.W.value().rows();
  if (static_cast<int>(raw.size()) != in_dim)
    throw ConfigError("provider width " + std::to_string(raw.size()) +
                      " does not match adapter input " + std::to_string(in_dim));
  Tensor t = Tensor::zeros({1, in_dim});
  for (int i = 0; i < in_dim; ++i) {
    if (!std::isfinite(raw[i])) throw IntegrationError("provider output not finite");
    t.at(0, i) = raw[i];
  }
  return adapter(constant(t));
}

SpeechStyleEncoder SpeechStyleEncoder::create(ParamStore& ps, const std::string& prefix,
                                              const ModelConfig& cfg, Rng& rng) {
  if (cfg.sse_conv_filter != 2 * cfg.style_dim)
    throw ConfigError("sse_conv_filter must be twice style_dim (gated units)");
  SpeechStyleEncoder e;
  e.style_dim_ = cfg.style_dim;
  e.spec1_ = Linear::create(ps, prefix + ".spec1", cfg.n_mels, cfg.style_dim, rng);
  e.spec2_ = Linear::create(ps, prefix + ".spec2", cfg.style_dim, cfg.style_dim, rng);
  e.tconv1_ = Conv1d::create(ps, prefix + ".tconv1", cfg.style_dim, cfg.sse_conv_filter,
                             cfg.sse_conv_kernel, rng);
  e.tconv2_ = Conv1d::create(ps, prefix + ".tconv2", cfg.style_dim, cfg.sse_conv_filter,
                             cfg.sse_conv_kernel, rng);
  e.attn_ = MultiHeadAttention::create(ps, prefix + ".attn", cfg.style_dim,
                                       cfg.sse_attention_heads, rng);
  e.gru_ = Gru::create(ps, prefix + ".gru", cfg.style_dim, cfg.style_dim, cfg.sse_gru_layers, rng);
  return e;
}

Var SpeechStyleEncoder::operator()(const Var& mel) const {
  if (mel.value().rows() < 1) throw InvalidInputError("speech style encoder: empty mel");

  Var h = silu(spec1_(mel));
  h = silu(spec2_(h));  // [T x D]

  // Gated temporal convolutions with residual connections, channel-major.
  auto gated = [&](const Var& x, const Conv1d& conv) {
    Var c = conv(transpose(x));  // [2D x T]
    int d = style_dim_;
    Var a = slice_rows(c, 0, d);
    Var g = slice_rows(c, d, 2 * d);
    return add(x, transpose(mul(a, sigmoid(g))));
  };
  h = gated(h, tconv1_);
  h = gated(h, tconv2_);

  h = add(h, attn_(h));
  h = gru_(h);  // [T x D]

  // Temporal mean pool.
  int t_len = h.value().rows();
  Var pooled = scale(matmul(constant(Tensor::full({1, t_len}, 1.0)), h), 1.0 / t_len);
  return pooled;
}

Var ampe_loss(const Var& e_i, const Var& e_t, const Var& e_s) {
  if (!e_i.value().same_shape(e_s.value()) || !e_t.value().same_shape(e_s.value()))
    throw InvalidInputError("ampe_loss: embedding length mismatch");
  Var target = detach(e_s);
  return add(mse(e_i, target), mse(e_t, target));
}

StyleEmbedding select_unified(const std::optional<StyleEmbedding>& e_s,
                              const std::optional<StyleEmbedding>& e_i,
                              const std::optional<StyleEmbedding>& e_t, Phase phase,
                              Modality modality) {
  if (phase == Phase::train) {
    if (!e_s) throw MissingPromptError("training requires the speech embedding");
    return *e_s;
  }
  const std::optional<StyleEmbedding>* pick = nullptr;
  switch (modality) {
    case Modality::speech: pick = &e_s; break;
    case Modality::image: pick = &e_i; break;
    case Modality::text: pick = &e_t; break;
  }
  if (!pick->has_value())
    throw MissingPromptError("no " + modality_name(modality) + " prompt was provided");
  return **pick;
}

}  // namespace mmtts
