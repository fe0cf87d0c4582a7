#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmtts/config.hpp"
#include "mmtts/nn.hpp"
#include "mmtts/vocoder.hpp"

namespace mmtts {

enum class Modality { speech, image, text };
enum class Phase { train, infer };

std::string modality_name(Modality m);

struct StyleEmbedding {
  Tensor values{std::vector<int>{1}, std::vector<double>{0.0}};  // [style_dim]
  Modality modality = Modality::speech;
};

// Frozen pretrained encoder seam (the real CLIP-style models live outside
// this repo).
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual int output_dim() const = 0;
  virtual bool deterministic() const = 0;
  virtual std::vector<float> embed(const std::vector<uint8_t>& payload, Modality kind) = 0;
};

// Hashes the payload and expands it through a seeded fixed random projection,
// so tests run with no pretrained weights and identical inputs map to
// identical vectors.
class StubProvider : public EmbeddingProvider {
 public:
  StubProvider(int output_dim, uint64_t seed) : dim_(output_dim), seed_(seed) {}
  std::string name() const override { return "stub"; }
  int output_dim() const override { return dim_; }
  bool deterministic() const override { return true; }
  std::vector<float> embed(const std::vector<uint8_t>& payload, Modality kind) override;

 private:
  int dim_;
  uint64_t seed_;
};

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& name, int output_dim,
                                                 uint64_t seed);

// Two fully connected layers with one ReLU between them, mapping a frozen
// provider vector into the shared style space.
struct AdapterHead {
  Linear fc1, fc2;
  static AdapterHead create(ParamStore& ps, const std::string& prefix, int in_dim, int hidden,
                            int out_dim, Rng& rng);
  Var operator()(const Var& provider_vec) const;  // [1 x in] -> [1 x style_dim]
};

Var encode_adapter_prompt(const std::vector<uint8_t>& payload, Modality kind,
                          EmbeddingProvider& provider, const AdapterHead& adapter);

// Spectral FC stack, gated temporal convs, self-attention, multi-layer GRU,
// temporal mean pool.
class SpeechStyleEncoder {
 public:
  static SpeechStyleEncoder create(ParamStore& ps, const std::string& prefix,
                                   const ModelConfig& cfg, Rng& rng);
  Var operator()(const Var& mel) const;  // [T x n_mels] -> [1 x style_dim]

 private:
  Linear spec1_, spec2_;
  Conv1d tconv1_, tconv2_;
  MultiHeadAttention attn_;
  Gru gru_;
  int style_dim_ = 0;
};

// Alignment objective. e_s is the target: no gradient flows into it.
Var ampe_loss(const Var& e_i, const Var& e_t, const Var& e_s);

StyleEmbedding select_unified(const std::optional<StyleEmbedding>& e_s,
                              const std::optional<StyleEmbedding>& e_i,
                              const std::optional<StyleEmbedding>& e_t, Phase phase,
                              Modality modality);

}  // namespace mmtts
