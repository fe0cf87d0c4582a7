#pragma once

#include <string>
#include <vector>

#include "mmtts/config.hpp"
#include "mmtts/nn.hpp"
#include "mmtts/vocoder.hpp"

namespace mmtts {

// (x - mean) / (std + eps), per channel over the time axis. x is [C x T].
Var normalize_context(const Var& x, double eps = 1e-5);

struct SAConvParams {
  Var kernel;  // [C x 1 x K] depthwise
  Var bias;    // [C]
};

// Maps a style embedding to depthwise conv weights: the style vector is read
// as a 1-channel sequence by a small residual conv stack, and its per-position
// features are remapped to the target channel count.
class KernelPredictor {
 public:
  static KernelPredictor create(ParamStore& ps, const std::string& prefix, int style_dim,
                                int channels, int kernel, int filter, Rng& rng);
  SAConvParams operator()(const Var& e_u) const;  // e_u [1 x style_dim]
  int channels() const { return channels_; }

 private:
  Conv1d in_conv_;
  std::vector<Conv1d> res_;
  Conv1d kernel_head_;
  Conv1d bias_head_;
  Linear remap_;
  int channels_ = 0, kernel_w_ = 0, style_dim_ = 0;
};

// conv_kernel(x_norm) + conv_bias with predicted parameters; shape-preserving.
Var saconv_apply(const Var& x, const SAConvParams& p, double eps = 1e-5);

struct VarianceTargets {
  std::vector<int> durations;   // frames per token, sum = T
  std::vector<double> pitch;    // per frame
  std::vector<double> energy;   // per frame
};

struct PredictedVariances {
  Var log_dur;  // [L x 1], log(d+1) domain
  Var pitch;    // [T x 1]
  Var energy;   // [T x 1]
};

Var length_regulate(const Var& hidden, const std::vector<int>& durations);

class VariancePredictor {
 public:
  static VariancePredictor create(ParamStore& ps, const std::string& prefix,
                                  const ModelConfig& cfg, Rng& rng);
  Var operator()(const Var& h, const Var& e_u, Rng* drng, bool training) const;  // [N x 1]

 private:
  Linear cond_;
  Conv1d conv1_, conv2_;
  LayerNorm ln1_, ln2_;
  Linear out_;
  double dropout_ = 0.5;
};

struct FftLayer {
  MultiHeadAttention attn;
  Conv1d conv1, conv2;
  KernelPredictor kp_attn, kp_conv;
  double dropout_p = 0.1;
  static FftLayer create(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg,
                         Rng& rng);
  Var operator()(const Var& x, const Var& e_u, Rng* drng, bool training) const;  // [T x H]
};

class AcousticModel {
 public:
  static AcousticModel create(ParamStore& ps, const ModelConfig& cfg, Rng& rng);

  Var encode_phonemes(const std::vector<int>& tokens, const Var& e_u, Rng* drng,
                      bool training) const;  // [L x H]
  Var decode_mel(const Var& expanded, const Var& e_u, Rng* drng, bool training) const;  // [T x 80]

  struct TrainOut {
    Var mel;
    PredictedVariances var;
  };
  // Teacher-forced pass: ground-truth durations drive the length regulator and
  // ground-truth pitch/energy are embedded; predictors still emit their own
  // values for the variance loss.
  TrainOut forward_train(const std::vector<int>& tokens, const Var& e_u,
                         const VarianceTargets& gt, Rng& drng, bool training = true) const;

  struct InferOut {
    Tensor mel;
    std::vector<int> durations;
  };
  InferOut infer(const std::vector<int>& tokens, const Tensor& e_u) const;

  const VariancePredictor& duration_predictor() const { return dur_pred_; }

 private:
  Var embed_tokens(const std::vector<int>& tokens) const;
  Var add_variance_embeddings(const Var& expanded, const Var& pitch, const Var& energy) const;

  ModelConfig cfg_;
  Var embed_;  // [vocab x phoneme_embed_dim]
  Linear in_proj_;
  std::vector<FftLayer> enc_layers_;
  VariancePredictor dur_pred_, pitch_pred_, energy_pred_;
  Linear pitch_proj_, energy_proj_;
  std::vector<FftLayer> dec_layers_;
  Linear mel_out_;
};

// L_Mel (MAE) + L_Var (MSE on log-durations, pitch, energy) + L_AMPE.
Var stage1_loss(const Var& pred_mel, const Tensor& gt_mel, const PredictedVariances& pred,
                const VarianceTargets& gt, const Var& ampe);

}  // namespace mmtts
