#include "mmtts/acoustic.hpp"

#include <cmath>

#include "mmtts/errors.hpp"

namespace mmtts {

Var normalize_context(const Var& x, double eps) {
  if (x.value().ndim() != 2 || x.value().cols() < 1)
    throw InvalidInputError("normalize_context expects a [C x T] tensor");
  return row_normalize(x, eps);
}

KernelPredictor KernelPredictor::create(ParamStore& ps, const std::string& prefix,
                                        int style_dim, int channels, int kernel, int filter,
                                        Rng& rng) {
  KernelPredictor kp;
  kp.channels_ = channels;
  kp.kernel_w_ = kernel;
  kp.style_dim_ = style_dim;
  kp.in_conv_ = Conv1d::create(ps, prefix + ".in", 1, filter, 3, rng);
  for (int i = 0; i < 6; ++i)
    kp.res_.push_back(Conv1d::create(ps, prefix + ".res" + std::to_string(i), filter, filter, 3, rng));
  kp.kernel_head_ = Conv1d::create(ps, prefix + ".khead", filter, kernel, 3, rng);
  kp.bias_head_ = Conv1d::create(ps, prefix + ".bhead", filter, 1, 3, rng);
  kp.remap_ = Linear::create(ps, prefix + ".remap", style_dim, channels, rng);
  return kp;
}

SAConvParams KernelPredictor::operator()(const Var& e_u) const {
  if (e_u.value().ndim() != 2 || e_u.value().rows() != 1 || e_u.value().cols() != style_dim_)
    throw InvalidInputError("kernel predictor expects a [1 x style_dim] embedding");

  Var h = relu(in_conv_(e_u));  // style vector as a 1-channel sequence -> [F x D]
  for (const auto& c : res_) h = add(h, relu(c(h)));
  Var kraw = kernel_head_(h);  // [K x D]
  Var braw = bias_head_(h);    // [1 x D]

  Var kernel = reshape(transpose(remap_(kraw)), {channels_, 1, kernel_w_});
  Var bias = reshape(remap_(braw), {channels_});

  // Fixed center tap so freshly initialized blocks start near identity.
  Tensor delta = Tensor::zeros({channels_, 1, kernel_w_});
  for (int c = 0; c < channels_; ++c) delta.at(c, 0, kernel_w_ / 2) = 1.0;
  return {add(kernel, constant(delta)), bias};
}

Var saconv_apply(const Var& x, const SAConvParams& p, double eps) {
  if (x.value().ndim() != 2 || x.value().dim(0) != p.kernel.value().dim(0))
    throw InvalidInputError("saconv: channel count mismatch (" + x.value().shape_str() + " vs " +
                            p.kernel.value().shape_str() + ")");
  return conv1d_depthwise(normalize_context(x, eps), p.kernel, p.bias);
}

Var length_regulate(const Var& hidden, const std::vector<int>& durations) {
  int l = hidden.value().rows();
  if (static_cast<int>(durations.size()) != l)
    throw InvalidInputError("length_regulate: duration count does not match token count");
  int total = 0;
  for (int d : durations) {
    if (d < 0) throw InvalidInputError("length_regulate: negative duration");
    total += d;
  }
  if (total == 0) throw InvalidInputError("length_regulate: total duration is zero");
  Tensor sel = Tensor::zeros({total, l});
  int row = 0;
  for (int i = 0; i < l; ++i)
    for (int r = 0; r < durations[i]; ++r) sel.at(row++, i) = 1.0;
  return matmul(constant(sel), hidden);
}

VariancePredictor VariancePredictor::create(ParamStore& ps, const std::string& prefix,
                                            const ModelConfig& cfg, Rng& rng) {
  VariancePredictor vp;
  vp.cond_ = Linear::create(ps, prefix + ".cond", cfg.style_dim, cfg.enc_hidden, rng);
  vp.conv1_ = Conv1d::create(ps, prefix + ".conv1", cfg.enc_hidden, cfg.var_conv_filter,
                             cfg.var_conv_kernel, rng);
  vp.conv2_ = Conv1d::create(ps, prefix + ".conv2", cfg.var_conv_filter, cfg.var_conv_filter,
                             cfg.var_conv_kernel, rng);
  vp.ln1_ = LayerNorm::create(ps, prefix + ".ln1", cfg.var_conv_filter);
  vp.ln2_ = LayerNorm::create(ps, prefix + ".ln2", cfg.var_conv_filter);
  vp.out_ = Linear::create(ps, prefix + ".out", cfg.var_conv_filter, 1, rng);
  vp.dropout_ = cfg.var_dropout;
  return vp;
}

Var VariancePredictor::operator()(const Var& h, const Var& e_u, Rng* drng, bool training) const {
  Var x = add_row_broadcast(h, reshape(cond_(e_u), {cond_.b.value().dim(0)}));
  Var u = transpose(relu(conv1_(transpose(x))));
  u = ln1_(u);
  if (training && drng) u = dropout(u, dropout_, *drng, true);
  u = transpose(relu(conv2_(transpose(u))));
  u = ln2_(u);
  if (training && drng) u = dropout(u, dropout_, *drng, true);
  return out_(u);
}

FftLayer FftLayer::create(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg,
                          Rng& rng) {
  FftLayer f;
  f.attn = MultiHeadAttention::create(ps, prefix + ".attn", cfg.enc_hidden, cfg.enc_heads, rng);
  f.conv1 = Conv1d::create(ps, prefix + ".conv1", cfg.enc_hidden, cfg.enc_conv_filter,
                           cfg.enc_conv_kernel, rng);
  f.conv2 = Conv1d::create(ps, prefix + ".conv2", cfg.enc_conv_filter, cfg.enc_hidden,
                           cfg.enc_conv_kernel, rng);
  f.kp_attn = KernelPredictor::create(ps, prefix + ".kp_attn", cfg.style_dim, cfg.enc_hidden,
                                      cfg.saconv_kernel, cfg.kp_filter, rng);
  f.kp_conv = KernelPredictor::create(ps, prefix + ".kp_conv", cfg.style_dim, cfg.enc_hidden,
                                      cfg.saconv_kernel, cfg.kp_filter, rng);
  f.dropout_p = cfg.dropout;
  return f;
}

// Post-norm transformer layer with the normalization slots taken by SAConv.
Var FftLayer::operator()(const Var& x, const Var& e_u, Rng* drng, bool training) const {
  Var a = attn(x);
  if (training && drng) a = dropout(a, dropout_p, *drng, true);
  Var y = add(x, a);
  y = transpose(saconv_apply(transpose(y), kp_attn(e_u)));

  Var c = transpose(conv2(relu(conv1(transpose(y)))));
  if (training && drng) c = dropout(c, dropout_p, *drng, true);
  Var z = add(y, c);
  return transpose(saconv_apply(transpose(z), kp_conv(e_u)));
}

AcousticModel AcousticModel::create(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
  AcousticModel m;
  m.cfg_ = cfg;
  m.embed_ = ps.create("acoustic.embed",
                       glorot_uniform(cfg.vocab_size, cfg.phoneme_embed_dim,
                                      {cfg.vocab_size, cfg.phoneme_embed_dim}, rng));
  m.in_proj_ = Linear::create(ps, "acoustic.in_proj", cfg.phoneme_embed_dim, cfg.enc_hidden, rng);
  for (int i = 0; i < cfg.enc_layers; ++i)
    m.enc_layers_.push_back(FftLayer::create(ps, "acoustic.enc" + std::to_string(i), cfg, rng));
  m.dur_pred_ = VariancePredictor::create(ps, "acoustic.dur", cfg, rng);
  m.pitch_pred_ = VariancePredictor::create(ps, "acoustic.pitch", cfg, rng);
  m.energy_pred_ = VariancePredictor::create(ps, "acoustic.energy", cfg, rng);
  m.pitch_proj_ = Linear::create(ps, "acoustic.pitch_proj", 1, cfg.enc_hidden, rng);
  m.energy_proj_ = Linear::create(ps, "acoustic.energy_proj", 1, cfg.enc_hidden, rng);
  for (int i = 0; i < cfg.dec_layers; ++i)
    m.dec_layers_.push_back(FftLayer::create(ps, "acoustic.dec" + std::to_string(i), cfg, rng));
  m.mel_out_ = Linear::create(ps, "acoustic.mel_out", cfg.enc_hidden, cfg.n_mels, rng);
  return m;
}

Var AcousticModel::embed_tokens(const std::vector<int>& tokens) const {
  if (tokens.empty()) throw InvalidInputError("empty phoneme sequence");
  for (int t : tokens)
    if (t < 0 || t >= cfg_.vocab_size)
      throw InvalidInputError("token id " + std::to_string(t) + " outside vocabulary");
  return embedding_lookup(embed_, tokens);
}

Var AcousticModel::encode_phonemes(const std::vector<int>& tokens, const Var& e_u, Rng* drng,
                                   bool training) const {
  Var h = in_proj_(embed_tokens(tokens));
  h = add(h, constant(positional_encoding(h.value().rows(), cfg_.enc_hidden)));
  for (const auto& layer : enc_layers_) h = layer(h, e_u, drng, training);
  return h;
}

Var AcousticModel::decode_mel(const Var& expanded, const Var& e_u, Rng* drng,
                              bool training) const {
  if (expanded.value().rows() < 1) throw InvalidInputError("decode_mel: empty input");
  Var h = add(expanded, constant(positional_encoding(expanded.value().rows(), cfg_.enc_hidden)));
  for (const auto& layer : dec_layers_) h = layer(h, e_u, drng, training);
  return mel_out_(h);
}

Var AcousticModel::add_variance_embeddings(const Var& expanded, const Var& pitch,
                                           const Var& energy) const {
  return add(add(expanded, pitch_proj_(pitch)), energy_proj_(energy));
}

AcousticModel::TrainOut AcousticModel::forward_train(const std::vector<int>& tokens,
                                                     const Var& e_u, const VarianceTargets& gt,
                                                     Rng& drng, bool training) const {
  int t_total = 0;
  for (int d : gt.durations) t_total += d;
  if (static_cast<int>(gt.pitch.size()) != t_total ||
      static_cast<int>(gt.energy.size()) != t_total)
    throw InvalidInputError("variance targets disagree with total duration");

  Var enc = encode_phonemes(tokens, e_u, &drng, training);
  PredictedVariances pv;
  pv.log_dur = dur_pred_(enc, e_u, &drng, training);
  Var expanded = length_regulate(enc, gt.durations);
  pv.pitch = pitch_pred_(expanded, e_u, &drng, training);
  pv.energy = energy_pred_(expanded, e_u, &drng, training);

  Tensor p = Tensor::zeros({t_total, 1}), en = Tensor::zeros({t_total, 1});
  for (int t = 0; t < t_total; ++t) {
    p.at(t, 0) = gt.pitch[t];
    en.at(t, 0) = gt.energy[t];
  }
  Var x = add_variance_embeddings(expanded, constant(p), constant(en));
  return {decode_mel(x, e_u, &drng, training), std::move(pv)};
}

AcousticModel::InferOut AcousticModel::infer(const std::vector<int>& tokens,
                                             const Tensor& e_u) const {
  NoGradGuard ng;
  Var style(e_u.ndim() == 1 ? e_u.reshaped({1, e_u.dim(0)}) : e_u, false);
  Var enc = encode_phonemes(tokens, style, nullptr, false);
  Var log_dur = dur_pred_(enc, style, nullptr, false);

  std::vector<int> durations(tokens.size());
  int total = 0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    double d = std::exp(log_dur.value().at(static_cast<int>(i), 0)) - 1.0;
    durations[i] = std::max(0, static_cast<int>(std::lround(d)));
    total += durations[i];
  }
  if (total == 0)
    for (auto& d : durations) d = 1;

  Var expanded = length_regulate(enc, durations);
  Var pitch = pitch_pred_(expanded, style, nullptr, false);
  Var energy = energy_pred_(expanded, style, nullptr, false);
  Var x = add_variance_embeddings(expanded, pitch, energy);
  Var mel = decode_mel(x, style, nullptr, false);
  return {mel.value(), std::move(durations)};
}

Var stage1_loss(const Var& pred_mel, const Tensor& gt_mel, const PredictedVariances& pred,
                const VarianceTargets& gt, const Var& ampe) {
  if (!pred_mel.value().same_shape(gt_mel))
    throw InvalidInputError("stage1_loss: mel shape mismatch (" + pred_mel.value().shape_str() +
                            " vs " + gt_mel.shape_str() + ")");
  int l = static_cast<int>(gt.durations.size());
  int t_total = static_cast<int>(gt.pitch.size());
  if (pred.log_dur.value().rows() != l || pred.pitch.value().rows() != t_total ||
      pred.energy.value().rows() != static_cast<int>(gt.energy.size()))
    throw InvalidInputError("stage1_loss: variance shape mismatch");

  Tensor ld = Tensor::zeros({l, 1});
  for (int i = 0; i < l; ++i) ld.at(i, 0) = std::log(gt.durations[i] + 1.0);
  Tensor p = Tensor::zeros({t_total, 1}), en = Tensor::zeros({t_total, 1});
  for (int t = 0; t < t_total; ++t) {
    p.at(t, 0) = gt.pitch[t];
    en.at(t, 0) = gt.energy[t];
  }

  Var l_mel = mae(pred_mel, constant(gt_mel));
  Var l_var = add(add(mse(pred.log_dur, constant(ld)), mse(pred.pitch, constant(p))),
                  mse(pred.energy, constant(en)));
  return add(add(l_mel, l_var), ampe);
}

}  // namespace mmtts
