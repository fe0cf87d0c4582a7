#include "mmtts/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mmtts/errors.hpp"
#include "mmtts/optim.hpp"

namespace mmtts {

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

std::vector<uint8_t> string_bytes(const std::string& s) {
  return std::vector<uint8_t>(s.begin(), s.end());
}

std::map<std::string, std::vector<int>> read_alignments(const std::string& path) {
  std::map<std::string, std::vector<int>> out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open alignment file " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    ls >> id;
    std::vector<int> durs;
    int d = 0;
    while (ls >> d) durs.push_back(d);
    out[id] = std::move(durs);
  }
  return out;
}

std::vector<int> uniform_durations(int n_tokens, int t_frames) {
  std::vector<int> d(n_tokens, t_frames / n_tokens);
  for (int i = 0; i < t_frames % n_tokens; ++i) d[i] += 1;
  return d;
}

double tensor_mae(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / static_cast<double>(a.numel());
}

Tensor stats_tensor(const Stage1Model& m) {
  Tensor t = Tensor::zeros({6});
  t.at(0) = m.mel_mean;
  t.at(1) = m.mel_std;
  t.at(2) = m.pitch_mean;
  t.at(3) = m.pitch_std;
  t.at(4) = m.energy_mean;
  t.at(5) = m.energy_std;
  return t;
}

void load_stats(Stage1Model& m, const Tensor& t) {
  m.mel_mean = t.at(0);
  m.mel_std = t.at(1);
  m.pitch_mean = t.at(2);
  m.pitch_std = t.at(3);
  m.energy_mean = t.at(4);
  m.energy_std = t.at(5);
}

}  // namespace

std::vector<int> tokenize_text(const std::string& text, int vocab_size) {
  if (text.empty()) throw InvalidInputError("cannot tokenize empty text");
  if (vocab_size <= 0) throw ConfigError("vocab_size must be positive");
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<int>(c) % vocab_size);
  return ids;
}

Tensor Corpus::standardized_mel(int index) const {
  Tensor m = items.at(static_cast<size_t>(index)).mel;
  double denom = mel_std > 1e-12 ? mel_std : 1.0;
  for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = (m.data()[i] - mel_mean) / denom;
  return m;
}

Corpus load_corpus(const std::string& manifest_path, const std::string& alignment_path,
                   const ModelConfig& cfg, const std::string& split_filter) {
  if (split_filter != "train" && split_filter != "dev" && split_filter != "test" &&
      split_filter != "all")
    throw ConfigError("split filter must be train, dev, test, or all");

  std::map<std::string, std::vector<int>> aligns;
  if (!alignment_path.empty()) aligns = read_alignments(alignment_path);

  MelFrontend fe(cfg);
  Corpus corpus;
  for (const auto& e : read_manifest(manifest_path)) {
    if (split_filter != "all" && split_name(e.split) != split_filter) continue;
    if (e.transcript.empty()) {
      corpus.warnings.push_back(e.utt_id + ": empty transcript, skipped");
      continue;
    }
    CorpusItem item;
    item.entry = e;
    item.wav = read_wav(e.audio_path);
    if (item.wav.sample_rate_hz != cfg.sample_rate)
      throw InvalidInputError(e.audio_path + ": sample rate " +
                              std::to_string(item.wav.sample_rate_hz) + ", expected " +
                              std::to_string(cfg.sample_rate));
    MelSpectrogram mel = fe.extract_mel(item.wav);
    item.mel = mel.frames;
    auto [pitch, energy] = fe.extract_pitch_energy(item.wav);
    item.tokens = tokenize_text(e.transcript, cfg.vocab_size);

    int t_frames = item.mel.dim(0);
    auto ait = aligns.find(e.utt_id);
    if (ait != aligns.end()) {
      std::vector<int> d = ait->second;
      if (static_cast<int>(d.size()) != static_cast<int>(item.tokens.size())) {
        corpus.warnings.push_back(e.utt_id + ": alignment token count mismatch, using uniform");
        d = uniform_durations(static_cast<int>(item.tokens.size()), t_frames);
      } else {
        int sum = std::accumulate(d.begin(), d.end(), 0);
        d.back() += t_frames - sum;
        if (d.back() < 0) {
          corpus.warnings.push_back(e.utt_id + ": alignment length mismatch, using uniform");
          d = uniform_durations(static_cast<int>(item.tokens.size()), t_frames);
        }
      }
      item.targets.durations = std::move(d);
    } else {
      item.targets.durations = uniform_durations(static_cast<int>(item.tokens.size()), t_frames);
    }
    item.targets.pitch = std::move(pitch);
    item.targets.energy = std::move(energy);

    if (!e.face_image_path.empty())
      item.image_payload = read_file_bytes(e.face_image_path);
    else
      item.image_payload = string_bytes(e.utt_id + ".face");
    item.text_payload = string_bytes(e.prompt_text.empty() ? e.utt_id : e.prompt_text);
    corpus.items.push_back(std::move(item));
  }

  // Corpus-level scalar standardization for mels, pitch, and energy. Pitch
  // and energy feed both an embedding projection and an MSE target, so
  // bringing them to unit scale keeps the loss terms commensurate.
  double sum = 0, sq = 0;
  int64_t n = 0;
  for (const auto& it : corpus.items)
    for (int64_t i = 0; i < it.mel.numel(); ++i) {
      sum += it.mel.data()[i];
      sq += it.mel.data()[i] * it.mel.data()[i];
      ++n;
    }
  if (n > 0) {
    corpus.mel_mean = sum / static_cast<double>(n);
    corpus.mel_std = std::sqrt(std::max(0.0, sq / static_cast<double>(n) -
                                                 corpus.mel_mean * corpus.mel_mean));
    if (corpus.mel_std < 1e-8) corpus.mel_std = 1.0;
  }
  auto standardize = [](std::vector<std::vector<double>*> series, double& mean, double& stdv) {
    double s = 0, q = 0;
    int64_t cnt = 0;
    for (auto* v : series)
      for (double x : *v) {
        s += x;
        q += x * x;
        ++cnt;
      }
    if (cnt == 0) return;
    mean = s / static_cast<double>(cnt);
    stdv = std::sqrt(std::max(0.0, q / static_cast<double>(cnt) - mean * mean));
    if (stdv < 1e-8) stdv = 1.0;
    for (auto* v : series)
      for (double& x : *v) x = (x - mean) / stdv;
  };
  std::vector<std::vector<double>*> ps, es;
  for (auto& it : corpus.items) {
    ps.push_back(&it.targets.pitch);
    es.push_back(&it.targets.energy);
  }
  standardize(ps, corpus.pitch_mean, corpus.pitch_std);
  standardize(es, corpus.energy_mean, corpus.energy_std);
  return corpus;
}

std::unique_ptr<Stage1Model> create_stage1(const ModelConfig& cfg) {
  cfg.validate();
  auto m = std::make_unique<Stage1Model>();
  m->cfg = cfg;
  Rng rng(cfg.seed);
  m->acoustic = AcousticModel::create(m->params, cfg, rng);
  m->sse = SpeechStyleEncoder::create(m->params, "sse", cfg, rng);
  m->text_adapter = AdapterHead::create(m->params, "adapter_text", cfg.provider_dim,
                                        cfg.adapter_hidden, cfg.style_dim, rng);
  m->image_adapter = AdapterHead::create(m->params, "adapter_image", cfg.provider_dim,
                                         cfg.adapter_hidden, cfg.style_dim, rng);
  m->provider = make_provider(cfg.provider, cfg.provider_dim, cfg.seed);
  return m;
}

static void save_stage1(const Stage1Model& m, const Adam* opt, const std::string& path) {
  Checkpoint ck;
  ck.config_text = serialize_config(m.cfg);
  ck.tensors = m.params.snapshot();
  ck.tensors.emplace("__stats__", stats_tensor(m));
  if (opt)
    for (auto& [k, v] : opt->state()) ck.tensors.emplace("opt." + k, v);
  save_checkpoint(path, ck);
}

std::unique_ptr<Stage1Model> load_stage1(const std::string& ckpt_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  auto m = create_stage1(parse_config(ck.config_text));
  m->params.load_values(ck.tensors);
  auto it = ck.tensors.find("__stats__");
  if (it == ck.tensors.end()) throw ConfigError("checkpoint missing __stats__");
  load_stats(*m, it->second);
  return m;
}

std::unique_ptr<Stage2Model> create_stage2(const ModelConfig& cfg) {
  cfg.validate();
  auto m = std::make_unique<Stage2Model>();
  m->cfg = cfg;
  Rng rng(cfg.seed + 99991);
  m->drift = DriftNet::create(m->params, "drift", cfg, rng);
  return m;
}

std::unique_ptr<Stage2Model> load_stage2(const std::string& ckpt_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  auto m = create_stage2(parse_config(ck.config_text));
  m->params.load_values(ck.tensors);
  auto it = ck.tensors.find("__stats__");
  if (it == ck.tensors.end()) throw ConfigError("checkpoint missing __stats__");
  m->mel_mean = it->second.at(0);
  m->mel_std = it->second.at(1);
  return m;
}

namespace {

void divergence_report(std::ostream& log, int step, double loss, const ParamStore& params) {
  log << "diverged at step " << step << " loss " << loss << "\n";
  for (const auto& [name, v] : params.items()) {
    double mx = 0;
    for (int64_t i = 0; i < v.value().numel(); ++i)
      mx = std::max(mx, std::abs(v.value().data()[i]));
    if (!(mx < 1e6)) log << "  param " << name << " max_abs " << mx << "\n";
  }
}

}  // namespace

TrainResult train_stage1(Corpus& corpus, const ModelConfig& cfg, const std::string& out_ckpt,
                         const std::string& resume_ckpt, std::ostream& log) {
  if (corpus.items.empty()) throw InvalidInputError("stage 1 training corpus is empty");
  auto model = create_stage1(cfg);
  model->mel_mean = corpus.mel_mean;
  model->mel_std = corpus.mel_std;
  model->pitch_mean = corpus.pitch_mean;
  model->pitch_std = corpus.pitch_std;
  model->energy_mean = corpus.energy_mean;
  model->energy_std = corpus.energy_std;

  Adam opt(model->params, cfg.lr_stage1, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  int start_step = 0;
  if (!resume_ckpt.empty()) {
    Checkpoint ck = load_checkpoint(resume_ckpt);
    model->params.load_values(ck.tensors);
    auto it = ck.tensors.find("__stats__");
    if (it != ck.tensors.end()) load_stats(*model, it->second);
    std::map<std::string, Tensor> ost;
    for (auto& [k, v] : ck.tensors)
      if (k.rfind("opt.", 0) == 0) ost.emplace(k.substr(4), v);
    if (ost.empty()) throw ConfigError("resume checkpoint has no optimizer state");
    opt.load_state(ost);
    start_step = static_cast<int>(opt.step_count());
    log << "resumed from " << resume_ckpt << " at step " << start_step << "\n";
  }

  std::vector<Tensor> std_mels;
  std_mels.reserve(corpus.items.size());
  for (size_t i = 0; i < corpus.items.size(); ++i)
    std_mels.push_back(corpus.standardized_mel(static_cast<int>(i)));

  Rng trng(cfg.seed * 0x9e3779b97f4a7c15ull + 0x1000003ull + static_cast<uint64_t>(start_step));
  std::vector<int> order(corpus.items.size());
  std::iota(order.begin(), order.end(), 0);
  trng.shuffle(order);
  size_t cursor = 0;
  int batch = std::min<int>(cfg.batch_size, static_cast<int>(corpus.items.size()));

  TrainResult res;
  for (int step = start_step; step < cfg.stage1_iters; ++step) {
    model->params.zero_grad();
    double step_loss = 0, step_mel = 0;
    for (int b = 0; b < batch; ++b) {
      if (cursor >= order.size()) {
        trng.shuffle(order);
        cursor = 0;
      }
      int idx = order[cursor++];
      const CorpusItem& item = corpus.items[static_cast<size_t>(idx)];
      const Tensor& gt_mel = std_mels[static_cast<size_t>(idx)];

      Var e_s = model->sse(constant(gt_mel));
      Var ampe = constant(Tensor::zeros({1}));
      if (!cfg.speech_prompt_only) {
        Var e_i = encode_adapter_prompt(item.image_payload, Modality::image, *model->provider,
                                        model->image_adapter);
        Var e_t = encode_adapter_prompt(item.text_payload, Modality::text, *model->provider,
                                        model->text_adapter);
        ampe = ampe_loss(e_i, e_t, e_s);
      }
      auto out = model->acoustic.forward_train(item.tokens, e_s, item.targets, trng);
      Var loss = stage1_loss(out.mel, gt_mel, out.var, item.targets, ampe);
      double lv = loss.value().at(0);
      if (!std::isfinite(lv)) {
        divergence_report(log, step, lv, model->params);
        throw TrainingDivergedError("stage 1 loss is not finite at step " +
                                    std::to_string(step));
      }
      step_loss += lv / batch;
      step_mel += tensor_mae(out.mel.value(), gt_mel) / batch;
      backward(scale(loss, 1.0 / batch));
    }
    opt.step();
    if (step == start_step) res.first_loss = step_loss;
    res.final_loss = step_loss;
    res.steps_run++;
    if (step % cfg.log_every == 0 || step + 1 == cfg.stage1_iters)
      log << "stage1 step " << step << " loss " << step_loss << " mel_mae " << step_mel << "\n";
  }
  if (!out_ckpt.empty()) save_stage1(*model, &opt, out_ckpt);
  return res;
}

TrainResult train_stage2(Corpus& corpus, const std::string& stage1_ckpt, const ModelConfig& cfg,
                         const std::string& out_ckpt, std::ostream& log) {
  if (corpus.items.empty()) throw InvalidInputError("stage 2 training corpus is empty");
  auto s1 = load_stage1(stage1_ckpt);
  auto m = create_stage2(cfg);
  m->mel_mean = s1->mel_mean;
  m->mel_std = s1->mel_std;

  // Frozen stage-1 pass, teacher-forced durations so the conditioning mel has
  // exactly the ground-truth frame count.
  std::vector<Tensor> cmels, gt_mels;
  {
    NoGradGuard ng;
    Rng dummy(0);
    for (size_t i = 0; i < corpus.items.size(); ++i) {
      const CorpusItem& item = corpus.items[i];
      Tensor gt = corpus.standardized_mel(static_cast<int>(i));
      Var e_s = s1->sse(constant(gt));
      auto out = s1->acoustic.forward_train(item.tokens, e_s, item.targets, dummy, false);
      cmels.push_back(out.mel.value());
      gt_mels.push_back(std::move(gt));
    }
  }

  Adam opt(m->params, cfg.lr_stage2, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Rng trng(cfg.seed * 0x9e3779b97f4a7c15ull + 0x2000003ull);
  std::vector<int> order(corpus.items.size());
  std::iota(order.begin(), order.end(), 0);
  trng.shuffle(order);
  size_t cursor = 0;
  int batch = std::min<int>(cfg.batch_size, static_cast<int>(corpus.items.size()));

  TrainResult res;
  for (int step = 0; step < cfg.stage2_iters; ++step) {
    m->params.zero_grad();
    double step_loss = 0;
    for (int b = 0; b < batch; ++b) {
      if (cursor >= order.size()) {
        trng.shuffle(order);
        cursor = 0;
      }
      int idx = order[cursor++];
      const Tensor& x1 = gt_mels[static_cast<size_t>(idx)];
      Tensor x0 = Tensor::zeros(x1.shape());
      for (int64_t i = 0; i < x0.numel(); ++i) x0.data()[i] = trng.normal();
      double t = trng.uniform();
      Var loss = reflow_loss(m->drift, x0, x1, t, cmels[static_cast<size_t>(idx)]);
      double lv = loss.value().at(0);
      if (!std::isfinite(lv)) {
        divergence_report(log, step, lv, m->params);
        throw TrainingDivergedError("stage 2 loss is not finite at step " +
                                    std::to_string(step));
      }
      step_loss += lv / batch;
      backward(scale(loss, 1.0 / batch));
    }
    opt.step();
    if (step == 0) res.first_loss = step_loss;
    res.final_loss = step_loss;
    res.steps_run++;
    if (step % cfg.log_every == 0 || step + 1 == cfg.stage2_iters)
      log << "stage2 step " << step << " loss " << step_loss << "\n";
  }

  if (!out_ckpt.empty()) {
    Checkpoint ck;
    ck.config_text = serialize_config(m->cfg);
    ck.tensors = m->params.snapshot();
    Tensor st = Tensor::zeros({6});
    st.at(0) = m->mel_mean;
    st.at(1) = m->mel_std;
    st.at(2) = s1->pitch_mean;
    st.at(3) = s1->pitch_std;
    st.at(4) = s1->energy_mean;
    st.at(5) = s1->energy_std;
    ck.tensors.emplace("__stats__", st);
    save_checkpoint(out_ckpt, ck);
  }
  return res;
}

namespace {

MelSpectrogram to_mel_struct(Tensor frames, const ModelConfig& cfg) {
  MelSpectrogram mel;
  mel.frames = std::move(frames);
  mel.sample_rate_hz = cfg.sample_rate;
  mel.hop_length = cfg.hop_length;
  mel.n_mels = cfg.n_mels;
  return mel;
}

Tensor denormalize(Tensor m, double mean, double stdv) {
  for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = m.data()[i] * stdv + mean;
  return m;
}

Tensor style_from_prompt(Stage1Model& s1, Modality modality, const std::string& prompt_arg) {
  NoGradGuard ng;
  std::optional<StyleEmbedding> e_s, e_i, e_t;
  if (modality == Modality::speech) {
    Waveform wav = read_wav(prompt_arg);
    if (wav.sample_rate_hz != s1.cfg.sample_rate)
      throw InvalidInputError(prompt_arg + ": prompt sample rate mismatch");
    MelFrontend fe(s1.cfg);
    MelSpectrogram mel = fe.extract_mel(wav);
    Tensor frames = mel.frames;
    double denom = s1.mel_std > 1e-12 ? s1.mel_std : 1.0;
    for (int64_t i = 0; i < frames.numel(); ++i)
      frames.data()[i] = (frames.data()[i] - s1.mel_mean) / denom;
    e_s = StyleEmbedding{s1.sse(constant(frames)).value().reshaped({s1.cfg.style_dim}),
                         Modality::speech};
  } else if (modality == Modality::image) {
    auto payload = read_file_bytes(prompt_arg);
    e_i = StyleEmbedding{
        encode_adapter_prompt(payload, Modality::image, *s1.provider, s1.image_adapter)
            .value()
            .reshaped({s1.cfg.style_dim}),
        Modality::image};
  } else {
    auto payload = string_bytes(prompt_arg);
    if (payload.empty()) throw MissingPromptError("empty text prompt");
    e_t = StyleEmbedding{
        encode_adapter_prompt(payload, Modality::text, *s1.provider, s1.text_adapter)
            .value()
            .reshaped({s1.cfg.style_dim}),
        Modality::text};
  }
  return select_unified(e_s, e_i, e_t, Phase::infer, modality).values;
}

SynthesisResult synth_loaded(Stage1Model& s1, Stage2Model* s2, const std::string& text,
                             Modality modality, const std::string& prompt_arg,
                             const ModelConfig& runtime_cfg) {
  Tensor e_u = style_from_prompt(s1, modality, prompt_arg);
  std::vector<int> tokens = tokenize_text(text, s1.cfg.vocab_size);
  auto out = s1.acoustic.infer(tokens, e_u);

  Tensor refined = out.mel;
  if (s2 != nullptr) {
    Rng nrng(runtime_cfg.seed + 0x5eedull);
    Tensor x0 = Tensor::zeros(out.mel.shape());
    for (int64_t i = 0; i < x0.numel(); ++i) x0.data()[i] = nrng.normal();
    if (runtime_cfg.sampler == "euler")
      refined = sample_euler(s2->drift, x0, out.mel, runtime_cfg.euler_steps);
    else if (runtime_cfg.sampler == "rk45")
      refined = sample_rk45(s2->drift, x0, out.mel, runtime_cfg.rtol, runtime_cfg.atol);
    else
      throw ConfigError("unknown sampler '" + runtime_cfg.sampler +
                        "' (available: euler, rk45)");
  }

  SynthesisResult res;
  res.durations = out.durations;
  res.stage1_mel = to_mel_struct(denormalize(out.mel, s1.mel_mean, s1.mel_std), s1.cfg);
  res.refined_mel = to_mel_struct(denormalize(refined, s1.mel_mean, s1.mel_std), s1.cfg);
  auto voc = make_vocoder("griffin-lim", s1.cfg);
  res.wav = voc->vocode(res.refined_mel);
  return res;
}

}  // namespace

SynthesisResult synthesize(const std::string& text, Modality modality,
                           const std::string& prompt_arg, const std::string& stage1_ckpt,
                           const std::string& stage2_ckpt, const ModelConfig& runtime_cfg) {
  auto s1 = load_stage1(stage1_ckpt);
  std::unique_ptr<Stage2Model> s2;
  if (!stage2_ckpt.empty()) s2 = load_stage2(stage2_ckpt);
  return synth_loaded(*s1, s2.get(), text, modality, prompt_arg, runtime_cfg);
}

MetricReport evaluate_corpus(Corpus& corpus, const std::string& stage1_ckpt,
                             const std::string& stage2_ckpt, const ModelConfig& runtime_cfg,
                             int max_items, Classifier* emotion_clf, Classifier* gender_clf,
                             SpeakerEmbedder& embedder, std::ostream& log) {
  if (corpus.items.empty()) throw InvalidInputError("evaluation corpus is empty");
  auto s1 = load_stage1(stage1_ckpt);
  std::unique_ptr<Stage2Model> s2;
  if (!stage2_ckpt.empty()) s2 = load_stage2(stage2_ckpt);

  MetricReport rep;
  int n = static_cast<int>(corpus.items.size());
  if (max_items > 0) n = std::min(n, max_items);
  int emo_hits = 0, gen_hits = 0;
  for (int i = 0; i < n; ++i) {
    const CorpusItem& item = corpus.items[static_cast<size_t>(i)];
    SynthesisResult syn = synth_loaded(*s1, s2.get(), item.entry.transcript, Modality::speech,
                                       item.entry.audio_path, runtime_cfg);
    MelSpectrogram gt = to_mel_struct(item.mel, s1->cfg);
    double item_mcd = mcd(mel_to_cepstra(gt, 13), mel_to_cepstra(syn.refined_mel, 13));
    double item_secs = secs(embedder.embed(item.wav), embedder.embed(syn.wav));
    rep.mcd += item_mcd;
    rep.secs += item_secs;
    if (emotion_clf && emotion_clf->classify(syn.wav) == item.entry.labels.emotion) emo_hits++;
    if (gender_clf && gender_clf->classify(syn.wav) == gender_name(item.entry.labels.gender))
      gen_hits++;
    log << item.entry.utt_id << " mcd " << item_mcd << " secs " << item_secs << "\n";
  }
  rep.n_items = n;
  rep.mcd /= n;
  rep.secs /= n;
  rep.acc_emo = emotion_clf ? static_cast<double>(emo_hits) / n : 0.0;
  rep.acc_gen = gender_clf ? static_cast<double>(gen_hits) / n : 0.0;
  return rep;
}

}  // namespace mmtts
