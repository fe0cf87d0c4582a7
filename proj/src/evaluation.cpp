#include "mmtts/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "mmtts/errors.hpp"

namespace mmtts {

std::string format_report(const MetricReport& r) {
  std::ostringstream out;
  out << "metric        value\n";
  out << "------------  ---------\n";
  char buf[64];
  snprintf(buf, sizeof(buf), "mcd (dB)      %9.4f\n", r.mcd);
  out << buf;
  snprintf(buf, sizeof(buf), "secs          %9.4f\n", r.secs);
  out << buf;
  snprintf(buf, sizeof(buf), "acc_emotion   %9.4f\n", r.acc_emo);
  out << buf;
  snprintf(buf, sizeof(buf), "acc_gender    %9.4f\n", r.acc_gen);
  out << buf;
  snprintf(buf, sizeof(buf), "n_items       %9d\n", r.n_items);
  out << buf;
  return out.str();
}

std::string report_records(const MetricReport& r) {
  std::ostringstream out;
  char buf[96];
  snprintf(buf, sizeof(buf), "mcd=%.6f\n", r.mcd);
  out << buf;
  snprintf(buf, sizeof(buf), "secs=%.6f\n", r.secs);
  out << buf;
  snprintf(buf, sizeof(buf), "acc_emo=%.6f\n", r.acc_emo);
  out << buf;
  snprintf(buf, sizeof(buf), "acc_gen=%.6f\n", r.acc_gen);
  out << buf;
  snprintf(buf, sizeof(buf), "n_items=%d\n", r.n_items);
  out << buf;
  return out.str();
}

Tensor mel_to_cepstra(const MelSpectrogram& mel, int k) {
  int n = mel.n_mels;
  if (k < 1 || k > n) throw InvalidInputError("mel_to_cepstra: K must lie in [1, n_mels]");
  int t_len = mel.frames.rows();
  Tensor out = Tensor::zeros({t_len, k});
  for (int t = 0; t < t_len; ++t)
    for (int c = 0; c < k; ++c) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        acc += mel.frames.at(t, j) * std::cos(M_PI * c * (2.0 * j + 1.0) / (2.0 * n));
      out.at(t, c) = acc;
    }
  return out;
}

std::vector<std::pair<int, int>> dtw_path(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols())
    throw InvalidInputError("dtw: inputs must be [T x K] with equal K");
  int n = a.rows(), m = b.rows();
  if (n < 1 || m < 1) throw InvalidInputError("dtw: empty sequence");
  int k = a.cols();
  auto dist = [&](int i, int j) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      double d = a.at(i, c) - b.at(j, c);
      s += d * d;
    }
    return std::sqrt(s);
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> cost(n, std::vector<double>(m, inf));
  std::vector<std::vector<int8_t>> from(n, std::vector<int8_t>(m, 0));  // 0 diag, 1 up, 2 left
  cost[0][0] = dist(0, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == 0 && j == 0) continue;
      double best = inf;
      int8_t dir = 0;
      if (i > 0 && j > 0 && cost[i - 1][j - 1] < best) { best = cost[i - 1][j - 1]; dir = 0; }
      if (i > 0 && cost[i - 1][j] < best) { best = cost[i - 1][j]; dir = 1; }
      if (j > 0 && cost[i][j - 1] < best) { best = cost[i][j - 1]; dir = 2; }
      cost[i][j] = best + dist(i, j);
      from[i][j] = dir;
    }
  std::vector<std::pair<int, int>> path;
  int i = n - 1, j = m - 1;
  path.emplace_back(i, j);
  while (i != 0 || j != 0) {
    int8_t dir = from[i][j];
    if (dir == 0) { --i; --j; }
    else if (dir == 1) { --i; }
    else { --j; }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

double mcd(const Tensor& ref_cepstra, const Tensor& syn_cepstra) {
  if (ref_cepstra.ndim() != 2 || syn_cepstra.ndim() != 2 ||
      ref_cepstra.cols() != syn_cepstra.cols())
    throw InvalidInputError("mcd: cepstra must be [T x K] with equal K");
  if (ref_cepstra.rows() < 1 || syn_cepstra.rows() < 1)
    throw InvalidInputError("mcd: empty cepstra");
  int k = ref_cepstra.cols();
  if (k < 2) throw InvalidInputError("mcd: needs K >= 2 (c_0 is excluded)");
  auto path = dtw_path(ref_cepstra, syn_cepstra);
  double acc = 0.0;
  for (const auto& [i, j] : path) {
    double s = 0.0;
    for (int c = 1; c < k; ++c) {
      double d = ref_cepstra.at(i, c) - syn_cepstra.at(j, c);
      s += d * d;
    }
    acc += std::sqrt(s);
  }
  return (10.0 / std::log(10.0)) * std::sqrt(2.0) * acc / static_cast<double>(path.size());
}

double secs(const std::vector<double>& emb_a, const std::vector<double>& emb_b) {
  if (emb_a.size() != emb_b.size() || emb_a.empty())
    throw InvalidInputError("secs: embeddings must be nonempty and equal length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < emb_a.size(); ++i) {
    dot += emb_a[i] * emb_b[i];
    na += emb_a[i] * emb_a[i];
    nb += emb_b[i] * emb_b[i];
  }
  if (na == 0.0 || nb == 0.0) throw InvalidInputError("secs: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string PitchBandClassifier::classify(const Waveform& wav) {
  MelFrontend fe(cfg_);
  auto [pitch, energy] = fe.extract_pitch_energy(wav);
  std::vector<double> voiced;
  for (double p : pitch)
    if (p > 0.0) voiced.push_back(p);
  if (voiced.empty()) throw InvalidInputError("no voiced frames");
  std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
  double f0 = voiced[voiced.size() / 2];
  for (const auto& [bound, label] : bands_)
    if (f0 < bound) return label;
  return bands_.empty() ? "" : bands_.back().second;
}

std::vector<double> MelStatsEmbedder::embed(const Waveform& wav) {
  MelFrontend fe(cfg_);
  MelSpectrogram mel = fe.extract_mel(wav);
  int t_len = mel.frames.rows();
  std::vector<double> out(mel.n_mels);
  for (int m = 0; m < mel.n_mels; ++m) {
    double s = 0.0;
    for (int t = 0; t < t_len; ++t) s += mel.frames.at(t, m);
    out[m] = s / t_len;
  }
  return out;
}

double classification_accuracy(const std::vector<std::pair<Waveform, std::string>>& items,
                               Classifier& classifier, std::vector<std::string>* failures) {
  if (items.empty()) throw InvalidInputError("classification_accuracy: no items");
  int correct = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    try {
      if (classifier.classify(items[i].first) == items[i].second) ++correct;
    } catch (const std::exception& ex) {
      if (failures)
        failures->push_back("item " + std::to_string(i) + ": " + ex.what());
    }
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

}  // namespace mmtts
