#include "mmtts/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "mmtts/errors.hpp"
#include "mmtts/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmtts {

const std::vector<std::string> kEmotions = {"neutral",   "angry", "contempt", "disgusted",
                                            "fear",      "happy", "sad",      "surprised"};

std::string gender_name(Gender g) { return g == Gender::male ? "male" : "female"; }

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw InvalidInputError("unknown split name: " + s);
}

std::string FileBackedAsr::transcribe(const Waveform& wav) {
  (void)wav;
  auto it = table_.find(current_);
  return it == table_.end() ? "" : it->second;
}

namespace {

std::string normalize_text(const std::string& s) {
  std::string out;
  bool last_space = true;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      last_space = false;
    } else if (!last_space) {
      out.push_back(' ');
      last_space = true;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> toks;
  std::string norm = normalize_text(s);
  size_t pos = 0;
  while (pos < norm.size()) {
    size_t sp = norm.find(' ', pos);
    if (sp == std::string::npos) sp = norm.size();
    if (sp > pos) toks.push_back(norm.substr(pos, sp - pos));
    pos = sp + 1;
  }
  return toks;
}

const std::map<std::string, int>& level_words() {
  static const std::map<std::string, int> m = {{"slightly", 1}, {"moderately", 2}, {"extremely", 3}};
  return m;
}

}  // namespace

std::pair<std::string, double> match_transcript(const std::string& asr_hypothesis,
                                                const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw InvalidInputError("match_transcript: no candidates");
  std::string hyp = normalize_text(asr_hypothesis);
  std::string best;
  double best_score = -1.0;
  for (const auto& cand : candidates) {
    std::string c = normalize_text(cand);
    size_t denom = std::max(hyp.size(), c.size());
    double score = denom == 0 ? 1.0 : 1.0 - static_cast<double>(edit_distance(hyp, c)) / denom;
    if (score > best_score) {
      best_score = score;
      best = cand;
    }
  }
  return {best, best_score};
}

std::vector<int> select_frames(int video_frame_count, int k, uint64_t seed) {
  if (k < 0 || k > video_frame_count)
    throw InvalidInputError("select_frames: k exceeds frame count");
  std::vector<int> all(video_frame_count);
  for (int i = 0; i < video_frame_count; ++i) all[i] = i;
  Rng rng(seed);
  rng.shuffle(all);
  std::vector<int> pick(all.begin(), all.begin() + k);
  std::sort(pick.begin(), pick.end());
  return pick;
}

std::string render_prompt(const StyleLabels& labels) {
  if (labels.emotion_level < 1 || labels.emotion_level > 3)
    throw InvalidInputError("emotion_level must be 1..3");
  if (std::find(kEmotions.begin(), kEmotions.end(), labels.emotion) == kEmotions.end())
    throw InvalidInputError("unknown emotion: " + labels.emotion);
  static const char* level_word[] = {"slightly", "moderately", "extremely"};
  return "A " + gender_name(labels.gender) + " says with a " +
         level_word[labels.emotion_level - 1] + " " + labels.emotion + " tone";
}

StyleLabels parse_prompt(const std::string& prompt) {
  StyleLabels labels;
  bool have_gender = false, have_level = false, have_emotion = false;
  for (const auto& tok : tokenize(prompt)) {
    // "female" must be tested before "male": exact token comparison does that
    // safely, substring matching would not.
    if (tok == "female") {
      labels.gender = Gender::female;
      have_gender = true;
    } else if (tok == "male") {
      labels.gender = Gender::male;
      have_gender = true;
    } else if (auto it = level_words().find(tok); it != level_words().end()) {
      labels.emotion_level = it->second;
      have_level = true;
    } else if (std::find(kEmotions.begin(), kEmotions.end(), tok) != kEmotions.end()) {
      labels.emotion = tok;
      have_emotion = true;
    }
  }
  if (!have_gender || !have_level || !have_emotion)
    throw InvalidInputError("prompt does not encode full style labels: " + prompt);
  return labels;
}

const ParaphraseTable& default_paraphrases() {
  static const ParaphraseTable table = [] {
    ParaphraseTable t;
    static const char* level_word[] = {"slightly", "moderately", "extremely"};
    for (Gender g : {Gender::male, Gender::female})
      for (const auto& emo : kEmotions)
        for (int lvl = 1; lvl <= 3; ++lvl) {
          StyleLabels labels{g, emo, lvl};
          std::string key = render_prompt(labels);
          std::string gw = gender_name(g);
          std::string lw = level_word[lvl - 1];
          t[key] = {
              "A " + gw + " speaks in a " + lw + " " + emo + " tone",
              "A " + gw + " talks with a " + lw + " " + emo + " voice",
              "With a " + lw + " " + emo + " tone, a " + gw + " is speaking",
          };
        }
    return t;
  }();
  return table;
}

std::string paraphrase(const std::string& prompt, const ParaphraseTable& table, uint64_t seed) {
  auto it = table.find(prompt);
  if (it == table.end() || it->second.empty()) return prompt;
  Rng rng(seed ^ fnv1a64(prompt.data(), prompt.size()));
  return it->second[rng.uniform_int(it->second.size())];
}

namespace {

Split speaker_split(const std::string& speaker, const BuildConfig& cfg) {
  uint64_t h = fnv1a64(speaker.data(), speaker.size()) ^ (cfg.seed * 0x9e3779b97f4a7c15ull);
  double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  if (u < cfg.train_fraction) return Split::train;
  if (u < cfg.train_fraction + cfg.dev_fraction) return Split::dev;
  return Split::test;
}

bool parse_level_dir(const std::string& name, int* level) {
  size_t i = name.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(name[i - 1]))) --i;
  if (i == name.size()) return false;
  *level = std::stoi(name.substr(i));
  return *level >= 1 && *level <= 3;
}

}  // namespace

BuildResult build_manifest(const std::string& root_dir, const BuildConfig& cfg) {
  if (!fs::is_directory(root_dir)) throw IoError("not a directory: " + root_dir);
  BuildResult res;
  std::vector<fs::path> wavs;
  for (const auto& p : fs::recursive_directory_iterator(root_dir))
    if (p.is_regular_file() && p.path().extension() == ".wav") wavs.push_back(p.path());
  std::sort(wavs.begin(), wavs.end());

  std::map<std::string, Gender> speakers_seen;
  for (const auto& wav_path : wavs) {
    fs::path rel = fs::relative(wav_path, root_dir);
    std::vector<std::string> parts;
    for (const auto& part : rel) parts.push_back(part.string());
    if (parts.size() != 4) {
      res.summary.warnings.push_back("skipped (layout): " + rel.string());
      continue;
    }
    const std::string& speaker = parts[0];
    const std::string& emotion = parts[1];
    int level = 0;
    if (!parse_level_dir(parts[2], &level)) {
      res.summary.warnings.push_back("skipped (bad level dir): " + rel.string());
      continue;
    }
    if (std::find(kEmotions.begin(), kEmotions.end(), emotion) == kEmotions.end()) {
      res.summary.warnings.push_back("skipped (unknown emotion): " + rel.string());
      continue;
    }
    char g0 = speaker.empty() ? '?' : static_cast<char>(std::toupper(static_cast<unsigned char>(speaker[0])));
    Gender gender;
    if (g0 == 'M')
      gender = Gender::male;
    else if (g0 == 'F' || g0 == 'W')
      gender = Gender::female;
    else {
      res.summary.warnings.push_back("skipped (no gender prefix): " + rel.string());
      continue;
    }

    ManifestEntry e;
    e.labels = {gender, emotion, level};
    std::string stem = wav_path.stem().string();
    e.utt_id = speaker + "_" + emotion + "_" + std::to_string(level) + "_" + stem;
    e.audio_path = wav_path.string();

    fs::path txt = wav_path.parent_path() / (stem + ".txt");
    if (fs::exists(txt)) {
      std::ifstream in(txt);
      std::string line;
      std::getline(in, line);
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      e.transcript = line;
    } else {
      res.summary.warnings.push_back("missing transcript: " + rel.string());
    }
    fs::path png = wav_path.parent_path() / (stem + ".png");
    if (fs::exists(png)) e.face_image_path = png.string();

    e.prompt_text = render_prompt(e.labels);
    if (cfg.use_paraphrases)
      e.prompt_text = paraphrase(e.prompt_text, default_paraphrases(),
                                 cfg.seed ^ fnv1a64(e.utt_id.data(), e.utt_id.size()));
    e.split = speaker_split(speaker, cfg);

    try {
      Waveform w = read_wav(e.audio_path);
      res.summary.total_hours += static_cast<double>(w.samples.size()) / w.sample_rate_hz / 3600.0;
    } catch (const Error& err) {
      res.summary.warnings.push_back(std::string("skipped (unreadable wav): ") + rel.string() +
                                     ": " + err.what());
      continue;
    }
    speakers_seen.emplace(speaker, gender);
    res.entries.push_back(std::move(e));
  }

  std::sort(res.entries.begin(), res.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.utt_id < b.utt_id; });
  res.summary.pairs = static_cast<int64_t>(res.entries.size());
  res.summary.speakers = static_cast<int>(speakers_seen.size());
  for (const auto& [name, g] : speakers_seen)
    (g == Gender::male ? res.summary.male_speakers : res.summary.female_speakers) += 1;
  return res;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& e : entries) {
    json j = {{"utt_id", e.utt_id},
              {"audio", e.audio_path},
              {"transcript", e.transcript},
              {"face_image", e.face_image_path},
              {"prompt", e.prompt_text},
              {"gender", gender_name(e.labels.gender)},
              {"emotion", e.labels.emotion},
              {"emotion_level", e.labels.emotion_level},
              {"split", split_name(e.split)}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing manifest: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      throw InvalidInputError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
    ManifestEntry e;
    e.utt_id = j.at("utt_id").get<std::string>();
    e.audio_path = j.at("audio").get<std::string>();
    e.transcript = j.value("transcript", "");
    e.face_image_path = j.value("face_image", "");
    e.prompt_text = j.at("prompt").get<std::string>();
    std::string g = j.at("gender").get<std::string>();
    e.labels.gender = (g == "female") ? Gender::female : Gender::male;
    e.labels.emotion = j.at("emotion").get<std::string>();
    e.labels.emotion_level = j.at("emotion_level").get<int>();
    e.split = split_from_name(j.at("split").get<std::string>());
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace mmtts
