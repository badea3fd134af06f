// Copyright 2026 The ttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ttts/errors.hpp"
#include "ttts/mel.hpp"
#include "ttts/rng.hpp"

namespace ttts {

inline constexpr const char* kSharedLanguage = "shared";

/// Ordered phoneme set. Every phoneme belongs to exactly one language tag or
/// to the shared pool usable by all languages.
struct PhonemeInventory {
  std::vector<std::string> symbols;
  std::vector<std::string> language_of;  // parallel to symbols

  int size() const { return static_cast<int>(symbols.size()); }

  void validate() const {
    if (symbols.size() != language_of.size())
      throw ConfigError("inventory: symbols/language_of size mismatch");
    std::set<std::string> seen(symbols.begin(), symbols.end());
    if (seen.size() != symbols.size())
      throw ConfigError("inventory: duplicate phoneme symbols");
    bool any_shared = false;
    for (const auto& l : language_of)
      if (l == kSharedLanguage) any_shared = true;
    if (!any_shared) throw ConfigError("inventory: needs at least one shared phoneme");
  }

  std::vector<std::string> languages() const {
    std::vector<std::string> out;
    for (const auto& l : language_of)
      if (l != kSharedLanguage && std::find(out.begin(), out.end(), l) == out.end())
        out.push_back(l);
    return out;
  }

  /// Indices a speaker of `lang` may utter: private phonemes plus shared.
  std::vector<int> indices_for_language(const std::string& lang) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (language_of[i] == lang || language_of[i] == kSharedLanguage)
        out.push_back(i);
    return out;
  }

  std::uint64_t content_hash() const {
    std::uint64_t h = 0xabcdef1234567890ULL;
    for (int i = 0; i < size(); ++i)
      h = mix_seed(h, hash_string(symbols[i]), hash_string(language_of[i]));
    return h;
  }

  /// Two private pools plus a shared pool, the smallest layout that exercises
  /// intra-language, inter-language, and shared-symbol cases.
  static PhonemeInventory toy_default(int private_per_language = 12, int shared = 6,
                                      std::vector<std::string> langs = {"L1", "L2"}) {
    PhonemeInventory inv;
    for (const auto& lang : langs) {
      for (int i = 0; i < private_per_language; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s_p%02d", lang.c_str(), i);
        inv.symbols.emplace_back(buf);
        inv.language_of.push_back(lang);
      }
    }
    for (int i = 0; i < shared; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "sh_p%02d", i);
      inv.symbols.emplace_back(buf);
      inv.language_of.push_back(kSharedLanguage);
    }
    inv.validate();
    return inv;
  }
};

struct SpeakerInfo {
  std::string tag;
  std::string native_language;
  bool anchor = false;  // designated native anchor of its language
};

/// One training example.
struct Utterance {
  std::string utt_id;
  std::vector<int> phonemes;
  std::string language;
  std::string speaker;
  MelSpectrogram mel;
  std::vector<int> durations;     // frames per phoneme, all >= 1
  std::vector<double> f0;         // Hz per phoneme
  std::vector<double> energy;     // per phoneme

  int num_phonemes() const { return static_cast<int>(phonemes.size()); }

  void validate() const {
    const std::size_t n = phonemes.size();
    if (durations.size() != n || f0.size() != n || energy.size() != n)
      throw InputError("utterance " + utt_id + ": per-phoneme arrays disagree");
    mel.validate();
    long long total = 0;
    for (int d : durations) {
      if (d < 1) throw AlignmentError("utterance " + utt_id + ": duration < 1");
      total += d;
    }
    if (total != mel.num_frames())
      throw AlignmentError("utterance " + utt_id + ": durations do not cover mel");
  }
};

struct GeneratorParams {
  int n_mels = 80;
  double noise_sigma = 0.05;
  int min_phonemes = 5;
  int max_phonemes = 20;
  int min_base_duration = 2;
  int max_base_duration = 5;
  double duration_jitter = 0.4;
  double f0_jitter_hz = 2.0;
  double energy_jitter = 0.02;

  /// Expected L1 distance per mel entry between a clean frame and a noisy
  /// one: E|N(0, sigma)| = sigma * sqrt(2/pi).
  double noise_floor_l1() const {
    return noise_sigma * std::sqrt(2.0 / std::numbers::pi);
  }
};

/// Per-speaker rendering identity: smooth affine spectral tint plus prosody
/// bases. Tints are what separate two renderings of the same phoneme string.
struct SpeakerVoice {
  std::vector<float> gain;  // per mel bin, around 1
  std::vector<float> bias;  // per mel bin, small
  double base_f0 = 0;       // Hz
  double tempo = 1;         // duration multiplier
  double energy_gain = 1;
};

/// Deterministic synthetic-corpus renderer. Every phoneme owns a fixed
/// spectral template (two smooth bumps over mel bins plus a base duration
/// and prosody offsets); every speaker owns a fixed SpeakerVoice. A frame of
/// phoneme p spoken by s is gain_s .* template_p + bias_s + noise, so two
/// renderings of the same phoneme string share content structure while
/// differing in tint.
class ToyGenerator {
 public:
  ToyGenerator(PhonemeInventory inventory, std::vector<SpeakerInfo> speakers,
               std::uint64_t seed, GeneratorParams params = {})
      : inventory_(std::move(inventory)),
        speakers_(std::move(speakers)),
        seed_(seed),
        params_(params) {
    inventory_.validate();
    auto langs = inventory_.languages();
    if (langs.size() < 2) throw ConfigError("corpus: at least 2 languages required");
    for (const auto& lang : langs) {
      bool covered = false;
      for (const auto& s : speakers_)
        if (s.native_language == lang) covered = true;
      if (!covered) throw ConfigError("corpus: language without speakers: " + lang);
    }
    if (speakers_.size() < 3) throw ConfigError("corpus: at least 3 speakers required");

    templates_.resize(inventory_.size());
    base_durations_.resize(inventory_.size());
    f0_factor_.resize(inventory_.size());
    energy_base_.resize(inventory_.size());
    for (int p = 0; p < inventory_.size(); ++p) {
      Rng rng(mix_seed(seed_, 0x7001, static_cast<std::uint64_t>(p)));
      templates_[p] = make_template(rng);
      base_durations_[p] =
          params_.min_base_duration +
          rng.randint(params_.max_base_duration - params_.min_base_duration + 1);
      f0_factor_[p] = rng.uniform(0.9, 1.1);
      energy_base_[p] = rng.uniform(0.4, 1.0);
    }
    voices_.resize(speakers_.size());
    for (std::size_t s = 0; s < speakers_.size(); ++s) {
      Rng rng(mix_seed(seed_, 0x7002, hash_string(speakers_[s].tag)));
      voices_[s] = make_voice(rng);
    }
  }

  const PhonemeInventory& inventory() const { return inventory_; }
  const std::vector<SpeakerInfo>& speakers() const { return speakers_; }
  const std::vector<float>& phoneme_template(int p) const { return templates_[p]; }
  const SpeakerVoice& voice(int speaker_index) const { return voices_[speaker_index]; }
  int base_duration(int p) const { return base_durations_[p]; }
  const GeneratorParams& params() const { return params_; }
  double noise_floor_l1() const { return params_.noise_floor_l1(); }

  /// Renders a given phoneme sequence for a speaker; rng drives durations,
  /// prosody jitter, and frame noise.
  Utterance render(std::string utt_id, std::span<const int> phonemes, int speaker_index,
                   Rng& rng) const {
    const SpeakerVoice& v = voices_[speaker_index];
    Utterance u;
    u.utt_id = std::move(utt_id);
    u.phonemes.assign(phonemes.begin(), phonemes.end());
    u.speaker = speakers_[speaker_index].tag;
    u.language = speakers_[speaker_index].native_language;

    int total = 0;
    for (int p : phonemes) {
      const double d =
          base_durations_[p] * v.tempo + rng.normal(0.0, params_.duration_jitter);
      const int di = std::max(1, static_cast<int>(std::lround(d)));
      u.durations.push_back(di);
      total += di;
      u.f0.push_back(v.base_f0 * f0_factor_[p] + rng.normal(0.0, params_.f0_jitter_hz));
      u.energy.push_back(energy_base_[p] * v.energy_gain +
                         rng.normal(0.0, params_.energy_jitter));
    }

    u.mel.frames = Mat<float>(total, params_.n_mels);
    int frame = 0;
    for (std::size_t t = 0; t < phonemes.size(); ++t) {
      const std::vector<float>& tpl = templates_[phonemes[t]];
      for (int k = 0; k < u.durations[t]; ++k, ++frame) {
        float* row = u.mel.frames.data() +
                     static_cast<std::size_t>(frame) * params_.n_mels;
        for (int j = 0; j < params_.n_mels; ++j)
          row[j] = v.gain[j] * tpl[j] + v.bias[j] +
                   static_cast<float>(rng.normal(0.0, params_.noise_sigma));
      }
    }
    return u;
  }

  /// Expected (noise-free) frame of phoneme p under speaker s; the oracle for
  /// the disentanglement property.
  std::vector<float> clean_frame(int p, int speaker_index) const {
    const SpeakerVoice& v = voices_[speaker_index];
    std::vector<float> out(params_.n_mels);
    for (int j = 0; j < params_.n_mels; ++j)
      out[j] = v.gain[j] * templates_[p][j] + v.bias[j];
    return out;
  }

  /// Random phoneme sequence legal for the speaker's native language.
  std::vector<int> sample_phonemes(int speaker_index, Rng& rng) const {
    const auto pool =
        inventory_.indices_for_language(speakers_[speaker_index].native_language);
    const int len = params_.min_phonemes +
                    rng.randint(params_.max_phonemes - params_.min_phonemes + 1);
    std::vector<int> seq(len);
    for (int i = 0; i < len; ++i) seq[i] = pool[rng.randint(static_cast<int>(pool.size()))];
    return seq;
  }

 private:
  std::vector<float> make_template(Rng& rng) const {
    const int n = params_.n_mels;
    std::vector<float> tpl(n);
    const double c1 = rng.uniform(0.1, 0.9) * n;
    const double w1 = rng.uniform(2.0, 6.0) * n / 80.0;
    const double a1 = rng.uniform(0.4, 1.0);
    const double c2 = rng.uniform(0.1, 0.9) * n;
    const double w2 = rng.uniform(2.0, 6.0) * n / 80.0;
    const double a2 = rng.uniform(0.2, 0.6);
    for (int j = 0; j < n; ++j) {
      const double g1 = a1 * std::exp(-0.5 * (j - c1) * (j - c1) / (w1 * w1));
      const double g2 = a2 * std::exp(-0.5 * (j - c2) * (j - c2) / (w2 * w2));
      tpl[j] = static_cast<float>(g1 + g2);
    }
    return tpl;
  }

  SpeakerVoice make_voice(Rng& rng) const {
    const int n = params_.n_mels;
    SpeakerVoice v;
    v.gain.resize(n);
    v.bias.resize(n);
    const double amp = rng.uniform(0.1, 0.3);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double boff = rng.uniform(-0.05, 0.1);
    const double bamp = rng.uniform(0.0, 0.05);
    const double bphase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int j = 0; j < n; ++j) {
      v.gain[j] = static_cast<float>(
          1.0 + amp * std::sin(2.0 * std::numbers::pi * j / n + phase));
      v.bias[j] = static_cast<float>(
          boff + bamp * std::cos(2.0 * std::numbers::pi * j / n + bphase));
    }
    v.base_f0 = rng.uniform(110.0, 260.0);
    v.tempo = rng.uniform(0.8, 1.25);
    v.energy_gain = rng.uniform(0.85, 1.2);
    return v;
  }

  PhonemeInventory inventory_;
  std::vector<SpeakerInfo> speakers_;
  std::uint64_t seed_;
  GeneratorParams params_;
  std::vector<std::vector<float>> templates_;
  std::vector<int> base_durations_;
  std::vector<double> f0_factor_;
  std::vector<double> energy_base_;
  std::vector<SpeakerVoice> voices_;
};

/// Corpus = registry (inventory, speakers, anchors) + utterance list.
struct CorpusManifest {
  PhonemeInventory inventory;
  std::vector<SpeakerInfo> speakers;
  std::map<std::string, std::string> anchor_speaker_of;  // language -> speaker tag
  std::uint64_t seed = 0;
  GeneratorParams gen;
  std::vector<Utterance> utterances;

  int speaker_index(const std::string& tag) const {
    for (std::size_t i = 0; i < speakers.size(); ++i)
      if (speakers[i].tag == tag) return static_cast<int>(i);
    throw RegistryError("unknown speaker: " + tag);
  }

  const SpeakerInfo& speaker(const std::string& tag) const {
    return speakers[speaker_index(tag)];
  }

  bool is_anchor_of(const std::string& speaker_tag, const std::string& language) const {
    auto it = anchor_speaker_of.find(language);
    return it != anchor_speaker_of.end() && it->second == speaker_tag;
  }

  void validate() const {
    inventory.validate();
    std::set<std::string> langs;
    for (const auto& l : inventory.languages()) langs.insert(l);
    for (const auto& [lang, tag] : anchor_speaker_of) {
      const SpeakerInfo& s = speaker(tag);
      if (s.native_language != lang)
        throw ConfigError("anchor speaker " + tag + " is not native to " + lang);
    }
    for (const auto& lang : langs)
      if (!anchor_speaker_of.count(lang))
        throw ConfigError("language without anchor speaker: " + lang);
    for (const auto& u : utterances) {
      u.validate();
      speaker_index(u.speaker);  // throws on unknown
      if (!langs.count(u.language))
        throw ConfigError("utterance " + u.utt_id + ": unknown language " + u.language);
      for (int p : u.phonemes)
        if (p < 0 || p >= inventory.size())
          throw VocabularyError("utterance " + u.utt_id + ": phoneme index out of range");
    }
  }

  /// Deterministic split: the last ~10% of each speaker's utterances (by
  /// manifest order) are held out.
  std::vector<int> train_indices() const { return split_indices(false); }
  std::vector<int> heldout_indices() const { return split_indices(true); }

  std::uint64_t registry_hash() const {
    std::uint64_t h = inventory.content_hash();
    for (const auto& s : speakers)
      h = mix_seed(h, hash_string(s.tag), hash_string(s.native_language));
    return h;
  }

 private:
  std::vector<int> split_indices(bool heldout) const {
    std::map<std::string, std::vector<int>> per_speaker;
    for (std::size_t i = 0; i < utterances.size(); ++i)
      per_speaker[utterances[i].speaker].push_back(static_cast<int>(i));
    std::vector<int> out;
    for (auto& [tag, idx] : per_speaker) {
      const std::size_t held = std::max<std::size_t>(1, idx.size() / 10);
      const std::size_t cut = idx.size() > held ? idx.size() - held : 0;
      for (std::size_t k = 0; k < idx.size(); ++k)
        if ((k >= cut) == heldout) out.push_back(idx[k]);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Default 3-speaker registry: one anchor per language plus an extra speaker
/// of the first language.
inline std::vector<SpeakerInfo> toy_speakers() {
  return {{"spk_l1_anchor", "L1", true},
          {"spk_l2_anchor", "L2", true},
          {"spk_l1_extra", "L1", false}};
}

/// Deterministic synthetic bilingual corpus. Identical arguments produce a
/// byte-identical manifest.
inline CorpusManifest generate_toy_corpus(int n_utts_per_speaker,
                                          const PhonemeInventory& inventory,
                                          const std::vector<SpeakerInfo>& speakers,
                                          std::uint64_t seed,
                                          GeneratorParams params = {}) {
  if (n_utts_per_speaker < 1)
    throw ConfigError("corpus: n_utts_per_speaker must be >= 1");
  ToyGenerator gen(inventory, speakers, seed, params);

  CorpusManifest m;
  m.inventory = gen.inventory();
  m.speakers = gen.speakers();
  m.seed = seed;
  m.gen = params;
  for (const auto& s : m.speakers)
    if (s.anchor) {
      if (m.anchor_speaker_of.count(s.native_language))
        throw ConfigError("corpus: two anchors for language " + s.native_language);
      m.anchor_speaker_of[s.native_language] = s.tag;
    }

  for (std::size_t si = 0; si < m.speakers.size(); ++si) {
    for (int k = 0; k < n_utts_per_speaker; ++k) {
      Rng rng(mix_seed(seed, 0x7003 + si, static_cast<std::uint64_t>(k)));
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%04d", m.speakers[si].tag.c_str(), k);
      auto phonemes = gen.sample_phonemes(static_cast<int>(si), rng);
      m.utterances.push_back(gen.render(id, phonemes, static_cast<int>(si), rng));
    }
  }
  m.validate();
  return m;
}

// ---- batching ---------------------------------------------------------------------

/// Padded per-batch tensor with [item][slot] layout and a parallel mask.
struct PaddedSeq {
  int batch = 0;
  int max_len = 0;
  int dim = 1;
  std::vector<float> data;   // batch * max_len * dim
  std::vector<float> mask;   // batch * max_len, 1 = valid

  float& at(int b, int t, int j) {
    return data[(static_cast<std::size_t>(b) * max_len + t) * dim + j];
  }
  float at(int b, int t, int j) const {
    return data[(static_cast<std::size_t>(b) * max_len + t) * dim + j];
  }
  float mask_at(int b, int t) const {
    return mask[static_cast<std::size_t>(b) * max_len + t];
  }
};

/// A sampled batch: the utterance views plus padded tensors with masks so
/// padding can never contribute to a loss.
struct Batch {
  std::vector<int> utt_indices;
  std::vector<const Utterance*> items;
  PaddedSeq mel;         // dim = n_mels
  PaddedSeq durations;   // phoneme axis
  PaddedSeq f0;          // phoneme axis
  PaddedSeq energy;      // phoneme axis
  std::vector<std::vector<int>> phonemes;  // unpadded id sequences
  long long valid_frames = 0;
  long long valid_phonemes = 0;

  int size() const { return static_cast<int>(items.size()); }
};

/// Samples `batch_size` distinct utterances from `pool` (uniform without
/// replacement; the whole pool, shuffled, if it is smaller than the batch).
inline Batch load_batch(const CorpusManifest& manifest, std::span<const int> pool,
                        int batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (manifest.utterances.empty() || pool.empty())
    throw InputError("load_batch: empty manifest or pool");

  std::vector<int> order(pool.begin(), pool.end());
  const std::size_t take = std::min<std::size_t>(batch_size, order.size());
  rng.partial_shuffle(order, take);
  order.resize(take);

  Batch b;
  b.utt_indices = order;
  int max_frames = 0, max_ph = 0, n_mels = 0;
  for (int idx : order) {
    const Utterance& u = manifest.utterances[idx];
    b.items.push_back(&u);
    max_frames = std::max(max_frames, u.mel.num_frames());
    max_ph = std::max(max_ph, u.num_phonemes());
    n_mels = u.mel.n_mels();
    b.valid_frames += u.mel.num_frames();
    b.valid_phonemes += u.num_phonemes();
  }

  const int B = b.size();
  b.mel = {B, max_frames, n_mels,
           std::vector<float>(static_cast<std::size_t>(B) * max_frames * n_mels, 0.f),
           std::vector<float>(static_cast<std::size_t>(B) * max_frames, 0.f)};
  auto ph_axis = [&](PaddedSeq& s) {
    s = {B, max_ph, 1,
         std::vector<float>(static_cast<std::size_t>(B) * max_ph, 0.f),
         std::vector<float>(static_cast<std::size_t>(B) * max_ph, 0.f)};
  };
  ph_axis(b.durations);
  ph_axis(b.f0);
  ph_axis(b.energy);

  for (int i = 0; i < B; ++i) {
    const Utterance& u = *b.items[i];
    b.phonemes.push_back(u.phonemes);
    for (int t = 0; t < u.mel.num_frames(); ++t) {
      b.mel.mask[static_cast<std::size_t>(i) * max_frames + t] = 1.f;
      for (int j = 0; j < n_mels; ++j) b.mel.at(i, t, j) = u.mel.frames(t, j);
    }
    for (int t = 0; t < u.num_phonemes(); ++t) {
      const std::size_t off = static_cast<std::size_t>(i) * max_ph + t;
      b.durations.mask[off] = b.f0.mask[off] = b.energy.mask[off] = 1.f;
      b.durations.at(i, t, 0) = static_cast<float>(u.durations[t]);
      b.f0.at(i, t, 0) = static_cast<float>(u.f0[t]);
      b.energy.at(i, t, 0) = static_cast<float>(u.energy[t]);
    }
  }
  return b;
}

/// Masked mean absolute difference between two padded mel tensors: entries
/// with mask 0 contribute nothing, and the mean is over valid entries only.
inline double masked_mean_abs(const PaddedSeq& a, const PaddedSeq& ref) {
  if (a.batch != ref.batch || a.max_len != ref.max_len || a.dim != ref.dim)
    throw InputError("masked_mean_abs: shape mismatch");
  double num = 0.0;
  long long cnt = 0;
  for (int b = 0; b < a.batch; ++b)
    for (int t = 0; t < a.max_len; ++t) {
      if (ref.mask_at(b, t) == 0.f) continue;
      for (int j = 0; j < a.dim; ++j) num += std::abs(a.at(b, t, j) - ref.at(b, t, j));
      cnt += a.dim;
    }
  if (cnt == 0) throw InputError("masked_mean_abs: no valid entries");
  return num / static_cast<double>(cnt);
}

}  // namespace ttts
