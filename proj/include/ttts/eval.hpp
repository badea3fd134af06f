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

// Inference and evaluation front end: checkpoint loading into a runnable
// bundle, the three synthesis systems (plain, prosody-predicting, and
// prosody-transferring), and held-out objective metrics.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttts/acoustic_model.hpp"
#include "ttts/asr.hpp"
#include "ttts/checkpoint.hpp"
#include "ttts/corpus.hpp"
#include "ttts/errors.hpp"
#include "ttts/predictors.hpp"
#include "ttts/prosody.hpp"
#include "ttts/tape.hpp"
#include "ttts/triplet.hpp"

namespace ttts {

enum class SynthSystem { kBase, kBaseFe, kBaseFeDfe };

inline SynthSystem parse_synth_system(const std::string& s) {
  if (s == "base") return SynthSystem::kBase;
  if (s == "base_fe") return SynthSystem::kBaseFe;
  if (s == "base_fe_dfe") return SynthSystem::kBaseFeDfe;
  throw ConfigError("unknown system: " + s + " (want base|base_fe|base_fe_dfe)");
}

inline std::string to_string(SynthSystem s) {
  switch (s) {
    case SynthSystem::kBase: return "base";
    case SynthSystem::kBaseFe: return "base_fe";
    case SynthSystem::kBaseFeDfe: return "base_fe_dfe";
  }
  return "?";
}

/// A checkpoint made runnable: configs, registry, statistics, and the three
/// networks wired to a parameter store loaded with the checkpoint weights.
template <class S>
class ModelBundle {
 public:
  explicit ModelBundle(const Checkpoint& ck)
      : acoustic_(ck.acoustic),
        predictors_(ck.predictors),
        inventory_(ck.inventory),
        speakers_(ck.speakers),
        f0_stats_(ck.f0_stats) {
    inventory_.validate();
    Rng init(1);  // placeholder init; every value is overwritten below
    model_.emplace(acoustic_, inventory_.size(), static_cast<int>(speakers_.size()),
                   store_, init);
    cp_.emplace(predictors_, acoustic_.n_mels, acoustic_.phoneme_emb_dim,
                static_cast<int>(speakers_.size()), store_, init);
    sp_.emplace(predictors_, acoustic_.n_mels, acoustic_.speaker_emb_dim, store_, init);
    for (Param<S>* p : store_.all()) {
      const Mat<float>* src = ck.find_param(p->name);
      if (!src) throw CheckpointError("bundle: checkpoint missing parameter " + p->name);
      if (src->rows != p->value.rows || src->cols != p->value.cols)
        throw CheckpointError("bundle: shape mismatch for " + p->name);
      for (std::size_t i = 0; i < src->size(); ++i)
        p->value.v[i] = static_cast<S>(src->v[i]);
    }
    for (const auto& spk : speakers_)
      if (spk.anchor) anchor_of_[spk.native_language] = spk.tag;
  }

  const AcousticConfig& acoustic() const { return acoustic_; }
  const PhonemeInventory& inventory() const { return inventory_; }
  const std::vector<SpeakerInfo>& speakers() const { return speakers_; }
  const std::vector<SpeakerF0Stats>& f0_stats() const { return f0_stats_; }
  AcousticModel<S>& model() { return *model_; }
  ContentPredictor<S>& content_predictor() { return *cp_; }
  SpeakerPredictor<S>& speaker_predictor() { return *sp_; }

  int speaker_index(const std::string& tag) const {
    for (std::size_t i = 0; i < speakers_.size(); ++i)
      if (speakers_[i].tag == tag) return static_cast<int>(i);
    throw RegistryError("bundle: unknown speaker " + tag);
  }

  const SpeakerInfo& speaker(const std::string& tag) const {
    return speakers_[speaker_index(tag)];
  }

  std::string anchor_of(const std::string& language) const {
    auto it = anchor_of_.find(language);
    if (it == anchor_of_.end())
      throw RegistryError("bundle: no anchor speaker for language " + language);
    return it->second;
  }

  const SpeakerF0Stats& f0_stats_for(const std::string& tag) const {
    const SpeakerF0Stats* s = find_f0_stats(f0_stats_, tag);
    if (!s) throw StatsError("bundle: no f0 statistics for speaker " + tag);
    return *s;
  }

 private:
  AcousticConfig acoustic_;
  PredictorConfig predictors_;
  PhonemeInventory inventory_;
  std::vector<SpeakerInfo> speakers_;
  std::vector<SpeakerF0Stats> f0_stats_;
  std::map<std::string, std::string> anchor_of_;
  ParamStore<S> store_;
  std::optional<AcousticModel<S>> model_;
  std::optional<ContentPredictor<S>> cp_;
  std::optional<SpeakerPredictor<S>> sp_;
};

struct SynthRequest {
  std::vector<int> phonemes;
  std::string speaker;
  std::string language;  // language of the text
  SynthSystem system = SynthSystem::kBase;
  std::string anchor_override;  // DFE anchor; default: the language's anchor
  bool f0_adapt_log_domain = false;
};

struct SynthMeta {
  std::string speaker;
  std::string language;
  std::string system;
  std::vector<int> durations;
  std::vector<double> f0;
  std::vector<double> energy;
  bool transferred = false;
  std::string anchor_speaker;
};

/// Validates a request against the checkpoint and runs one synthesis.
/// The prosody-transfer system only serves cross-lingual requests: the target
/// speaker must not be native to the text language, and the anchor must be.
template <class S>
std::pair<MelSpectrogram, SynthMeta> run_synthesis(ModelBundle<S>& bundle,
                                                   const SynthRequest& req) {
  const bool fe = bundle.acoustic().fe_enabled;
  if (req.system == SynthSystem::kBase && fe)
    throw ConfigError("system base needs a checkpoint trained without f0/energy heads");
  if (req.system != SynthSystem::kBase && !fe)
    throw ConfigError("system " + to_string(req.system) +
                      " needs a checkpoint trained with f0/energy heads");
  const SpeakerInfo& target = bundle.speaker(req.speaker);

  TransferContext ctx;
  const TransferContext* transfer = nullptr;
  SynthMeta meta;
  meta.speaker = req.speaker;
  meta.language = req.language;
  meta.system = to_string(req.system);

  if (req.system == SynthSystem::kBaseFeDfe) {
    if (target.native_language == req.language)
      throw ConfigError(
          "prosody transfer serves cross-lingual requests only: speaker " +
          req.speaker + " is native to " + req.language);
    const std::string anchor =
        req.anchor_override.empty() ? bundle.anchor_of(req.language) : req.anchor_override;
    if (anchor == req.speaker)
      throw ConfigError("prosody transfer to the requesting speaker itself (" + anchor +
                        ") is not cross-lingual");
    if (bundle.speaker(anchor).native_language != req.language)
      throw ConfigError("transfer anchor " + anchor + " is not native to " +
                        req.language);
    ctx.anchor_speaker = bundle.speaker_index(anchor);
    ctx.duration = true;
    ctx.f0 = true;
    ctx.energy = true;
    ctx.f0_adapt_linear = true;
    ctx.adapt_log_domain = req.f0_adapt_log_domain;
    ctx.anchor_stats = bundle.f0_stats_for(anchor);
    ctx.target_stats = bundle.f0_stats_for(req.speaker);
    transfer = &ctx;
    meta.transferred = true;
    meta.anchor_speaker = anchor;
  }

  Tape<S> t;
  auto out = bundle.model().synthesize(t, req.phonemes,
                                       bundle.speaker_index(req.speaker),
                                       SynthesisMode::kFreeRunning, transfer);
  meta.durations = out.durations_used;
  meta.f0 = out.f0_used;
  meta.energy = out.energy_used;
  return {bundle.model().extract_mel(t, out), meta};
}

inline nlohmann::json synth_meta_json(const SynthMeta& m) {
  nlohmann::json j;
  j["speaker"] = m.speaker;
  j["language"] = m.language;
  j["system"] = m.system;
  j["durations"] = m.durations;
  j["f0"] = m.f0;
  j["energy"] = m.energy;
  j["transferred"] = m.transferred;
  if (m.transferred) j["anchor_speaker"] = m.anchor_speaker;
  return j;
}

// ---- objective evaluation -------------------------------------------------------

enum class EvalSplit { kInterLan, kIntraLan };

inline EvalSplit parse_eval_split(const std::string& s) {
  if (s == "inter_lan") return EvalSplit::kInterLan;
  if (s == "intra_lan") return EvalSplit::kIntraLan;
  throw ConfigError("unknown split: " + s + " (want inter_lan|intra_lan)");
}

struct EvalRow {
  std::string utt_id;
  std::string target_speaker;
  std::string language;
  double content_distance = 0;   // in [0, 2]
  double speaker_similarity = 0; // in [-1, 1]
  double mel_l1 = 0;             // teacher-forced self-reconstruction
  std::optional<double> wer;
};

struct EvalReport {
  EvalSplit split = EvalSplit::kInterLan;
  std::vector<EvalRow> rows;
  double mean_content_distance = 0, std_content_distance = 0;
  double mean_speaker_similarity = 0, std_speaker_similarity = 0;
  double mean_mel_l1 = 0;
  std::optional<double> mean_wer;
};

namespace detail {

template <class S>
std::vector<std::vector<double>> content_encodings(
    ModelBundle<S>& bundle, Tape<S>& t,
    const std::vector<std::vector<typename Tape<S>::Ref>>& segments) {
  auto enc = bundle.content_predictor().encode(t, segments);
  std::vector<std::vector<double>> out;
  out.reserve(enc.z.size());
  for (auto z : enc.z) {
    auto v = t.value(z);
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

template <class S>
std::vector<double> speaker_encoding(ModelBundle<S>& bundle, Tape<S>& t,
                                     std::span<const typename Tape<S>::Ref> frames) {
  auto enc = bundle.speaker_predictor().encode(t, frames);
  auto v = t.value(enc.z);
  return {v.begin(), v.end()};
}

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0;
  sd = 0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

}  // namespace detail

/// Mean phoneme-level distance between the content encodings of two mels,
/// each split by its own durations (counts must agree).
template <class S>
double content_distance_between(ModelBundle<S>& bundle, const MelSpectrogram& a,
                                std::span<const int> durations_a,
                                const MelSpectrogram& b,
                                std::span<const int> durations_b) {
  if (durations_a.size() != durations_b.size())
    throw InputError("content distance: phoneme count mismatch");
  Tape<S> t;
  auto fa = mel_to_const_frames(t, a);
  auto fb = mel_to_const_frames(t, b);
  auto za = detail::content_encodings(bundle, t, group_frames<S>(fa, durations_a));
  auto zb = detail::content_encodings(bundle, t, group_frames<S>(fb, durations_b));
  double sum = 0;
  for (std::size_t i = 0; i < za.size(); ++i)
    sum += cosine_distance_value(za[i], zb[i]);
  return sum / static_cast<double>(za.size());
}

/// 1 - cosine distance of the utterance-level speaker encodings.
template <class S>
double speaker_similarity_between(ModelBundle<S>& bundle, const MelSpectrogram& a,
                                  const MelSpectrogram& b) {
  Tape<S> t;
  auto fa = mel_to_const_frames(t, a);
  auto fb = mel_to_const_frames(t, b);
  auto za = detail::speaker_encoding(bundle, t, std::span<const typename Tape<S>::Ref>(fa));
  auto zb = detail::speaker_encoding(bundle, t, std::span<const typename Tape<S>::Ref>(fb));
  return 1.0 - cosine_distance_value(za, zb);
}

struct EvalOptions {
  std::uint64_t seed = 0;
  SynthSystem system = SynthSystem::kBase;
  AsrClient* asr = nullptr;
  RetryPolicy retry;
};

/// Held-out objective metrics. The cross-language protocol takes each
/// held-out utterance of an anchor speaker, synthesizes its text with a
/// speaker of another language, and scores the synthesized mel's per-phoneme
/// content encodings against the anchor's ground truth and its speaker
/// encoding against a ground-truth mel of the target speaker. The native
/// protocol synthesizes with the utterance's own speaker. Deterministic given
/// (checkpoint, manifest, seed); rows are sorted by utterance id before
/// aggregation.
template <class S>
EvalReport evaluate(ModelBundle<S>& bundle, const CorpusManifest& manifest,
                    EvalSplit split, const EvalOptions& opt) {
  const auto held = manifest.heldout_indices();
  const auto train = manifest.train_indices();
  std::vector<int> anchors;
  for (int idx : held) {
    const Utterance& u = manifest.utterances[idx];
    if (manifest.is_anchor_of(u.speaker, u.language)) anchors.push_back(idx);
  }
  if (anchors.empty()) throw InputError("evaluate: empty test split");

  // deterministic ground-truth reference mel per speaker: first training cut
  std::map<std::string, const Utterance*> reference_of;
  for (int idx : train) {
    const Utterance& u = manifest.utterances[idx];
    if (!reference_of.count(u.speaker)) reference_of[u.speaker] = &u;
  }

  EvalReport report;
  report.split = split;
  for (int idx : anchors) {
    const Utterance& u = manifest.utterances[idx];

    std::string target;
    if (split == EvalSplit::kIntraLan) {
      target = u.speaker;
    } else {
      std::vector<std::string> candidates;
      for (const auto& s : bundle.speakers())
        if (s.native_language != u.language) candidates.push_back(s.tag);
      if (candidates.empty()) throw InputError("evaluate: no cross-language speaker");
      Rng rng(mix_seed(opt.seed, hash_string(u.utt_id)));
      target = candidates[rng.randint(static_cast<int>(candidates.size()))];
    }

    SynthRequest req;
    req.phonemes = u.phonemes;
    req.speaker = target;
    req.language = u.language;
    req.system = opt.system;
    if (opt.system == SynthSystem::kBaseFeDfe && split == EvalSplit::kIntraLan)
      req.system = SynthSystem::kBaseFe;  // transfer serves cross-lingual cases only
    auto [mel, meta] = run_synthesis(bundle, req);

    EvalRow row;
    row.utt_id = u.utt_id;
    row.target_speaker = target;
    row.language = u.language;
    row.content_distance =
        content_distance_between(bundle, u.mel, u.durations, mel, meta.durations);

    const Utterance* reference = reference_of.count(target) ? reference_of[target] : nullptr;
    if (!reference) throw InputError("evaluate: no training mel for speaker " + target);
    row.speaker_similarity = speaker_similarity_between(bundle, mel, reference->mel);

    // teacher-forced self-reconstruction quality of the anchor utterance
    {
      Tape<S> t;
      TeacherForcing tf{u.durations, u.f0, u.energy};
      auto out = bundle.model().synthesize(t, u.phonemes,
                                           bundle.speaker_index(u.speaker),
                                           SynthesisMode::kTeacherForced, nullptr, &tf);
      double l1 = 0;
      for (int k = 0; k < out.num_frames(); ++k) {
        auto v = t.value(out.mel_post[k]);
        for (int j = 0; j < u.mel.n_mels(); ++j)
          l1 += std::abs(static_cast<double>(v[j]) - u.mel.frames(k, j));
      }
      row.mel_l1 = l1 / (static_cast<double>(u.mel.num_frames()) * u.mel.n_mels());
    }

    if (opt.asr) {
      std::ostringstream ref_text;
      for (std::size_t i = 0; i < u.phonemes.size(); ++i)
        ref_text << (i ? " " : "") << manifest.inventory.symbols[u.phonemes[i]];
      AsrClient::Request areq{&mel, u.language};
      if (auto hyp = transcribe_with_retries(*opt.asr, areq, opt.retry))
        row.wer = word_error_rate(ref_text.str(), *hyp);
    }
    report.rows.push_back(std::move(row));
  }

  std::sort(report.rows.begin(), report.rows.end(),
            [](const EvalRow& a, const EvalRow& b) { return a.utt_id < b.utt_id; });

  std::vector<double> cd, ss, l1, wer;
  for (const auto& r : report.rows) {
    cd.push_back(r.content_distance);
    ss.push_back(r.speaker_similarity);
    l1.push_back(r.mel_l1);
    if (r.wer) wer.push_back(*r.wer);
  }
  detail::mean_std(cd, report.mean_content_distance, report.std_content_distance);
  detail::mean_std(ss, report.mean_speaker_similarity, report.std_speaker_similarity);
  double dummy_sd = 0;
  detail::mean_std(l1, report.mean_mel_l1, dummy_sd);
  if (!wer.empty()) {
    double m = 0;
    detail::mean_std(wer, m, dummy_sd);
    report.mean_wer = m;
  }
  return report;
}

inline nlohmann::json eval_row_json(const EvalRow& r) {
  nlohmann::json j;
  j["utt_id"] = r.utt_id;
  j["target_speaker"] = r.target_speaker;
  j["language"] = r.language;
  j["content_distance"] = r.content_distance;
  j["speaker_similarity"] = r.speaker_similarity;
  j["mel_l1"] = r.mel_l1;
  if (r.wer) j["wer"] = *r.wer;
  return j;
}

inline std::string eval_report_table(const EvalReport& report) {
  std::ostringstream out;
  out << "utt_id                target_speaker   content_dist  spk_sim   mel_l1";
  const bool have_wer = report.mean_wer.has_value();
  if (have_wer) out << "    wer";
  out << "\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-21s %-16s %11.4f %8.4f %8.4f", r.utt_id.c_str(),
                  r.target_speaker.c_str(), r.content_distance, r.speaker_similarity,
                  r.mel_l1);
    out << buf;
    if (r.wer) {
      std::snprintf(buf, sizeof(buf), " %6.3f", *r.wer);
      out << buf;
    } else if (have_wer) {
      out << "      -";
    }
    out << "\n";
  }
  std::snprintf(buf, sizeof(buf),
                "mean                  %-16s %11.4f %8.4f %8.4f", "",
                report.mean_content_distance, report.mean_speaker_similarity,
                report.mean_mel_l1);
  out << buf;
  if (report.mean_wer) {
    std::snprintf(buf, sizeof(buf), " %6.3f", *report.mean_wer);
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof(buf), "std                   %-16s %11.4f %8.4f", "",
                report.std_content_distance, report.std_speaker_similarity);
  out << buf << "\n";
  return out.str();
}

}  // namespace ttts
