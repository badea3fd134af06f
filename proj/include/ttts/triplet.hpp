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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ttts/acoustic_model.hpp"
#include "ttts/corpus.hpp"
#include "ttts/errors.hpp"
#include "ttts/predictors.hpp"
#include "ttts/tape.hpp"

namespace ttts {

struct TripletWeights {
  double alpha = 1.0;  // content term
  double beta = 0.02;  // speaker term

  void validate() const {
    if (alpha < 0 || beta < 0) throw ConfigError("triplet weights must be >= 0");
  }
};

/// Selection metadata for one triplet pair: batch positions of the content
/// anchor (an anchor-speaker utterance), the positive-speaker donor item, the
/// speaker-anchor mel, and the speaker-negative mel.
struct TripletPlan {
  int anchor_item = -1;  // batch position of the content anchor (GT)
  int pos_item = -1;     // batch position whose speaker synthesizes the positive
  int an_s_item = -1;    // batch position of the speaker-anchor GT mel
  int neg_item = -1;     // batch position of the speaker-negative GT mel

  std::string anchor_speaker;    // speaker of the content anchor
  std::string positive_speaker;  // cross-language speaker being cloned
  std::string negative_speaker;
  std::string language;  // language of the anchor utterance
  std::string utt_id;    // anchor utterance id
};

struct TripletPlanStats {
  int eligible = 0;                  // anchor-speaker items in the batch
  int skipped_no_cross_language = 0;
  int skipped_by_cap = 0;
  int emitted = 0;
};

/// Implements the per-batch selection: for every batch item spoken by the
/// anchor speaker of its language, pick a positive speaker uniformly among
/// batch items of a different language, a speaker-anchor mel uniformly among
/// batch items of that speaker, and a negative mel uniformly among batch
/// items of any other speaker. Items with an empty candidate set are skipped
/// and counted. At most `cap` plans per batch; when more items are eligible,
/// the starting item rotates with `rotation` so all anchors participate over
/// consecutive steps.
inline std::vector<TripletPlan> plan_triplets(const Batch& batch,
                                              const CorpusManifest& manifest, Rng& rng,
                                              int cap, long long rotation,
                                              TripletPlanStats* stats = nullptr) {
  TripletPlanStats local;
  std::vector<int> eligible;
  for (int i = 0; i < batch.size(); ++i) {
    const Utterance& u = *batch.items[i];
    if (manifest.is_anchor_of(u.speaker, u.language)) eligible.push_back(i);
  }
  local.eligible = static_cast<int>(eligible.size());

  std::vector<int> order;
  if (!eligible.empty()) {
    const std::size_t start =
        static_cast<std::size_t>(rotation % static_cast<long long>(eligible.size()));
    for (std::size_t k = 0; k < eligible.size(); ++k)
      order.push_back(eligible[(start + k) % eligible.size()]);
  }

  std::vector<TripletPlan> plans;
  for (int i : order) {
    if (cap >= 0 && static_cast<int>(plans.size()) >= cap) {
      ++local.skipped_by_cap;
      continue;
    }
    const Utterance& anchor = *batch.items[i];

    std::vector<int> cross;
    for (int j = 0; j < batch.size(); ++j)
      if (batch.items[j]->language != anchor.language) cross.push_back(j);
    if (cross.empty()) {
      ++local.skipped_no_cross_language;
      continue;
    }
    const int pos_item = cross[rng.randint(static_cast<int>(cross.size()))];
    const std::string& pos_speaker = batch.items[pos_item]->speaker;

    std::vector<int> of_pos, not_pos;
    for (int j = 0; j < batch.size(); ++j) {
      if (batch.items[j]->speaker == pos_speaker)
        of_pos.push_back(j);
      else
        not_pos.push_back(j);
    }
    // of_pos contains at least pos_item; not_pos contains at least the anchor
    // (its speaker differs from pos_speaker because the languages differ).
    const int an_s_item = of_pos[rng.randint(static_cast<int>(of_pos.size()))];
    const int neg_item = not_pos[rng.randint(static_cast<int>(not_pos.size()))];

    TripletPlan p;
    p.anchor_item = i;
    p.pos_item = pos_item;
    p.an_s_item = an_s_item;
    p.neg_item = neg_item;
    p.anchor_speaker = anchor.speaker;
    p.positive_speaker = pos_speaker;
    p.negative_speaker = batch.items[neg_item]->speaker;
    p.language = anchor.language;
    p.utt_id = anchor.utt_id;
    plans.push_back(std::move(p));
    ++local.emitted;
  }
  if (stats) *stats = local;
  return plans;
}

/// A plan realized on a tape: constant encodings of the GT mels plus the live
/// synthesized positive, ready for the loss. The content anchor and the
/// speaker positive share the same synthesized mel nodes.
template <class S>
struct TripletPair {
  using Ref = typename Tape<S>::Ref;

  TripletPlan plan;
  std::vector<std::vector<Ref>> anchor_segments;    // GT mel split by GT durations
  std::vector<std::vector<Ref>> positive_segments;  // synthesized, own durations
  std::vector<Ref> speaker_anchor_frames;           // GT mel of the positive speaker
  std::vector<Ref> positive_frames;                 // the synthesized mel (live)
  std::vector<Ref> negative_frames;                 // GT mel of another speaker
  AcousticOutputs<S> synthesis;
};

struct TripletRealizeOptions {
  int cap = 4;
  long long rotation = 0;
  /// Synthesize the positive with ground-truth durations instead of predicted
  /// ones (keeps the mel path differentiable end to end for gradient checks).
  bool teacher_forced_durations = false;
  /// Apply prosody transfer during construction: each positive is synthesized
  /// with the plan's anchor speaker feeding the duration (and, in the FE
  /// variant, f0/energy) heads while the decoder keeps the positive speaker.
  bool dfe = false;
  /// Per-speaker f0 statistics for the linear adaptation under dfe (FE only).
  const std::vector<SpeakerF0Stats>* f0_stats = nullptr;
};

inline const SpeakerF0Stats* find_f0_stats(const std::vector<SpeakerF0Stats>& stats,
                                           const std::string& speaker) {
  for (const auto& s : stats)
    if (s.speaker == speaker) return &s;
  return nullptr;
}

/// Plans and synthesizes triplets for a batch. Ground-truth mels enter the
/// tape as constants; the synthesized positive stays live so gradients reach
/// the acoustic model through it.
template <class S>
std::vector<TripletPair<S>> construct_triplets(Tape<S>& t, const Batch& batch,
                                               const CorpusManifest& manifest,
                                               const AcousticModel<S>& model, Rng& rng,
                                               const TripletRealizeOptions& opt,
                                               TripletPlanStats* stats = nullptr) {
  auto plans = plan_triplets(batch, manifest, rng, opt.cap, opt.rotation, stats);
  std::vector<TripletPair<S>> out;
  out.reserve(plans.size());
  for (auto& plan : plans) {
    const Utterance& anchor = *batch.items[plan.anchor_item];
    const int pos_speaker = manifest.speaker_index(plan.positive_speaker);

    TripletPair<S> pair;
    pair.plan = plan;

    TransferContext ctx;
    const TransferContext* transfer = nullptr;
    if (opt.dfe) {
      ctx.anchor_speaker = manifest.speaker_index(plan.anchor_speaker);
      ctx.duration = true;
      if (model.config().fe_enabled) {
        ctx.f0 = true;
        ctx.energy = true;
        const SpeakerF0Stats* src =
            opt.f0_stats ? find_f0_stats(*opt.f0_stats, plan.anchor_speaker) : nullptr;
        const SpeakerF0Stats* tgt =
            opt.f0_stats ? find_f0_stats(*opt.f0_stats, plan.positive_speaker) : nullptr;
        if (src && tgt) {
          ctx.f0_adapt_linear = true;
          ctx.anchor_stats = *src;
          ctx.target_stats = *tgt;
        }
      }
      transfer = &ctx;
    }

    AcousticOutputs<S> synth;
    if (opt.teacher_forced_durations) {
      TeacherForcing tf;
      tf.durations = anchor.durations;
      tf.f0 = anchor.f0;
      tf.energy = anchor.energy;
      synth = model.synthesize(t, anchor.phonemes, pos_speaker,
                               SynthesisMode::kTeacherForced, transfer, &tf);
    } else {
      synth = model.synthesize(t, anchor.phonemes, pos_speaker,
                               SynthesisMode::kFreeRunning, transfer, nullptr);
    }

    pair.positive_frames = synth.mel_post;
    pair.positive_segments =
        group_frames<S>(synth.mel_post, synth.durations_used);

    auto anchor_frames = mel_to_const_frames(t, anchor.mel);
    pair.anchor_segments = group_frames<S>(anchor_frames, anchor.durations);
    if (pair.anchor_segments.size() != pair.positive_segments.size())
      throw InputError("construct_triplets: segment count mismatch");

    pair.speaker_anchor_frames =
        mel_to_const_frames(t, batch.items[plan.an_s_item]->mel);
    pair.negative_frames = mel_to_const_frames(t, batch.items[plan.neg_item]->mel);
    pair.synthesis = std::move(synth);
    out.push_back(std::move(pair));
  }
  return out;
}

/// Encoding callbacks: content maps segments to one vector per phoneme,
/// speaker maps a frame sequence to a single vector. In production these are
/// the predictors' pre-projection hiddens; tests may inject stubs.
template <class S>
struct TripletEncoders {
  using Ref = typename Tape<S>::Ref;
  std::function<std::vector<Ref>(Tape<S>&, const std::vector<std::vector<Ref>>&)> content;
  std::function<Ref(Tape<S>&, std::span<const Ref>)> speaker;

  static TripletEncoders from_predictors(const ContentPredictor<S>& cp,
                                         const SpeakerPredictor<S>& sp) {
    TripletEncoders e;
    e.content = [&cp](Tape<S>& t, const std::vector<std::vector<Ref>>& segs) {
      return cp.encode(t, segs).z;
    };
    e.speaker = [&sp](Tape<S>& t, std::span<const Ref> frames) {
      return sp.encode(t, frames).z;
    };
    return e;
  }
};

/// Per-pair loss terms, for logging.
struct TripletPairRecord {
  std::string utt_id;
  std::string anchor_speaker, positive_speaker, negative_speaker, language;
  double content_term = 0;  // alpha * max(0, mean content distance)
  double speaker_term = 0;  // beta * max(0, D(an,pos) - D(an,neg))
};

template <class S>
struct TripletLossResult {
  using Ref = typename Tape<S>::Ref;
  Ref total = -1;    // mean over pairs of (content_term + speaker_term)
  Ref content = -1;  // mean over pairs of the content terms
  Ref speaker = -1;  // mean over pairs of the speaker terms
  std::vector<TripletPairRecord> records;
};

/// Content term: mean over phonemes of the cosine distance between the
/// encodings of anchor and positive segments, clamped at zero. Speaker term:
/// clamped difference of anchor-positive and anchor-negative distances
/// (no margin). Weighted by alpha/beta and averaged over pairs. An empty pair
/// list contributes exactly zero.
template <class S>
TripletLossResult<S> triplet_loss(Tape<S>& t, const std::vector<TripletPair<S>>& pairs,
                                  const TripletWeights& weights,
                                  const TripletEncoders<S>& encoders) {
  weights.validate();
  TripletLossResult<S> res;
  if (pairs.empty()) {
    res.total = t.zeros(1, 1);
    res.content = t.zeros(1, 1);
    res.speaker = t.zeros(1, 1);
    return res;
  }

  using Ref = typename Tape<S>::Ref;
  std::vector<Ref> content_terms, speaker_terms;
  for (const auto& pair : pairs) {
    const std::size_t n = pair.anchor_segments.size();
    if (n != pair.positive_segments.size())
      throw InputError("triplet_loss: anchor/positive phoneme count mismatch");

    auto z_anchor = encoders.content(t, pair.anchor_segments);
    auto z_pos = encoders.content(t, pair.positive_segments);
    std::vector<Ref> dists;
    dists.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      dists.push_back(cosine_distance(t, z_anchor[i], z_pos[i]));
    auto mean_dist = t.scale_shift(fold_add(t, std::span<const Ref>(dists)),
                                   S(1) / static_cast<S>(n));
    // clamp retained even though the distance is nonnegative by construction
    auto content_term = t.scale_shift(t.relu(mean_dist), static_cast<S>(weights.alpha));

    auto zs_anchor = encoders.speaker(t, pair.speaker_anchor_frames);
    auto zs_pos = encoders.speaker(t, pair.positive_frames);
    auto zs_neg = encoders.speaker(t, pair.negative_frames);
    auto d_pos = cosine_distance(t, zs_anchor, zs_pos);
    auto d_neg = cosine_distance(t, zs_anchor, zs_neg);
    auto speaker_term =
        t.scale_shift(t.relu(t.sub(d_pos, d_neg)), static_cast<S>(weights.beta));

    content_terms.push_back(content_term);
    speaker_terms.push_back(speaker_term);

    TripletPairRecord rec;
    rec.utt_id = pair.plan.utt_id;
    rec.anchor_speaker = pair.plan.anchor_speaker;
    rec.positive_speaker = pair.plan.positive_speaker;
    rec.negative_speaker = pair.plan.negative_speaker;
    rec.language = pair.plan.language;
    rec.content_term = static_cast<double>(t.scalar(content_term));
    rec.speaker_term = static_cast<double>(t.scalar(speaker_term));
    res.records.push_back(std::move(rec));
  }

  const S inv = S(1) / static_cast<S>(pairs.size());
  res.content =
      t.scale_shift(fold_add(t, std::span<const Ref>(content_terms)), inv);
  res.speaker =
      t.scale_shift(fold_add(t, std::span<const Ref>(speaker_terms)), inv);
  res.total = t.add(res.content, res.speaker);
  return res;
}

/// Plain-value cosine distance (no tape), for evaluation paths.
inline double cosine_distance_value(std::span<const double> a, std::span<const double> b,
                                    double eps = 1e-8) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return 1.0 - dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
}

}  // namespace ttts
