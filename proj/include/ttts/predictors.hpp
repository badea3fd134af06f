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

#include <span>
#include <string>
#include <vector>

#include "ttts/errors.hpp"
#include "ttts/mel.hpp"
#include "ttts/nn.hpp"
#include "ttts/rng.hpp"
#include "ttts/tape.hpp"

namespace ttts {

struct PredictorConfig {
  int ref_channels = 32;  // conv channels of the reference encoder
  int ref_hidden = 32;    // recurrent summary size (also dim of the speaker encoding)
  int ctx_hidden = 16;    // per-direction contextual hidden (content encoding = 2x)
  int adv_hidden = 32;    // hidden width of the speaker-adversarial classifier

  int content_encoding_dim() const { return 2 * ctx_hidden; }
  int speaker_encoding_dim() const { return ref_hidden; }

  void validate() const {
    if (ref_channels <= 0 || ref_hidden <= 0 || ctx_hidden <= 0 || adv_hidden <= 0)
      throw ConfigError("predictor config: dims must be positive");
  }
};

/// Mel-input reference encoder: two convolutional mixing layers over the frame
/// axis followed by a recurrent layer whose final state summarizes the input.
template <class S>
class RefEncoder {
 public:
  using Ref = typename Tape<S>::Ref;

  void init(ParamStore<S>& store, const std::string& name, int n_mels,
            const PredictorConfig& cfg, Rng& rng) {
    conv1_.init(store, name + ".conv1", n_mels, cfg.ref_channels, rng);
    conv2_.init(store, name + ".conv2", cfg.ref_channels, cfg.ref_channels, rng);
    rnn_.init(store, name + ".rnn", cfg.ref_channels, cfg.ref_hidden, rng);
  }

  Ref encode(Tape<S>& t, std::span<const Ref> frames) const {
    if (frames.empty()) throw InputError("reference encoder: empty frame sequence");
    auto h = conv1_.apply(t, frames);
    h = conv2_.apply(t, h);
    return rnn_.last(t, h);
  }

 private:
  ConvSeq<S> conv1_, conv2_;
  Gru<S> rnn_;
};

template <class S>
struct ContentEncoding {
  using Ref = typename Tape<S>::Ref;
  std::vector<Ref> z;        // per-phoneme encodings (pre-projection hiddens)
  std::vector<Ref> e_hat;    // reconstructed linguistic embeddings
  std::vector<Ref> segment;  // per-segment reference summaries (adversarial input)
};

template <class S>
struct SpeakerEncoding {
  using Ref = typename Tape<S>::Ref;
  Ref z = -1;      // utterance encoding (pre-projection hidden)
  Ref e_hat = -1;  // reconstructed speaker embedding
};

/// Content predictor: encodes phoneme-level mel segments, processes them in
/// context, and reconstructs the linguistic embedding of each phoneme. The
/// per-phoneme hidden before the output projection is the content encoding.
/// Carries the speaker-adversarial classifier over gradient-reversed segment
/// summaries.
template <class S>
class ContentPredictor {
 public:
  using Ref = typename Tape<S>::Ref;

  ContentPredictor(const PredictorConfig& cfg, int n_mels, int phoneme_emb_dim,
                   int n_speakers, ParamStore<S>& store, Rng& rng)
      : cfg_(cfg), n_speakers_(n_speakers) {
    cfg_.validate();
    ref_.init(store, "cp.ref", n_mels, cfg_, rng);
    ctx_.init(store, "cp.ctx", cfg_.ref_hidden, cfg_.ctx_hidden, rng);
    out_.init(store, "cp.out", cfg_.content_encoding_dim(), phoneme_emb_dim, rng);
    adv_fc1_.init(store, "cp.adv.fc1", cfg_.ref_hidden, cfg_.adv_hidden, rng);
    adv_fc2_.init(store, "cp.adv.fc2", cfg_.adv_hidden, n_speakers, rng);
  }

  const PredictorConfig& config() const { return cfg_; }

  /// Segments are per-phoneme frame lists; each is encoded by the shared
  /// reference encoder and then processed across the phoneme axis.
  ContentEncoding<S> encode(Tape<S>& t,
                            const std::vector<std::vector<Ref>>& segments) const {
    if (segments.empty()) throw InputError("content predictor: no segments");
    ContentEncoding<S> out;
    out.segment.reserve(segments.size());
    for (const auto& seg : segments) {
      if (seg.empty()) throw InputError("content predictor: empty segment");
      out.segment.push_back(ref_.encode(t, seg));
    }
    out.z = ctx_.run(t, out.segment);
    out.e_hat.reserve(out.z.size());
    for (auto z : out.z) out.e_hat.push_back(out_.apply(t, z));
    return out;
  }

  /// Cross entropy of the speaker classifier on gradient-reversed segment
  /// summaries, averaged over phonemes. The classifier receives the normal
  /// gradient; everything upstream of the reversal receives its negation.
  Ref adversarial_loss(Tape<S>& t, std::span<const Ref> segment_encodings,
                       int speaker) const {
    if (speaker < 0 || speaker >= n_speakers_)
      throw RegistryError("adversarial loss: unknown speaker " + std::to_string(speaker));
    if (segment_encodings.empty()) throw InputError("adversarial loss: no segments");
    std::vector<Ref> terms;
    terms.reserve(segment_encodings.size());
    for (auto seg : segment_encodings) {
      auto hidden = t.tanh_(adv_fc1_.apply(t, t.grad_reverse(seg)));
      terms.push_back(t.softmax_cross_entropy(adv_fc2_.apply(t, hidden), speaker));
    }
    auto total = fold_add(t, std::span<const Ref>(terms));
    return t.scale_shift(total, S(1) / static_cast<S>(terms.size()));
  }

 private:
  PredictorConfig cfg_;
  int n_speakers_;
  RefEncoder<S> ref_;
  BiGru<S> ctx_;
  Affine<S> out_;
  Affine<S> adv_fc1_, adv_fc2_;
};

/// Speaker predictor: the same reference-encoder structure over the whole
/// mel sequence, reconstructing the speaker embedding. The summary before the
/// output projection is the speaker encoding.
template <class S>
class SpeakerPredictor {
 public:
  using Ref = typename Tape<S>::Ref;

  SpeakerPredictor(const PredictorConfig& cfg, int n_mels, int speaker_emb_dim,
                   ParamStore<S>& store, Rng& rng)
      : cfg_(cfg) {
    cfg_.validate();
    ref_.init(store, "sp.ref", n_mels, cfg_, rng);
    out_.init(store, "sp.out", cfg_.speaker_encoding_dim(), speaker_emb_dim, rng);
  }

  const PredictorConfig& config() const { return cfg_; }

  SpeakerEncoding<S> encode(Tape<S>& t, std::span<const Ref> frames) const {
    SpeakerEncoding<S> out;
    out.z = ref_.encode(t, frames);
    out.e_hat = out_.apply(t, out.z);
    return out;
  }

 private:
  PredictorConfig cfg_;
  RefEncoder<S> ref_;
  Affine<S> out_;
};

/// L2 reconstruction losses: sum over phonemes of squared error for the
/// content side, squared error of the speaker embedding for the speaker side.
/// Targets must already be detached (they are treated as constants here).
template <class S>
std::pair<typename Tape<S>::Ref, typename Tape<S>::Ref> reconstruction_losses(
    Tape<S>& t, const ContentEncoding<S>& content, const SpeakerEncoding<S>& speaker,
    std::span<const typename Tape<S>::Ref> ling_targets,
    typename Tape<S>::Ref speaker_target) {
  if (content.e_hat.size() != ling_targets.size())
    throw InputError("reconstruction losses: content target count mismatch");
  std::vector<typename Tape<S>::Ref> terms;
  terms.reserve(content.e_hat.size());
  for (std::size_t i = 0; i < content.e_hat.size(); ++i)
    terms.push_back(t.sum_sq_diff(content.e_hat[i], ling_targets[i]));
  auto ling = fold_add(t, std::span<const typename Tape<S>::Ref>(terms));
  auto spk = t.sum_sq_diff(speaker.e_hat, speaker_target);
  return {ling, spk};
}

/// Groups per-frame mel nodes into per-phoneme segments by durations.
template <class S>
std::vector<std::vector<typename Tape<S>::Ref>> group_frames(
    std::span<const typename Tape<S>::Ref> frames, std::span<const int> durations) {
  std::vector<std::vector<typename Tape<S>::Ref>> segments;
  std::size_t at = 0;
  for (int d : durations) {
    if (d < 1) throw AlignmentError("group_frames: duration < 1");
    if (at + static_cast<std::size_t>(d) > frames.size())
      throw AlignmentError("group_frames: durations exceed frame count");
    segments.emplace_back(frames.begin() + at, frames.begin() + at + d);
    at += d;
  }
  if (at != frames.size()) throw AlignmentError("group_frames: durations undershoot");
  return segments;
}

/// Per-frame constant nodes for a ground-truth mel.
template <class S>
std::vector<typename Tape<S>::Ref> mel_to_const_frames(Tape<S>& t,
                                                       const MelSpectrogram& mel) {
  std::vector<typename Tape<S>::Ref> frames;
  frames.reserve(mel.num_frames());
  for (int k = 0; k < mel.num_frames(); ++k)
    frames.push_back(t.template constant_cast<float>(mel.n_mels(), 1, mel.frame(k)));
  return frames;
}

}  // namespace ttts
