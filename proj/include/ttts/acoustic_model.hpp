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

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttts/errors.hpp"
#include "ttts/mel.hpp"
#include "ttts/nn.hpp"
#include "ttts/prosody.hpp"
#include "ttts/rng.hpp"
#include "ttts/tape.hpp"

namespace ttts {

struct AcousticConfig {
  int n_mels = 80;
  int phoneme_emb_dim = 64;
  int speaker_emb_dim = 32;
  int encoder_dim = 128;   // bidirectional output (2 x per-direction hidden)
  int decoder_dim = 128;   // two stacked recurrent layers
  int postnet_channels = 32;
  int duration_hidden = 32;
  int prosody_hidden = 32;

  bool fe_enabled = false;
  int f0_bins = 32;
  int energy_bins = 32;
  int prosody_emb_dim = 8;
  double f0_min_hz = 50.0;
  double f0_max_hz = 400.0;
  double energy_min = 0.0;
  double energy_max = 2.0;

  /// Duration loss/prediction domain: log-durations by default; raw frames
  /// when false.
  bool duration_log_domain = true;

  void validate() const {
    if (n_mels <= 0 || phoneme_emb_dim <= 0 || speaker_emb_dim <= 0 ||
        encoder_dim <= 0 || decoder_dim <= 0 || postnet_channels <= 0 ||
        duration_hidden <= 0 || prosody_hidden <= 0 || prosody_emb_dim <= 0)
      throw ConfigError("acoustic config: all dims must be positive");
    if (encoder_dim % 2 != 0)
      throw ConfigError("acoustic config: encoder_dim must be even");
    if (f0_bins < 2 || energy_bins < 2)
      throw ConfigError("acoustic config: quantization bins must be >= 2");
    if (!(f0_min_hz < f0_max_hz) || !(energy_min < energy_max))
      throw ConfigError("acoustic config: empty prosody range");
  }
};

enum class SynthesisMode { kTeacherForced, kFreeRunning };

/// Ground-truth conditioning for teacher-forced synthesis.
struct TeacherForcing {
  std::span<const int> durations;
  std::span<const double> f0;      // Hz per phoneme; FE only
  std::span<const double> energy;  // per phoneme; FE only
};

/// Resolved prosody-transfer request: which heads read the anchor speaker's
/// embedding, plus the statistics for the optional linear f0 adaptation.
struct TransferContext {
  int anchor_speaker = -1;
  bool duration = false;
  bool f0 = false;
  bool energy = false;
  bool f0_adapt_linear = false;
  bool adapt_log_domain = false;
  SpeakerF0Stats anchor_stats;
  SpeakerF0Stats target_stats;
};

template <class S>
struct AcousticOutputs {
  using Ref = typename Tape<S>::Ref;

  std::vector<Ref> mel_pre;    // per frame, n_mels x 1
  std::vector<Ref> residual;   // per frame
  std::vector<Ref> mel_post;   // mel_pre + residual

  std::vector<Ref> dur_pred;       // per phoneme, model domain (log by default)
  std::vector<Ref> f0_pred;        // per phoneme, standardized units; FE only
  std::vector<Ref> energy_pred;
  std::vector<Ref> ling_emb;       // per phoneme, the trainable embedding lookups

  std::vector<int> durations_used;     // what the length regulator expanded with
  std::vector<double> f0_used;         // Hz values that conditioned the decoder
  std::vector<double> energy_used;

  // Conditioning audit: which speaker-embedding row fed each head.
  int duration_cond_speaker = -1;
  int f0_cond_speaker = -1;
  int energy_cond_speaker = -1;
  int decoder_cond_speaker = -1;
  Ref duration_cond_emb = -1;
  Ref decoder_cond_emb = -1;

  int num_frames() const { return static_cast<int>(mel_post.size()); }
};

/// Duration-based multi-speaker acoustic model: phoneme embedding, convolutional
/// mixing + bidirectional recurrent text encoder, speaker-conditioned duration
/// head, optional f0/energy heads with quantized embeddings, length regulation,
/// recurrent decoder, and a residual post-net.
template <class S>
class AcousticModel {
 public:
  using Ref = typename Tape<S>::Ref;

  AcousticModel(const AcousticConfig& cfg, int n_phonemes, int n_speakers,
                ParamStore<S>& store, Rng& rng)
      : cfg_(cfg), n_phonemes_(n_phonemes), n_speakers_(n_speakers) {
    cfg_.validate();
    if (n_phonemes < 1 || n_speakers < 1)
      throw ConfigError("acoustic model: empty inventory or speaker registry");

    phoneme_table_ = &store.create("embed.phoneme", n_phonemes, cfg_.phoneme_emb_dim);
    init_uniform(*phoneme_table_, rng, std::sqrt(1.0 / cfg_.phoneme_emb_dim));
    speaker_table_ = &store.create("embed.speaker", n_speakers, cfg_.speaker_emb_dim);
    init_uniform(*speaker_table_, rng, std::sqrt(1.0 / cfg_.speaker_emb_dim));

    enc_conv1_.init(store, "acoustic.enc.conv1", cfg_.phoneme_emb_dim,
                    cfg_.phoneme_emb_dim, rng);
    enc_conv2_.init(store, "acoustic.enc.conv2", cfg_.phoneme_emb_dim,
                    cfg_.phoneme_emb_dim, rng);
    enc_rnn_.init(store, "acoustic.enc.rnn", cfg_.phoneme_emb_dim, cfg_.encoder_dim / 2,
                  rng);

    const int cond = cfg_.encoder_dim + cfg_.speaker_emb_dim;
    dur_fc1_.init(store, "acoustic.dur.fc1", cond, cfg_.duration_hidden, rng);
    dur_fc2_.init(store, "acoustic.dur.fc2", cfg_.duration_hidden, 1, rng);

    if (cfg_.fe_enabled) {
      f0_fc1_.init(store, "acoustic.fe.f0.fc1", cond, cfg_.prosody_hidden, rng);
      f0_fc2_.init(store, "acoustic.fe.f0.fc2", cfg_.prosody_hidden, 1, rng);
      energy_fc1_.init(store, "acoustic.fe.energy.fc1", cond, cfg_.prosody_hidden, rng);
      energy_fc2_.init(store, "acoustic.fe.energy.fc2", cfg_.prosody_hidden, 1, rng);
      f0_emb_ = &store.create("acoustic.fe.f0_emb", cfg_.f0_bins, cfg_.prosody_emb_dim);
      init_uniform(*f0_emb_, rng, std::sqrt(1.0 / cfg_.prosody_emb_dim));
      energy_emb_ =
          &store.create("acoustic.fe.energy_emb", cfg_.energy_bins, cfg_.prosody_emb_dim);
      init_uniform(*energy_emb_, rng, std::sqrt(1.0 / cfg_.prosody_emb_dim));
    }

    const int dec_in = cfg_.encoder_dim + cfg_.speaker_emb_dim +
                       (cfg_.fe_enabled ? 2 * cfg_.prosody_emb_dim : 0);
    dec_rnn1_.init(store, "acoustic.dec.rnn1", dec_in, cfg_.decoder_dim, rng);
    dec_rnn2_.init(store, "acoustic.dec.rnn2", cfg_.decoder_dim, cfg_.decoder_dim, rng);
    dec_out_.init(store, "acoustic.dec.out", cfg_.decoder_dim, cfg_.n_mels, rng);

    post_conv1_.init(store, "acoustic.post.conv1", cfg_.n_mels, cfg_.postnet_channels,
                     rng);
    post_conv2_.init(store, "acoustic.post.conv2", cfg_.postnet_channels,
                     cfg_.postnet_channels, rng);
    post_conv3_.init(store, "acoustic.post.conv3", cfg_.postnet_channels, cfg_.n_mels,
                     rng, /*activation=*/false);
  }

  const AcousticConfig& config() const { return cfg_; }
  int n_speakers() const { return n_speakers_; }
  int n_phonemes() const { return n_phonemes_; }
  Param<S>& speaker_table() { return *speaker_table_; }
  Param<S>& phoneme_table() { return *phoneme_table_; }

  Ref speaker_embedding(Tape<S>& t, int speaker) const {
    if (speaker < 0 || speaker >= n_speakers_)
      throw RegistryError("speaker index out of range: " + std::to_string(speaker));
    return t.embed_row(t.param(*speaker_table_), speaker);
  }

  struct TextEncoding {
    std::vector<Ref> states;    // encoder_dim, contextual
    std::vector<Ref> ling_emb;  // phoneme_emb_dim, raw table lookups
  };

  /// Per-phoneme encoder states plus the trainable phoneme-level linguistic
  /// embeddings (pre-encoder lookups), exposed separately.
  TextEncoding encode_text(Tape<S>& t, std::span<const int> phonemes) const {
    if (phonemes.empty()) throw InputError("encode_text: empty sequence");
    for (int p : phonemes)
      if (p < 0 || p >= n_phonemes_)
        throw VocabularyError("phoneme index out of range: " + std::to_string(p));
    TextEncoding out;
    auto table = t.param(*phoneme_table_);
    for (int p : phonemes) out.ling_emb.push_back(t.embed_row(table, p));
    auto h = enc_conv1_.apply(t, out.ling_emb);
    h = enc_conv2_.apply(t, h);
    out.states = enc_rnn_.run(t, h);
    return out;
  }

  /// One duration value per phoneme in the configured domain (log frames by
  /// default).
  std::vector<Ref> predict_durations(Tape<S>& t, std::span<const Ref> states,
                                     Ref speaker_emb) const {
    std::vector<Ref> out;
    out.reserve(states.size());
    for (auto s : states)
      out.push_back(dur_fc2_.apply(t, t.tanh_(dur_fc1_.apply(t, t.concat(s, speaker_emb)))));
    return out;
  }

  /// Converts a raw duration-head output into frames at inference: back to the
  /// raw domain, round half away from zero, clamp to >= 1.
  int duration_to_frames(double pred) const {
    const double raw = cfg_.duration_log_domain ? std::exp(pred) : pred;
    return std::max(1, static_cast<int>(std::lround(raw)));
  }

  double duration_target(int frames) const {
    return cfg_.duration_log_domain ? std::log(static_cast<double>(frames))
                                    : static_cast<double>(frames);
  }

  /// Frame-level states: state t repeated durations[t] times, in order.
  static std::vector<Ref> length_regulate(std::span<const Ref> states,
                                          std::span<const int> durations) {
    if (states.size() != durations.size())
      throw AlignmentError("length_regulate: states/durations length mismatch");
    std::vector<Ref> frames;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (durations[i] < 1) throw AlignmentError("length_regulate: duration < 1");
      for (int k = 0; k < durations[i]; ++k) frames.push_back(states[i]);
    }
    return frames;
  }

  struct ProsodyPrediction {
    std::vector<Ref> f0;      // standardized: (hz - mid) / half_range
    std::vector<Ref> energy;
  };

  ProsodyPrediction predict_prosody(Tape<S>& t, std::span<const Ref> states,
                                    Ref speaker_emb) const {
    require_fe("predict_prosody");
    ProsodyPrediction out;
    for (auto s : states) {
      auto cond = t.concat(s, speaker_emb);
      out.f0.push_back(f0_fc2_.apply(t, t.tanh_(f0_fc1_.apply(t, cond))));
      out.energy.push_back(energy_fc2_.apply(t, t.tanh_(energy_fc1_.apply(t, cond))));
    }
    return out;
  }

  // Standardized <-> physical units for the prosody heads.
  double f0_to_norm(double hz) const {
    return (hz - 0.5 * (cfg_.f0_min_hz + cfg_.f0_max_hz)) /
           (0.5 * (cfg_.f0_max_hz - cfg_.f0_min_hz));
  }
  double f0_from_norm(double n) const {
    return 0.5 * (cfg_.f0_min_hz + cfg_.f0_max_hz) +
           n * 0.5 * (cfg_.f0_max_hz - cfg_.f0_min_hz);
  }
  double energy_to_norm(double e) const {
    return (e - 0.5 * (cfg_.energy_min + cfg_.energy_max)) /
           (0.5 * (cfg_.energy_max - cfg_.energy_min));
  }
  double energy_from_norm(double n) const {
    return 0.5 * (cfg_.energy_min + cfg_.energy_max) +
           n * 0.5 * (cfg_.energy_max - cfg_.energy_min);
  }

  Ref f0_embedding(Tape<S>& t, double hz) const {
    require_fe("f0_embedding");
    return t.embed_row(t.param(*f0_emb_),
                       quantize_prosody(hz, cfg_.f0_min_hz, cfg_.f0_max_hz, cfg_.f0_bins));
  }
  Ref energy_embedding(Tape<S>& t, double e) const {
    require_fe("energy_embedding");
    return t.embed_row(
        t.param(*energy_emb_),
        quantize_prosody(e, cfg_.energy_min, cfg_.energy_max, cfg_.energy_bins));
  }

  struct DecoderInput {
    std::vector<Ref> frame_states;
    Ref speaker;
    std::vector<Ref> f0_emb;      // per frame; empty unless FE
    std::vector<Ref> energy_emb;
  };

  /// Frame states -> mel_pre, post-net residual, and mel_post = mel_pre +
  /// residual. Throws NumericError if any output is non-finite.
  AcousticOutputs<S> decode(Tape<S>& t, const DecoderInput& in) const {
    if (in.frame_states.empty()) throw InputError("decode: no frames");
    const bool prosody = !in.f0_emb.empty();
    if (prosody && (in.f0_emb.size() != in.frame_states.size() ||
                    in.energy_emb.size() != in.frame_states.size()))
      throw AlignmentError("decode: prosody embeddings misaligned with frames");

    std::vector<Ref> xs;
    xs.reserve(in.frame_states.size());
    for (std::size_t k = 0; k < in.frame_states.size(); ++k)
      xs.push_back(prosody ? t.concat(in.frame_states[k], in.speaker, in.f0_emb[k],
                                      in.energy_emb[k])
                           : t.concat(in.frame_states[k], in.speaker));

    auto h1 = dec_rnn1_.run(t, xs);
    auto h2 = dec_rnn2_.run(t, h1);

    AcousticOutputs<S> out;
    out.mel_pre.reserve(h2.size());
    for (auto h : h2) out.mel_pre.push_back(dec_out_.apply(t, h));
    auto r = post_conv1_.apply(t, out.mel_pre);
    r = post_conv2_.apply(t, r);
    out.residual = post_conv3_.apply(t, r);
    out.mel_post.reserve(h2.size());
    for (std::size_t k = 0; k < h2.size(); ++k)
      out.mel_post.push_back(t.add(out.mel_pre[k], out.residual[k]));

    for (auto ref : out.mel_post)
      for (S v : t.value(ref))
        if (!std::isfinite(static_cast<double>(v)))
          throw NumericError("decode: non-finite activation");
    out.decoder_cond_emb = in.speaker;
    return out;
  }

  /// Full text-to-mel pass. Teacher-forced mode regulates with the supplied
  /// durations (and conditions on supplied prosody); free running uses the
  /// model's own predictions. `transfer` reroutes the duration/f0/energy
  /// conditioning to the anchor speaker while the decoder keeps `speaker`.
  AcousticOutputs<S> synthesize(Tape<S>& t, std::span<const int> phonemes, int speaker,
                                SynthesisMode mode,
                                const TransferContext* transfer = nullptr,
                                const TeacherForcing* tf = nullptr) const {
    if (speaker < 0 || speaker >= n_speakers_)
      throw RegistryError("synthesize: unknown speaker " + std::to_string(speaker));
    if (mode == SynthesisMode::kTeacherForced) {
      if (tf == nullptr || tf->durations.size() != phonemes.size())
        throw InputError("synthesize: teacher forcing requires ground-truth durations");
      if (cfg_.fe_enabled &&
          (tf->f0.size() != phonemes.size() || tf->energy.size() != phonemes.size()))
        throw InputError("synthesize: teacher forcing requires ground-truth prosody");
    }
    if (transfer != nullptr) {
      if ((transfer->f0 || transfer->energy) && !cfg_.fe_enabled)
        throw UnsupportedError("synthesize: f0/energy transfer needs fe_enabled");
      if (transfer->anchor_speaker < 0 || transfer->anchor_speaker >= n_speakers_)
        throw RegistryError("synthesize: unknown transfer anchor");
    }

    auto enc = encode_text(t, phonemes);
    const Ref spk_target = speaker_embedding(t, speaker);
    AcousticOutputs<S> out;
    out.ling_emb = enc.ling_emb;
    auto head_emb = [&](bool transferred) {
      return (transfer && transferred) ? speaker_embedding(t, transfer->anchor_speaker)
                                       : spk_target;
    };
    const Ref spk_dur = head_emb(transfer && transfer->duration);

    out.decoder_cond_speaker = speaker;
    out.duration_cond_speaker =
        (transfer && transfer->duration) ? transfer->anchor_speaker : speaker;
    out.duration_cond_emb = spk_dur;

    out.dur_pred = predict_durations(t, enc.states, spk_dur);
    if (mode == SynthesisMode::kTeacherForced) {
      out.durations_used.assign(tf->durations.begin(), tf->durations.end());
    } else {
      for (auto d : out.dur_pred)
        out.durations_used.push_back(
            duration_to_frames(static_cast<double>(t.scalar(d))));
    }

    DecoderInput dec;
    dec.frame_states = length_regulate(enc.states, out.durations_used);
    dec.speaker = spk_target;

    if (cfg_.fe_enabled) {
      const Ref spk_f0 = head_emb(transfer && transfer->f0);
      const Ref spk_energy = head_emb(transfer && transfer->energy);
      out.f0_cond_speaker =
          (transfer && transfer->f0) ? transfer->anchor_speaker : speaker;
      out.energy_cond_speaker =
          (transfer && transfer->energy) ? transfer->anchor_speaker : speaker;

      // Heads are always evaluated (their outputs feed the prosody losses).
      auto pf0 = predict_prosody_head(t, enc.states, spk_f0, f0_fc1_, f0_fc2_);
      auto pen = predict_prosody_head(t, enc.states, spk_energy, energy_fc1_, energy_fc2_);
      out.f0_pred = pf0;
      out.energy_pred = pen;

      if (mode == SynthesisMode::kTeacherForced) {
        out.f0_used.assign(tf->f0.begin(), tf->f0.end());
        out.energy_used.assign(tf->energy.begin(), tf->energy.end());
      } else {
        for (auto r : pf0)
          out.f0_used.push_back(f0_from_norm(static_cast<double>(t.scalar(r))));
        for (auto r : pen)
          out.energy_used.push_back(energy_from_norm(static_cast<double>(t.scalar(r))));
        if (transfer && transfer->f0 && transfer->f0_adapt_linear)
          out.f0_used = adapt_f0_linear(out.f0_used, transfer->anchor_stats,
                                        transfer->target_stats,
                                        transfer->adapt_log_domain);
      }

      std::vector<Ref> f0e, ene;
      for (std::size_t i = 0; i < phonemes.size(); ++i) {
        f0e.push_back(f0_embedding(t, out.f0_used[i]));
        ene.push_back(energy_embedding(t, out.energy_used[i]));
      }
      dec.f0_emb = length_regulate(f0e, out.durations_used);
      dec.energy_emb = length_regulate(ene, out.durations_used);
    }

    auto decoded = decode(t, dec);
    out.mel_pre = std::move(decoded.mel_pre);
    out.residual = std::move(decoded.residual);
    out.mel_post = std::move(decoded.mel_post);
    out.decoder_cond_emb = dec.speaker;
    return out;
  }

  /// Extracts mel_post into a plain float mel.
  MelSpectrogram extract_mel(const Tape<S>& t, const AcousticOutputs<S>& out) const {
    MelSpectrogram mel;
    mel.frames = Mat<float>(out.num_frames(), cfg_.n_mels);
    for (int k = 0; k < out.num_frames(); ++k) {
      auto v = t.value(out.mel_post[k]);
      for (int j = 0; j < cfg_.n_mels; ++j)
        mel.frames(k, j) = static_cast<float>(v[j]);
    }
    return mel;
  }

 private:
  void require_fe(const char* what) const {
    if (!cfg_.fe_enabled)
      throw UnsupportedError(std::string(what) + ": f0/energy variant disabled");
  }

  std::vector<Ref> predict_prosody_head(Tape<S>& t, std::span<const Ref> states,
                                        Ref speaker_emb, const Affine<S>& fc1,
                                        const Affine<S>& fc2) const {
    std::vector<Ref> out;
    out.reserve(states.size());
    for (auto s : states)
      out.push_back(fc2.apply(t, t.tanh_(fc1.apply(t, t.concat(s, speaker_emb)))));
    return out;
  }

  AcousticConfig cfg_;
  int n_phonemes_ = 0;
  int n_speakers_ = 0;

  Param<S>* phoneme_table_ = nullptr;
  Param<S>* speaker_table_ = nullptr;
  ConvSeq<S> enc_conv1_, enc_conv2_;
  BiGru<S> enc_rnn_;
  Affine<S> dur_fc1_, dur_fc2_;
  Affine<S> f0_fc1_, f0_fc2_, energy_fc1_, energy_fc2_;
  Param<S>* f0_emb_ = nullptr;
  Param<S>* energy_emb_ = nullptr;
  Gru<S> dec_rnn1_, dec_rnn2_;
  Affine<S> dec_out_;
  ConvSeq<S> post_conv1_, post_conv2_, post_conv3_;
};

}  // namespace ttts
