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
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttts/acoustic_model.hpp"
#include "ttts/checkpoint.hpp"
#include "ttts/config.hpp"
#include "ttts/corpus.hpp"
#include "ttts/errors.hpp"
#include "ttts/loss_log.hpp"
#include "ttts/predictors.hpp"
#include "ttts/rng.hpp"
#include "ttts/triplet.hpp"

namespace ttts {

/// Per-speaker f0 mean/stddev over the training split.
inline std::vector<SpeakerF0Stats> compute_speaker_f0_stats(
    const CorpusManifest& manifest, std::span<const int> pool) {
  std::vector<SpeakerF0Stats> out;
  for (const auto& spk : manifest.speakers) {
    double sum = 0, sumsq = 0;
    long long n = 0;
    for (int idx : pool) {
      const Utterance& u = manifest.utterances[idx];
      if (u.speaker != spk.tag) continue;
      for (double v : u.f0) {
        sum += v;
        sumsq += v * v;
        ++n;
      }
    }
    SpeakerF0Stats s;
    s.speaker = spk.tag;
    if (n > 0) {
      s.mu = sum / static_cast<double>(n);
      const double var = std::max(0.0, sumsq / static_cast<double>(n) - s.mu * s.mu);
      s.sigma = std::sqrt(var);
    }
    out.push_back(s);
  }
  return out;
}

namespace detail {
constexpr std::uint64_t kInitTag = 0x1217;
constexpr std::uint64_t kBatchTag = 0xba7c8;
constexpr std::uint64_t kTripletTag = 0x791137;
}  // namespace detail

/// Two-stage training driver. Stage 1 trains everything from scratch with the
/// reconstruction/duration/residual losses plus the predictor reconstruction
/// and adversarial terms; stage 2 fine-tunes from a stage-1 checkpoint with
/// the embedding tables and both predictors frozen, swapping the predictor
/// terms for the triplet loss and stopping on its windowed convergence.
///
/// All per-step randomness is derived from (seed, step), so a run is a pure
/// function of (manifest, config, init checkpoint) and can resume exactly.
template <class S>
class Trainer {
 public:
  Trainer(const CorpusManifest& manifest, TrainConfig cfg)
      : manifest_(&manifest), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.stage == 2)
      throw ConfigError("trainer: stage 2 requires a stage-1 checkpoint");
    build_models();
    finish_setup();
  }

  Trainer(const CorpusManifest& manifest, TrainConfig cfg, const Checkpoint& init)
      : manifest_(&manifest), cfg_(std::move(cfg)) {
    cfg_.validate();
    build_models();
    restore(init);
    finish_setup();
  }

  // ---- accessors -----------------------------------------------------------

  AcousticModel<S>& model() { return *model_; }
  ContentPredictor<S>& content_predictor() { return *cp_; }
  SpeakerPredictor<S>& speaker_predictor() { return *sp_; }
  ParamStore<S>& params() { return store_; }
  const std::vector<SpeakerF0Stats>& f0_stats() const { return f0_stats_; }
  const std::vector<std::string>& frozen_parameters() const { return frozen_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t current_step() const { return step_; }
  bool converged() const { return converged_; }

  // ---- training -------------------------------------------------------------

  LossReport step_once() {
    Rng batch_rng(mix_seed(cfg_.seed, detail::kBatchTag, static_cast<std::uint64_t>(step_)));
    Batch batch = load_batch(*manifest_, train_pool_, cfg_.batch_size, batch_rng);
    LossReport report =
        cfg_.stage == 1 ? stage1_step(batch) : stage2_step(batch);
    report.step = step_;
    report.stage = cfg_.stage;
    ++step_;
    if (cfg_.stage == 2) update_convergence(report.triplet);
    return report;
  }

  /// Runs until max_steps or (stage 2) triplet convergence.
  void run(const std::function<void(const LossReport&)>& sink = nullptr) {
    while (step_ < cfg_.max_steps && !(cfg_.stage == 2 && converged_)) {
      LossReport r = step_once();
      if (sink) sink(r);
    }
  }

  Checkpoint make_checkpoint() const {
    Checkpoint c;
    c.stage = cfg_.stage;
    c.step = step_;
    c.seed = cfg_.seed;
    c.acoustic = cfg_.acoustic;
    c.predictors = cfg_.predictors;
    c.inventory = manifest_->inventory;
    c.speakers = manifest_->speakers;
    c.f0_stats = f0_stats_;
    c.registry_hash = manifest_->registry_hash();
    c.triplet_history.assign(triplet_history_.begin(), triplet_history_.end());
    for (const Param<S>* p : store_.all()) c.params.emplace_back(p->name, to_f32(p->value));
    c.adam_step = opt_->step_count();
    for (const auto& [name, mo] : opt_->state())
      c.adam.emplace(name, std::make_pair(to_f32(mo.m), to_f32(mo.v)));
    return c;
  }

  // ---- loss assembly (public: the acceptance suite drives these directly) ----

  struct StepTerms {
    typename Tape<S>::Ref total;
    LossReport report;
  };

  /// Teacher-forced forward over the batch plus the stage-1 loss terms.
  StepTerms stage1_loss(Tape<S>& t, const Batch& batch) {
    Terms terms = forward_batch(t, batch, /*with_predictor_losses=*/true);
    StepTerms out;
    out.report = terms.report;
    const double lambda = cfg_.lambda_adv;
    out.report.total = terms.report.recon + terms.report.dur + terms.report.res +
                       terms.report.recon_ling + terms.report.recon_spk +
                       lambda * terms.report.adv + terms.report.f0 + terms.report.energy;
    auto total =
        t.add(t.add(t.add(terms.recon, terms.dur), t.add(terms.res, terms.ling)),
              t.add(terms.spk, t.scale_shift(terms.adv, static_cast<S>(lambda))));
    if (cfg_.acoustic.fe_enabled) total = t.add(total, t.add(terms.f0, terms.energy));
    out.total = total;
    check_finite(out.report);
    return out;
  }

  /// Teacher-forced forward plus triplet construction and the stage-2 terms.
  StepTerms stage2_loss(Tape<S>& t, const Batch& batch, Rng& triplet_rng,
                        long long rotation) {
    Terms terms = forward_batch(t, batch, /*with_predictor_losses=*/false);

    TripletRealizeOptions opt;
    opt.cap = cfg_.triplet_cap;
    opt.rotation = rotation;
    opt.teacher_forced_durations = cfg_.triplet_teacher_forced_durations;
    opt.dfe = cfg_.dfe_in_triplet_synthesis;
    opt.f0_stats = &f0_stats_;
    TripletPlanStats stats;
    auto pairs = construct_triplets(t, batch, *manifest_, *model_, triplet_rng, opt, &stats);
    auto trip = triplet_loss(t, pairs, cfg_.triplet_weights,
                             TripletEncoders<S>::from_predictors(*cp_, *sp_));

    StepTerms out;
    out.report = terms.report;
    out.report.triplet_content = static_cast<double>(t.scalar(trip.content));
    out.report.triplet_speaker = static_cast<double>(t.scalar(trip.speaker));
    out.report.triplet = out.report.triplet_content + out.report.triplet_speaker;
    out.report.triplet_pairs = static_cast<int>(pairs.size());
    out.report.triplet_skips = stats.skipped_no_cross_language + stats.skipped_by_cap;
    out.report.triplets = trip.records;

    const bool double_triplet =
        cfg_.literal_stage2_fe_formula && cfg_.acoustic.fe_enabled;
    out.report.total = terms.report.recon + terms.report.dur + terms.report.res +
                       terms.report.f0 + terms.report.energy +
                       out.report.triplet * (double_triplet ? 2.0 : 1.0);
    auto total = t.add(t.add(terms.recon, terms.dur), t.add(terms.res, trip.total));
    if (cfg_.acoustic.fe_enabled) total = t.add(total, t.add(terms.f0, terms.energy));
    if (double_triplet) total = t.add(total, trip.total);
    out.total = total;
    check_finite(out.report);
    return out;
  }

 private:
  struct Terms {
    typename Tape<S>::Ref recon, dur, res, ling, spk, adv, f0, energy;
    LossReport report;
  };

  void build_models() {
    Rng init(mix_seed(cfg_.seed, detail::kInitTag));
    model_.emplace(cfg_.acoustic, manifest_->inventory.size(),
                   static_cast<int>(manifest_->speakers.size()), store_, init);
    cp_.emplace(cfg_.predictors, cfg_.acoustic.n_mels, cfg_.acoustic.phoneme_emb_dim,
                static_cast<int>(manifest_->speakers.size()), store_, init);
    sp_.emplace(cfg_.predictors, cfg_.acoustic.n_mels, cfg_.acoustic.speaker_emb_dim,
                store_, init);
  }

  void finish_setup() {
    train_pool_ = manifest_->train_indices();
    if (train_pool_.empty()) throw ConfigError("trainer: empty training split");
    f0_stats_ = compute_speaker_f0_stats(*manifest_, train_pool_);
    if (cfg_.stage == 2) frozen_ = apply_freeze(store_, cfg_.freeze_prefixes);
    if (!opt_) opt_.emplace(cfg_.lr);
  }

  void restore(const Checkpoint& init) {
    if (init.registry_hash != manifest_->registry_hash())
      throw CheckpointError("trainer: checkpoint registry does not match the corpus");
    const Checkpoint here = skeleton_checkpoint();
    if (detail::checkpoint_meta_json(here)["acoustic"] !=
        detail::checkpoint_meta_json(init)["acoustic"])
      throw CheckpointError("trainer: acoustic config mismatch with checkpoint");
    if (detail::checkpoint_meta_json(here)["predictors"] !=
        detail::checkpoint_meta_json(init)["predictors"])
      throw CheckpointError("trainer: predictor config mismatch with checkpoint");

    for (Param<S>* p : store_.all()) {
      const Mat<float>* src = init.find_param(p->name);
      if (!src) throw CheckpointError("trainer: checkpoint missing parameter " + p->name);
      if (src->rows != p->value.rows || src->cols != p->value.cols)
        throw CheckpointError("trainer: shape mismatch for " + p->name);
      from_f32(*src, p->value);
    }
    if (init.params.size() != store_.all().size())
      throw CheckpointError("trainer: checkpoint has extra parameters");

    if (init.stage == cfg_.stage) {
      // Resume of the same stage: optimizer state, step, and the recent
      // triplet history all carry over.
      step_ = init.step;
      opt_.emplace(cfg_.lr);
      opt_->set_step_count(init.adam_step);
      for (const auto& [name, mv] : init.adam) {
        auto& mo = opt_->state()[name];
        mo.m = Mat<S>(mv.first.rows, mv.first.cols);
        from_f32(mv.first, mo.m);
        mo.v = Mat<S>(mv.second.rows, mv.second.cols);
        from_f32(mv.second, mo.v);
      }
      triplet_history_.assign(init.triplet_history.begin(), init.triplet_history.end());
      refresh_convergence();
    } else if (cfg_.stage == 2 && init.stage == 1) {
      // Fresh fine-tune: new optimizer on the new loss surface, step 0.
      step_ = 0;
      opt_.emplace(cfg_.lr);
    } else {
      throw ConfigError("trainer: cannot start stage " + std::to_string(cfg_.stage) +
                        " from a stage-" + std::to_string(init.stage) + " checkpoint");
    }
  }

  Checkpoint skeleton_checkpoint() const {
    Checkpoint c;
    c.acoustic = cfg_.acoustic;
    c.predictors = cfg_.predictors;
    c.inventory = manifest_->inventory;
    c.speakers = manifest_->speakers;
    c.registry_hash = manifest_->registry_hash();
    return c;
  }

  LossReport stage1_step(const Batch& batch) {
    tape_.reset();
    const std::uint64_t degen0 = tape_.degenerate_norms();
    store_.zero_grads();
    StepTerms st = stage1_loss(tape_, batch);
    tape_.backward(st.total);
    opt_->step(store_.all());
    st.report.degenerate_norms = tape_.degenerate_norms() - degen0;
    return st.report;
  }

  LossReport stage2_step(const Batch& batch) {
    tape_.reset();
    const std::uint64_t degen0 = tape_.degenerate_norms();
    store_.zero_grads();
    Rng triplet_rng(
        mix_seed(cfg_.seed, detail::kTripletTag, static_cast<std::uint64_t>(step_)));
    StepTerms st = stage2_loss(tape_, batch, triplet_rng, step_);
    tape_.backward(st.total);
    opt_->step(store_.all());
    st.report.degenerate_norms = tape_.degenerate_norms() - degen0;
    return st.report;
  }

  /// Teacher-forced pass over every batch item, accumulating the acoustic
  /// loss terms (and, in stage 1, the predictor reconstruction/adversarial
  /// terms). Normalization follows the config: masked means over valid
  /// frame/phoneme counts, or raw per-utterance sums averaged over the batch.
  Terms forward_batch(Tape<S>& t, const Batch& batch, bool with_predictor_losses) {
    using Ref = typename Tape<S>::Ref;
    std::vector<Ref> recon_t, res_t, dur_t, f0_t, energy_t, ling_t, spk_t, adv_t;

    for (int i = 0; i < batch.size(); ++i) {
      const Utterance& u = *batch.items[i];
      const int spk_idx = manifest_->speaker_index(u.speaker);

      TeacherForcing tf;
      tf.durations = u.durations;
      tf.f0 = u.f0;
      tf.energy = u.energy;
      auto out = model_->synthesize(t, u.phonemes, spk_idx,
                                    SynthesisMode::kTeacherForced, nullptr, &tf);

      auto gt_frames = mel_to_const_frames(t, u.mel);
      for (int k = 0; k < out.num_frames(); ++k) {
        recon_t.push_back(t.sum_abs_diff(out.mel_pre[k], gt_frames[k]));
        res_t.push_back(t.sum_abs_diff(out.mel_post[k], gt_frames[k]));
      }
      for (std::size_t p = 0; p < u.phonemes.size(); ++p) {
        auto target = t.scalar_const(static_cast<S>(model_->duration_target(u.durations[p])));
        dur_t.push_back(t.sum_sq_diff(out.dur_pred[p], target));
      }
      if (cfg_.acoustic.fe_enabled) {
        for (std::size_t p = 0; p < u.phonemes.size(); ++p) {
          auto f0_target = t.scalar_const(static_cast<S>(model_->f0_to_norm(u.f0[p])));
          f0_t.push_back(t.sum_sq_diff(out.f0_pred[p], f0_target));
          auto en_target =
              t.scalar_const(static_cast<S>(model_->energy_to_norm(u.energy[p])));
          energy_t.push_back(t.sum_sq_diff(out.energy_pred[p], en_target));
        }
      }

      if (with_predictor_losses) {
        auto segments = group_frames<S>(gt_frames, u.durations);
        auto cenc = cp_->encode(t, segments);
        std::vector<Ref> targets;
        targets.reserve(out.ling_emb.size());
        for (auto e : out.ling_emb) targets.push_back(t.detach(e));
        auto senc = sp_->encode(t, gt_frames);
        auto spk_target = t.detach(model_->speaker_embedding(t, spk_idx));
        auto [ling, spk] = reconstruction_losses(
            t, cenc, senc, std::span<const Ref>(targets), spk_target);
        ling_t.push_back(ling);
        spk_t.push_back(spk);
        adv_t.push_back(cp_->adversarial_loss(t, cenc.segment, spk_idx));
      }
    }

    const double frame_norm =
        cfg_.normalize_losses
            ? static_cast<double>(batch.valid_frames) * cfg_.acoustic.n_mels
            : static_cast<double>(batch.size());
    const double phoneme_norm = cfg_.normalize_losses
                                    ? static_cast<double>(batch.valid_phonemes)
                                    : static_cast<double>(batch.size());
    const double utt_norm = static_cast<double>(batch.size());

    auto combine = [&](std::vector<Ref>& xs, double norm) {
      if (xs.empty()) return t.zeros(1, 1);
      return t.scale_shift(fold_add(t, std::span<const Ref>(xs)),
                           static_cast<S>(1.0 / norm));
    };

    Terms terms;
    terms.recon = combine(recon_t, frame_norm);
    terms.res = combine(res_t, frame_norm);
    terms.dur = combine(dur_t, phoneme_norm);
    terms.f0 = combine(f0_t, phoneme_norm);
    terms.energy = combine(energy_t, phoneme_norm);
    terms.ling = combine(ling_t, phoneme_norm);
    terms.spk = combine(spk_t, utt_norm);
    terms.adv = combine(adv_t, utt_norm);

    terms.report.recon = static_cast<double>(t.scalar(terms.recon));
    terms.report.res = static_cast<double>(t.scalar(terms.res));
    terms.report.dur = static_cast<double>(t.scalar(terms.dur));
    terms.report.f0 = static_cast<double>(t.scalar(terms.f0));
    terms.report.energy = static_cast<double>(t.scalar(terms.energy));
    terms.report.recon_ling = static_cast<double>(t.scalar(terms.ling));
    terms.report.recon_spk = static_cast<double>(t.scalar(terms.spk));
    terms.report.adv = static_cast<double>(t.scalar(terms.adv));
    return terms;
  }

  void check_finite(const LossReport& r) const {
    const double terms[] = {r.recon, r.dur,    r.res,    r.recon_ling,
                            r.recon_spk, r.adv, r.f0,     r.energy,
                            r.triplet,   r.total};
    for (double v : terms)
      if (!std::isfinite(v))
        throw NumericError("training step " + std::to_string(step_) +
                           ": non-finite loss term");
  }

  void update_convergence(double triplet_value) {
    triplet_history_.push_back(triplet_value);
    const std::size_t keep = 2 * static_cast<std::size_t>(cfg_.convergence_window);
    while (triplet_history_.size() > keep) triplet_history_.pop_front();
    refresh_convergence();
  }

  void refresh_convergence() {
    const std::size_t w = static_cast<std::size_t>(cfg_.convergence_window);
    if (triplet_history_.size() < 2 * w) return;
    double prev = 0, cur = 0;
    for (std::size_t i = 0; i < w; ++i) {
      prev += triplet_history_[i];
      cur += triplet_history_[w + i];
    }
    prev /= static_cast<double>(w);
    cur /= static_cast<double>(w);
    if (prev - cur < cfg_.convergence_floor * std::max(prev, 1e-12)) converged_ = true;
  }

  static Mat<float> to_f32(const Mat<S>& m) {
    Mat<float> out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.size(); ++i) out.v[i] = static_cast<float>(m.v[i]);
    return out;
  }
  static void from_f32(const Mat<float>& src, Mat<S>& dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.v[i] = static_cast<S>(src.v[i]);
  }

  const CorpusManifest* manifest_;
  TrainConfig cfg_;
  ParamStore<S> store_;
  std::optional<AcousticModel<S>> model_;
  std::optional<ContentPredictor<S>> cp_;
  std::optional<SpeakerPredictor<S>> sp_;
  std::optional<Adam<S>> opt_;
  std::vector<SpeakerF0Stats> f0_stats_;
  std::vector<int> train_pool_;
  std::vector<std::string> frozen_;
  std::int64_t step_ = 0;
  std::deque<double> triplet_history_;
  bool converged_ = false;
  Tape<S> tape_;
};

}  // namespace ttts
