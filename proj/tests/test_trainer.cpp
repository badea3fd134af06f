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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "support/oracles.hpp"
#include "ttts/checkpoint.hpp"
#include "ttts/config.hpp"
#include "ttts/loss_log.hpp"
#include "ttts/trainer.hpp"

using namespace ttts;
using Catch::Approx;

namespace {

GeneratorParams tiny_gen() {
  GeneratorParams gp;
  gp.n_mels = 8;
  gp.min_phonemes = 3;
  gp.max_phonemes = 5;
  gp.min_base_duration = 1;
  gp.max_base_duration = 2;
  return gp;
}

TrainConfig tiny_config(int stage = 1) {
  TrainConfig c;
  c.stage = stage;
  c.lr = 1e-3;
  c.batch_size = 4;
  c.max_steps = 4;
  c.seed = 11;
  c.acoustic.n_mels = 8;
  c.acoustic.phoneme_emb_dim = 4;
  c.acoustic.speaker_emb_dim = 3;
  c.acoustic.encoder_dim = 4;
  c.acoustic.decoder_dim = 4;
  c.acoustic.postnet_channels = 2;
  c.acoustic.duration_hidden = 2;
  c.acoustic.prosody_hidden = 2;
  c.acoustic.prosody_emb_dim = 2;
  c.predictors.ref_channels = 3;
  c.predictors.ref_hidden = 3;
  c.predictors.ctx_hidden = 2;
  c.triplet_cap = 2;
  return c;
}

CorpusManifest tiny_corpus(std::uint64_t seed = 5, int per_speaker = 4) {
  return generate_toy_corpus(per_speaker, PhonemeInventory::toy_default(3, 2),
                             toy_speakers(), seed, tiny_gen());
}

// Fixture where the model's teacher-forced outputs equal the ground truth
// exactly: the residual head and the duration head are zeroed, every
// reconstruction target is zero, the adversarial classifier is uniform, and
// the corpus mels are the model's own outputs.
struct PerfectFixture {
  CorpusManifest manifest;
  std::unique_ptr<Trainer<float>> trainer;

  explicit PerfectFixture(TrainConfig cfg) {
    manifest = tiny_corpus(29, 2);
    // durations must be all ones so the zeroed duration head (log domain,
    // predicting 0 = log 1) is exact
    for (auto& u : manifest.utterances) {
      int total = 0;
      for (auto& d : u.durations) {
        d = 1;
        ++total;
      }
      u.mel.frames = Mat<float>(total, cfg.acoustic.n_mels);
    }
    trainer = std::make_unique<Trainer<float>>(manifest, cfg);
    auto& store = trainer->params();
    for (const char* name :
         {"acoustic.post.conv3.w", "acoustic.post.conv3.b", "acoustic.dur.fc2.w",
          "acoustic.dur.fc2.b", "embed.phoneme", "embed.speaker", "cp.out.w", "cp.out.b",
          "sp.out.w", "sp.out.b", "cp.adv.fc2.w", "cp.adv.fc2.b"})
      store.find(name)->value.fill(0.f);

    // corpus mels := the model's own teacher-forced outputs
    for (auto& u : manifest.utterances) {
      Tape<float> t;
      TeacherForcing tf{u.durations, u.f0, u.energy};
      auto out = trainer->model().synthesize(
          t, u.phonemes, manifest.speaker_index(u.speaker),
          SynthesisMode::kTeacherForced, nullptr, &tf);
      u.mel = trainer->model().extract_mel(t, out);
    }
  }
};

}  // namespace

TEST_CASE("stage-1 loss with perfect predictions reduces to the adversarial term") {
  TrainConfig cfg = tiny_config(1);
  PerfectFixture fx(cfg);
  auto batch = testing::make_batch(fx.manifest, {0, 2, 4});

  Tape<float> t;
  auto st = fx.trainer->stage1_loss(t, batch);
  CHECK(st.report.recon == 0.0);
  CHECK(st.report.res == 0.0);
  CHECK(st.report.dur == 0.0);
  CHECK(st.report.recon_ling == 0.0);
  CHECK(st.report.recon_spk == 0.0);
  CHECK(st.report.adv == Approx(std::log(3.0)).margin(1e-6));
  CHECK(st.report.total == Approx(0.025 * std::log(3.0)).margin(1e-6));
}

TEST_CASE("stage-1 loss with lambda zero and perfect predictions is zero") {
  TrainConfig cfg = tiny_config(1);
  cfg.lambda_adv = 0.0;
  PerfectFixture fx(cfg);
  auto batch = testing::make_batch(fx.manifest, {1, 3});
  Tape<float> t;
  auto st = fx.trainer->stage1_loss(t, batch);
  CHECK(st.report.total == 0.0);
}

TEST_CASE("loss report totals reconstruct from their terms") {
  auto manifest = tiny_corpus();
  TrainConfig cfg = tiny_config(1);
  cfg.max_steps = 3;
  Trainer<float> tr(manifest, cfg);
  tr.run([&](const LossReport& r) {
    const double expect = r.recon + r.dur + r.res + r.recon_ling + r.recon_spk +
                          cfg.lambda_adv * r.adv + r.f0 + r.energy;
    REQUIRE(r.total == Approx(expect).epsilon(1e-12));
  });

  // stage 2 accounting, including the non-FE triplet combination
  auto ck = tr.make_checkpoint();
  TrainConfig cfg2 = tiny_config(2);
  cfg2.max_steps = 3;
  Trainer<float> tr2(manifest, cfg2, ck);
  int saw_pairs = 0;
  tr2.run([&](const LossReport& r) {
    const double expect =
        r.recon + r.dur + r.res + r.f0 + r.energy + r.triplet_content + r.triplet_speaker;
    REQUIRE(r.total == Approx(expect).epsilon(1e-12));
    REQUIRE(r.recon_ling == 0.0);  // excluded in stage 2
    REQUIRE(r.recon_spk == 0.0);
    REQUIRE(r.adv == 0.0);
    REQUIRE(r.triplet == Approx(r.triplet_content + r.triplet_speaker));
    saw_pairs += r.triplet_pairs;
  });
  CHECK(saw_pairs > 0);
}

TEST_CASE("stage-2 loss on a single-language batch is recon + dur + res") {
  TrainConfig cfg1 = tiny_config(1);
  PerfectFixture fx(cfg1);
  auto ck = fx.trainer->make_checkpoint();

  TrainConfig cfg2 = tiny_config(2);
  Trainer<float> tr2(fx.manifest, cfg2, ck);
  // items 0,1 (anchor L1) and 4,5 (extra L1): no cross-language positive
  auto batch = testing::make_batch(fx.manifest, {0, 1, 4, 5});
  Tape<float> t;
  Rng rng(3);
  auto st = tr2.stage2_loss(t, batch, rng, 0);
  CHECK(st.report.triplet_pairs == 0);
  CHECK(st.report.triplet == 0.0);
  CHECK(st.report.total ==
        Approx(st.report.recon + st.report.dur + st.report.res).epsilon(1e-12));
}

TEST_CASE("stage-2 loss under perfect acoustics equals the triplet term") {
  TrainConfig cfg1 = tiny_config(1);
  PerfectFixture fx(cfg1);
  auto ck = fx.trainer->make_checkpoint();
  TrainConfig cfg2 = tiny_config(2);
  Trainer<float> tr2(fx.manifest, cfg2, ck);
  auto batch = testing::make_batch(fx.manifest, {0, 2, 4});  // both languages
  Tape<float> t;
  Rng rng(3);
  auto st = tr2.stage2_loss(t, batch, rng, 0);
  REQUIRE(st.report.triplet_pairs > 0);
  CHECK(st.report.recon == 0.0);
  CHECK(st.report.total == Approx(st.report.triplet).epsilon(1e-12));
}

TEST_CASE("stage 2 requires an init checkpoint and a nonempty freeze set") {
  auto manifest = tiny_corpus();
  TrainConfig cfg = tiny_config(2);
  CHECK_THROWS_AS(Trainer<float>(manifest, cfg), ConfigError);
  cfg.freeze_prefixes.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("freezing is exact: frozen params bitwise stable, others move") {
  auto manifest = tiny_corpus();
  TrainConfig cfg1 = tiny_config(1);
  cfg1.max_steps = 2;
  Trainer<float> tr1(manifest, cfg1);
  tr1.run();
  auto ck1 = tr1.make_checkpoint();

  TrainConfig cfg2 = tiny_config(2);
  cfg2.max_steps = 5;
  Trainer<float> tr2(manifest, cfg2, ck1);
  CHECK(tr2.frozen_parameters().size() > 0);
  tr2.run();
  auto ck2 = tr2.make_checkpoint();

  int acoustic_changed = 0;
  for (const auto& [name, value] : ck2.params) {
    const Mat<float>* before = ck1.find_param(name);
    REQUIRE(before != nullptr);
    const bool frozen = name.rfind("cp.", 0) == 0 || name.rfind("sp.", 0) == 0 ||
                        name.rfind("embed.", 0) == 0;
    if (frozen) {
      REQUIRE(value == *before);  // bitwise
    } else if (!(value == *before)) {
      ++acoustic_changed;
    }
  }
  CHECK(acoustic_changed > 0);

  // optimizer state for frozen parameters stays empty
  for (const auto& [name, mv] : ck2.adam) {
    CHECK(name.rfind("cp.", 0) != 0);
    CHECK(name.rfind("sp.", 0) != 0);
    CHECK(name.rfind("embed.", 0) != 0);
  }

  // a freeze prefix that matches nothing is a configuration error
  TrainConfig bad = tiny_config(2);
  bad.freeze_prefixes = {"nonexistent."};
  CHECK_THROWS_AS(Trainer<float>(manifest, bad, ck1), ConfigError);
}

TEST_CASE("identical seeds produce byte-identical loss logs") {
  auto manifest = tiny_corpus();
  TrainConfig cfg = tiny_config(1);
  cfg.max_steps = 4;
  auto run_log = [&]() {
    Trainer<float> tr(manifest, cfg);
    LossLog log;
    log.header = run_header_json(cfg);
    tr.run([&](const LossReport& r) { log.steps.push_back(r); });
    return serialize_loss_log(log);
  };
  CHECK(run_log() == run_log());
}

TEST_CASE("checkpoints round-trip bit-exactly and reject corruption") {
  auto manifest = tiny_corpus();
  TrainConfig cfg = tiny_config(1);
  cfg.max_steps = 2;
  Trainer<float> tr(manifest, cfg);
  tr.run();
  auto ck = tr.make_checkpoint();

  const std::string bytes = serialize_checkpoint(ck);
  auto back = deserialize_checkpoint(bytes);
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(back.params[i].first == ck.params[i].first);
    CHECK(back.params[i].second == ck.params[i].second);  // bitwise
  }
  CHECK(back.adam_step == ck.adam_step);
  REQUIRE(back.adam.size() == ck.adam.size());
  for (const auto& [name, mv] : ck.adam) {
    CHECK(back.adam.at(name).first == mv.first);
    CHECK(back.adam.at(name).second == mv.second);
  }
  CHECK(back.step == ck.step);
  CHECK(back.seed == ck.seed);

  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 5)),
                  CheckpointError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), CheckpointError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), CheckpointError);
}

TEST_CASE("checkpoint/config mismatches are load errors") {
  auto manifest = tiny_corpus();
  TrainConfig cfg = tiny_config(1);
  cfg.max_steps = 1;
  Trainer<float> tr(manifest, cfg);
  tr.run();
  auto ck = tr.make_checkpoint();

  TrainConfig wrong = tiny_config(2);
  wrong.acoustic.decoder_dim = 6;
  CHECK_THROWS_AS(Trainer<float>(manifest, wrong, ck), CheckpointError);

  auto other = tiny_corpus(99);
  other.speakers[0].tag = "someone_else";
  for (auto& u : other.utterances)
    if (u.speaker == "spk_l1_anchor") u.speaker = "someone_else";
  other.anchor_speaker_of["L1"] = "someone_else";
  TrainConfig cfg2 = tiny_config(2);
  CHECK_THROWS_AS(Trainer<float>(other, cfg2, ck), CheckpointError);
}

TEST_CASE("stage 2 with max_steps 0 leaves parameters identical to stage 1") {
  auto manifest = tiny_corpus();
  TrainConfig cfg = tiny_config(1);
  cfg.max_steps = 2;
  Trainer<float> tr(manifest, cfg);
  tr.run();
  auto ck1 = tr.make_checkpoint();

  TrainConfig cfg2 = tiny_config(2);
  cfg2.max_steps = 0;
  Trainer<float> tr2(manifest, cfg2, ck1);
  tr2.run();
  auto ck2 = tr2.make_checkpoint();
  REQUIRE(ck2.params.size() == ck1.params.size());
  for (std::size_t i = 0; i < ck1.params.size(); ++i)
    REQUIRE(ck2.params[i].second == ck1.params[i].second);
}

TEST_CASE("a resumed run reproduces the unbroken run's log exactly") {
  auto manifest = tiny_corpus();
  TrainConfig cfg = tiny_config(1);
  cfg.max_steps = 6;

  std::vector<std::string> unbroken;
  {
    Trainer<float> tr(manifest, cfg);
    tr.run([&](const LossReport& r) {
      unbroken.push_back(loss_report_json(r).dump());
    });
  }

  std::vector<std::string> resumed;
  Checkpoint mid;
  {
    TrainConfig half = cfg;
    half.max_steps = 3;
    Trainer<float> tr(manifest, half);
    tr.run([&](const LossReport& r) { resumed.push_back(loss_report_json(r).dump()); });
    mid = tr.make_checkpoint();
  }
  {
    auto loaded = deserialize_checkpoint(serialize_checkpoint(mid));  // via bytes
    Trainer<float> tr(manifest, cfg, loaded);
    REQUIRE(tr.current_step() == 3);
    tr.run([&](const LossReport& r) { resumed.push_back(loss_report_json(r).dump()); });
  }
  REQUIRE(resumed.size() == unbroken.size());
  for (std::size_t i = 0; i < unbroken.size(); ++i) REQUIRE(resumed[i] == unbroken[i]);
}

TEST_CASE("stage-2 training stops when the triplet loss stops improving") {
  auto manifest = tiny_corpus();
  TrainConfig cfg1 = tiny_config(1);
  cfg1.max_steps = 1;
  Trainer<float> tr1(manifest, cfg1);
  tr1.run();

  TrainConfig cfg2 = tiny_config(2);
  cfg2.max_steps = 50;
  cfg2.convergence_window = 2;
  cfg2.convergence_floor = 1.0;  // nothing improves 100% per window: stop asap
  Trainer<float> tr2(manifest, cfg2, tr1.make_checkpoint());
  tr2.run();
  CHECK(tr2.converged());
  CHECK(tr2.current_step() >= 4);  // needs 2*window history
  CHECK(tr2.current_step() < 50);
}

TEST_CASE("train config files round-trip") {
  TrainConfig c = tiny_config(2);
  c.triplet_weights.alpha = 0.5;
  c.freeze_prefixes = {"cp.", "embed.speaker"};
  c.corpus_dir = "/tmp/x";
  auto back = parse_train_config(serialize_train_config(c));
  CHECK(serialize_train_config(back) == serialize_train_config(c));
  CHECK(back.freeze_prefixes == c.freeze_prefixes);
  CHECK_THROWS_AS(parse_train_config("nonsense_key = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_train_config("stage\n"), ConfigError);
  auto with_comment = parse_train_config("# cmt\nstage = 1\n\nlr = 0.5 # tail\n");
  CHECK(with_comment.lr == 0.5);
}
