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

#include <vector>

#include "support/gradient_check.hpp"
#include "ttts/predictors.hpp"

using namespace ttts;
using Catch::Approx;

namespace {

constexpr int kMels = 4;

template <class S>
std::vector<std::vector<typename Tape<S>::Ref>> random_segments(Tape<S>& t, Rng& rng,
                                                                int n_segments,
                                                                int frames_each = 2) {
  std::vector<std::vector<typename Tape<S>::Ref>> segs(n_segments);
  for (auto& seg : segs)
    for (int f = 0; f < frames_each; ++f) {
      Mat<S> m(kMels, 1);
      for (auto& x : m.v) x = static_cast<S>(rng.normal(0.3, 0.4));
      seg.push_back(t.constant(m));
    }
  return segs;
}

PredictorConfig small_cfg() {
  PredictorConfig c;
  c.ref_channels = 3;
  c.ref_hidden = 3;
  c.ctx_hidden = 2;
  return c;
}

}  // namespace

TEST_CASE("content predictor shapes and determinism") {
  ParamStore<float> store;
  Rng rng(2);
  ContentPredictor<float> cp(small_cfg(), kMels, 5, 3, store, rng);

  Tape<float> t;
  Rng data(7);
  auto segs = random_segments<float>(t, data, 4);
  auto enc = cp.encode(t, segs);
  REQUIRE(enc.z.size() == 4);
  REQUIRE(enc.e_hat.size() == 4);
  CHECK(t.rows(enc.z[0]) == small_cfg().content_encoding_dim());
  CHECK(t.rows(enc.e_hat[0]) == 5);

  // identical input on a fresh tape -> identical encodings
  Tape<float> t2;
  Rng data2(7);
  auto segs2 = random_segments<float>(t2, data2, 4);
  auto enc2 = cp.encode(t2, segs2);
  for (int i = 0; i < 4; ++i) {
    auto a = t.value(enc.z[i]);
    auto b = t2.value(enc2.z[i]);
    REQUIRE(std::vector<float>(a.begin(), a.end()) ==
            std::vector<float>(b.begin(), b.end()));
  }

  // self distance of an encoding is zero
  CHECK(t.scalar(cosine_distance(t, enc.z[1], enc.z[1])) == Approx(0.0).margin(1e-6));

  std::vector<std::vector<Tape<float>::Ref>> empty;
  CHECK_THROWS_AS(cp.encode(t, empty), InputError);
  std::vector<std::vector<Tape<float>::Ref>> with_empty(2);
  with_empty[0].push_back(t.zeros(kMels, 1));
  CHECK_THROWS_AS(cp.encode(t, with_empty), InputError);
}

TEST_CASE("speaker predictor summarizes a whole mel deterministically") {
  ParamStore<float> store;
  Rng rng(4);
  SpeakerPredictor<float> sp(small_cfg(), kMels, 3, store, rng);

  Tape<float> t;
  Rng data(9);
  auto frames = random_segments<float>(t, data, 1, 6)[0];
  auto enc = sp.encode(t, frames);
  CHECK(t.rows(enc.e_hat) == 3);
  CHECK(t.rows(enc.z) == small_cfg().speaker_encoding_dim());

  Tape<float> t2;
  Rng data2(9);
  auto frames2 = random_segments<float>(t2, data2, 1, 6)[0];
  auto enc2 = sp.encode(t2, frames2);
  auto a = t.value(enc.z);
  auto b = t2.value(enc2.z);
  CHECK(std::vector<float>(a.begin(), a.end()) ==
        std::vector<float>(b.begin(), b.end()));
}

TEST_CASE("adversarial loss endpoints") {
  ParamStore<float> store;
  Rng rng(6);
  ContentPredictor<float> cp(small_cfg(), kMels, 5, 3, store, rng);

  SECTION("uniform classifier output gives ln(S)") {
    store.find("cp.adv.fc2.w")->value.fill(0.f);
    store.find("cp.adv.fc2.b")->value.fill(0.f);
    Tape<float> t;
    Rng data(3);
    auto segs = random_segments<float>(t, data, 3);
    auto enc = cp.encode(t, segs);
    auto loss = cp.adversarial_loss(t, enc.segment, 1);
    CHECK(t.scalar(loss) == Approx(std::log(3.0)).margin(1e-6));
  }

  SECTION("confident correct classification gives zero") {
    store.find("cp.adv.fc2.w")->value.fill(0.f);
    Param<float>& bias = *store.find("cp.adv.fc2.b");
    bias.value.fill(-60.f);
    bias.value.v[2] = 60.f;  // true speaker
    Tape<float> t;
    Rng data(3);
    auto segs = random_segments<float>(t, data, 3);
    auto enc = cp.encode(t, segs);
    auto loss = cp.adversarial_loss(t, enc.segment, 2);
    CHECK(t.scalar(loss) == Approx(0.0).margin(1e-9));
  }

  SECTION("unknown speaker is a registry error") {
    Tape<float> t;
    Rng data(3);
    auto segs = random_segments<float>(t, data, 2);
    auto enc = cp.encode(t, segs);
    CHECK_THROWS_AS(cp.adversarial_loss(t, enc.segment, 7), RegistryError);
  }
}

TEST_CASE("reconstruction losses: zero case, hand value, quadratic scaling") {
  ParamStore<double> store;
  Rng rng(10);
  ContentPredictor<double> cp(small_cfg(), kMels, 4, 3, store, rng);
  SpeakerPredictor<double> sp(small_cfg(), kMels, 3, store, rng);

  Tape<double> t;
  Rng data(11);
  auto segs = random_segments<double>(t, data, 2);
  auto cenc = cp.encode(t, segs);
  auto frames = random_segments<double>(t, data, 1, 4)[0];
  auto senc = sp.encode(t, frames);

  SECTION("perfect reconstruction gives zero") {
    std::vector<Tape<double>::Ref> targets = {t.detach(cenc.e_hat[0]),
                                              t.detach(cenc.e_hat[1])};
    auto [ling, spk] = reconstruction_losses(
        t, cenc, senc, std::span<const Tape<double>::Ref>(targets), t.detach(senc.e_hat));
    CHECK(t.scalar(ling) == 0.0);
    CHECK(t.scalar(spk) == 0.0);
  }

  SECTION("zero targets against unit reconstructions, dim 4, two phonemes -> 8") {
    // Force e_hat to all-ones via the output layer; targets are zero vectors.
    // Parameter edits need a fresh tape (a tape snapshots values at first use).
    store.find("cp.out.w")->value.fill(0.0);
    store.find("cp.out.b")->value.fill(1.0);
    Tape<double> tf;
    Rng data_f(11);
    auto segs_f = random_segments<double>(tf, data_f, 2);
    auto cenc2 = cp.encode(tf, segs_f);
    auto frames_f = random_segments<double>(tf, data_f, 1, 4)[0];
    auto senc2 = sp.encode(tf, frames_f);
    std::vector<Tape<double>::Ref> targets = {tf.zeros(4, 1), tf.zeros(4, 1)};
    auto [ling, spk] = reconstruction_losses(tf, cenc2, senc2,
                                             std::span<const Tape<double>::Ref>(targets),
                                             tf.detach(senc2.e_hat));
    CHECK(tf.scalar(ling) == Approx(8.0));
    (void)spk;
  }

  SECTION("doubling every error quadruples the loss") {
    Mat<double> tgt(4, 1);
    tgt.v = {0.2, -0.1, 0.4, 0.3};
    std::vector<Tape<double>::Ref> t1 = {t.constant(tgt), t.constant(tgt)};
    auto [l1, s1] = reconstruction_losses(
        t, cenc, senc, std::span<const Tape<double>::Ref>(t1), t.detach(senc.e_hat));
    // doubling the error: target' = e_hat + 2*(target - e_hat)
    std::vector<Tape<double>::Ref> t2;
    for (int i = 0; i < 2; ++i) {
      auto diff = t.sub(t.constant(tgt), cenc.e_hat[i]);
      t2.push_back(t.detach(t.add(cenc.e_hat[i], t.scale_shift(diff, 2.0))));
    }
    auto [l2, s2] = reconstruction_losses(
        t, cenc, senc, std::span<const Tape<double>::Ref>(t2), t.detach(senc.e_hat));
    CHECK(t.scalar(l2) == Approx(4.0 * t.scalar(l1)).epsilon(1e-9));
    (void)s1;
    (void)s2;
  }

  SECTION("target count mismatch is an input error") {
    std::vector<Tape<double>::Ref> targets = {t.zeros(4, 1)};
    CHECK_THROWS_AS(
        reconstruction_losses(t, cenc, senc, std::span<const Tape<double>::Ref>(targets),
                              t.detach(senc.e_hat)),
        InputError);
  }
}

TEST_CASE("predictor losses match finite differences on sub-100-parameter instances") {
  PredictorConfig cfg;
  cfg.ref_channels = 1;
  cfg.ref_hidden = 1;
  cfg.ctx_hidden = 1;
  cfg.adv_hidden = 1;
  const int mels = 3;

  SECTION("content encoding + reconstruction + adversarial path") {
    ParamStore<double> store;
    Rng rng(14);
    ContentPredictor<double> cp(cfg, mels, 2, 2, store, rng);
    INFO("cp params: " << store.total_size());
    CHECK(store.total_size() <= 100);

    Rng data(15);
    std::vector<Mat<double>> frames;
    for (int i = 0; i < 4; ++i) {
      Mat<double> m(mels, 1);
      for (auto& x : m.v) x = data.normal(0, 0.6);
      frames.push_back(m);
    }
    Mat<double> target(2, 1);
    target.v = {0.3, -0.2};

    auto encode = [&](Tape<double>& t) {
      std::vector<std::vector<Tape<double>::Ref>> segs(2);
      segs[0] = {t.constant(frames[0]), t.constant(frames[1])};
      segs[1] = {t.constant(frames[2]), t.constant(frames[3])};
      return cp.encode(t, segs);
    };
    auto recon_loss = [&](Tape<double>& t) {
      auto enc = encode(t);
      std::vector<Tape<double>::Ref> terms;
      for (auto e : enc.e_hat) terms.push_back(t.sum_sq_diff(e, t.constant(target)));
      return fold_add(t, std::span<const Tape<double>::Ref>(terms));
    };
    store.zero_grads();
    Tape<double> t;
    t.backward(recon_loss(t));
    auto res = testing::finite_difference_check(store, [&]() {
      Tape<double> t2;
      return t2.scalar(recon_loss(t2));
    });
    INFO("recon worst: " << res.worst);
    CHECK(res.max_rel_error < 1e-3);

    // Adversarial path: the classifier head carries the true gradient, while
    // everything upstream of the reversal carries its negation.
    auto adv_loss = [&](Tape<double>& t2) {
      auto enc = encode(t2);
      return cp.adversarial_loss(t2, enc.segment, 1);
    };
    store.zero_grads();
    Tape<double> ta;
    ta.backward(adv_loss(ta));
    auto adv_res = testing::finite_difference_check(
        store,
        [&]() {
          Tape<double> t2;
          return t2.scalar(adv_loss(t2));
        },
        1e-5, 1e-6,
        [](const Param<double>& p) {
          return p.name.rfind("cp.adv.", 0) == 0 ? 1.0 : -1.0;
        });
    INFO("adv worst: " << adv_res.worst);
    CHECK(adv_res.max_rel_error < 1e-3);
  }

  SECTION("speaker encoding + reconstruction path") {
    ParamStore<double> store;
    Rng rng(16);
    SpeakerPredictor<double> sp(cfg, mels, 2, store, rng);
    INFO("sp params: " << store.total_size());
    CHECK(store.total_size() <= 100);

    Rng data(17);
    std::vector<Mat<double>> frames;
    for (int i = 0; i < 5; ++i) {
      Mat<double> m(mels, 1);
      for (auto& x : m.v) x = data.normal(0, 0.6);
      frames.push_back(m);
    }
    Mat<double> target(2, 1);
    target.v = {-0.4, 0.1};

    auto build = [&](Tape<double>& t) {
      std::vector<Tape<double>::Ref> fs;
      for (auto& m : frames) fs.push_back(t.constant(m));
      auto enc = sp.encode(t, fs);
      return t.sum_sq_diff(enc.e_hat, t.constant(target));
    };
    store.zero_grads();
    Tape<double> t;
    t.backward(build(t));
    auto res = testing::finite_difference_check(store, [&]() {
      Tape<double> t2;
      return t2.scalar(build(t2));
    });
    INFO("worst: " << res.worst);
    CHECK(res.max_rel_error < 1e-3);
  }
}

TEST_CASE("freezing predictor parameters freezes the encoding functions") {
  ParamStore<float> store;
  Rng rng(20);
  ContentPredictor<float> cp(small_cfg(), kMels, 4, 3, store, rng);

  Tape<float> t1;
  Rng data(21);
  auto segs1 = random_segments<float>(t1, data, 3);
  auto before = cp.encode(t1, segs1);
  std::vector<std::vector<float>> snapshot;
  for (auto z : before.z) {
    auto v = t1.value(z);
    snapshot.emplace_back(v.begin(), v.end());
  }

  store.freeze_prefix("cp.");
  // a backward pass and optimizer step must leave frozen params untouched
  Adam<float> opt(0.1);
  store.zero_grads();
  Tape<float> t2;
  Rng data2(21);
  auto segs2 = random_segments<float>(t2, data2, 3);
  auto enc = cp.encode(t2, segs2);
  std::vector<Tape<float>::Ref> sums;
  for (auto z : enc.z) sums.push_back(t2.sum(t2.square(z)));
  t2.backward(fold_add(t2, std::span<const Tape<float>::Ref>(sums)));
  opt.step(store.all());

  Tape<float> t3;
  Rng data3(21);
  auto segs3 = random_segments<float>(t3, data3, 3);
  auto after = cp.encode(t3, segs3);
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    auto v = t3.value(after.z[i]);
    REQUIRE(std::vector<float>(v.begin(), v.end()) == snapshot[i]);  // bitwise
  }
}
