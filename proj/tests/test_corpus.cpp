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

#include <cstdio>
#include <filesystem>
#include <numeric>

#include "ttts/corpus.hpp"
#include "ttts/corpus_io.hpp"
#include "ttts/mel.hpp"

using namespace ttts;
using Catch::Approx;

namespace {

CorpusManifest small_corpus(std::uint64_t seed = 7, int utts = 4) {
  GeneratorParams gp;
  gp.n_mels = 16;
  return generate_toy_corpus(utts, PhonemeInventory::toy_default(4, 2), toy_speakers(),
                             seed, gp);
}

double correlation(std::span<const float> a, std::span<const float> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("generation is byte-identical for a fixed seed") {
  auto a = small_corpus(7);
  auto b = small_corpus(7);
  REQUIRE(serialize_manifest(a) == serialize_manifest(b));
  for (std::size_t i = 0; i < a.utterances.size(); ++i)
    REQUIRE(serialize_mel(a.utterances[i].mel) == serialize_mel(b.utterances[i].mel));
  auto c = small_corpus(8);
  REQUIRE(serialize_manifest(a) != serialize_manifest(c));
}

TEST_CASE("one utterance per speaker yields one utterance per speaker") {
  auto m = small_corpus(3, 1);
  REQUIRE(m.utterances.size() == 3);
  for (const auto& u : m.utterances) u.validate();
}

TEST_CASE("generation rejects degenerate registries") {
  GeneratorParams gp;
  gp.n_mels = 8;
  // fewer than 2 languages
  PhonemeInventory single;
  single.symbols = {"a", "b", "s"};
  single.language_of = {"L1", "L1", kSharedLanguage};
  CHECK_THROWS_AS(generate_toy_corpus(1, single,
                                      {{"x", "L1", true}, {"y", "L1", false},
                                       {"z", "L1", false}},
                                      1, gp),
                  ConfigError);
  // language without speakers
  CHECK_THROWS_AS(generate_toy_corpus(1, PhonemeInventory::toy_default(2, 1),
                                      {{"x", "L1", true}, {"y", "L1", false},
                                       {"z", "L1", false}},
                                      1, gp),
                  ConfigError);
  CHECK_THROWS_AS(small_corpus(1, 0), ConfigError);
}

TEST_CASE("same phoneme string: cross-speaker correlation beats cross-phoneme") {
  // Rendered mels differ between speakers, but the per-phoneme structure is
  // shared: compare clean frames straight from the generator.
  GeneratorParams gp;
  gp.n_mels = 32;
  ToyGenerator gen(PhonemeInventory::toy_default(6, 2), toy_speakers(), 11, gp);

  Rng rng(1);
  std::vector<int> seq = {0, 1, 2};
  auto ua = gen.render("a", seq, 0, rng);
  auto ub = gen.render("b", seq, 2, rng);  // same native language, different tint
  REQUIRE(serialize_mel(ua.mel) != serialize_mel(ub.mel));

  double cross_speaker = 0, cross_phoneme = 0;
  int ns = 0, np = 0;
  for (int p = 0; p < gen.inventory().size(); ++p) {
    auto fa = gen.clean_frame(p, 0);
    auto fb = gen.clean_frame(p, 2);
    cross_speaker += correlation(fa, fb);
    ++ns;
    for (int q = 0; q < gen.inventory().size(); ++q) {
      if (q == p) continue;
      cross_phoneme += correlation(fa, gen.clean_frame(q, 0));
      ++np;
    }
  }
  CHECK(cross_speaker / ns > cross_phoneme / np);
}

TEST_CASE("averaged rendered segment matches template + tint within noise bound") {
  GeneratorParams gp;
  gp.n_mels = 24;
  gp.noise_sigma = 0.05;
  gp.min_base_duration = 6;
  gp.max_base_duration = 8;
  ToyGenerator gen(PhonemeInventory::toy_default(4, 2), toy_speakers(), 21, gp);

  Rng rng(5);
  std::vector<int> seq(40, 3);  // many copies of one phoneme
  auto u = gen.render("x", seq, 1, rng);
  std::vector<double> avg(gp.n_mels, 0.0);
  for (int t = 0; t < u.mel.num_frames(); ++t)
    for (int j = 0; j < gp.n_mels; ++j) avg[j] += u.mel.frames(t, j);
  for (auto& x : avg) x /= u.mel.num_frames();

  auto clean = gen.clean_frame(3, 1);
  const double bound = 5.0 * gp.noise_sigma / std::sqrt(u.mel.num_frames());
  for (int j = 0; j < gp.n_mels; ++j)
    REQUIRE(std::abs(avg[j] - clean[j]) < bound);
}

TEST_CASE("segment_mel partitions exactly") {
  MelSpectrogram mel;
  mel.frames = Mat<float>(6, 3);
  for (std::size_t i = 0; i < mel.frames.size(); ++i)
    mel.frames.v[i] = static_cast<float>(i);

  SECTION("2,3,1 covers the mel in order") {
    std::vector<int> d = {2, 3, 1};
    auto segs = segment_mel(mel, d);
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].begin == 0);
    CHECK(segs[0].frames == 2);
    CHECK(segs[1].begin == 2);
    CHECK(segs[1].frames == 3);
    CHECK(segs[2].begin == 5);
    CHECK(segs[2].frames == 1);
    int covered = 0;
    for (auto s : segs) covered += s.frames;
    CHECK(covered == mel.num_frames());
  }
  SECTION("single duration equals the whole mel") {
    std::vector<int> d = {6};
    auto segs = segment_mel(mel, d);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].begin == 0);
    CHECK(segs[0].frames == 6);
  }
  SECTION("sum mismatch is an alignment error") {
    std::vector<int> d = {2, 3, 2};
    CHECK_THROWS_AS(segment_mel(mel, d), AlignmentError);
  }
  SECTION("zero duration is an alignment error") {
    std::vector<int> d = {2, 0, 4};
    CHECK_THROWS_AS(segment_mel(mel, d), AlignmentError);
  }
}

TEST_CASE("every generated utterance satisfies the partition property") {
  auto m = small_corpus(19, 3);
  for (const auto& u : m.utterances) {
    auto segs = segment_mel(u.mel, u.durations);
    REQUIRE(segs.size() == u.phonemes.size());
    int next = 0;
    for (auto s : segs) {
      CHECK(s.begin == next);
      next = s.begin + s.frames;
    }
    CHECK(next == u.mel.num_frames());
  }
}

TEST_CASE("frame-rate arithmetic: D seconds -> round(100 D) frames") {
  CHECK(frames_for_seconds(1.0) == 100);
  CHECK(frames_for_seconds(2.345) == 235);  // rounds 234.5 up
  CHECK(frames_for_seconds(0.004) == 0);
}

TEST_CASE("batches are deterministic, padded, and masked") {
  auto m = small_corpus(13, 8);
  auto pool = m.train_indices();

  Rng r1(42), r2(42);
  auto b1 = load_batch(m, pool, 5, r1);
  auto b2 = load_batch(m, pool, 5, r2);
  REQUIRE(b1.utt_indices == b2.utt_indices);

  Rng r3(43);
  CHECK_THROWS_AS(load_batch(m, pool, 0, r3), ConfigError);

  auto& b = b1;
  REQUIRE(b.size() == 5);
  long long frames = 0;
  for (auto* u : b.items) frames += u->mel.num_frames();
  CHECK(b.valid_frames == frames);
  for (int i = 0; i < b.size(); ++i) {
    const int tf = b.items[i]->mel.num_frames();
    for (int t = 0; t < b.mel.max_len; ++t)
      CHECK(b.mel.mask_at(i, t) == (t < tf ? 1.f : 0.f));
  }
}

TEST_CASE("an all-padding extra row leaves the masked mean unchanged") {
  auto m = small_corpus(17, 6);
  auto pool = m.train_indices();
  Rng rng(9);
  auto b = load_batch(m, pool, 4, rng);

  // Perturbed copy standing in for a prediction.
  PaddedSeq pred = b.mel;
  for (auto& x : pred.data) x += 0.25f;

  const double base = masked_mean_abs(pred, b.mel);

  auto widen = [](const PaddedSeq& s) {
    PaddedSeq w = s;
    w.batch += 1;
    w.data.resize(static_cast<std::size_t>(w.batch) * w.max_len * w.dim, 123.f);
    w.mask.resize(static_cast<std::size_t>(w.batch) * w.max_len, 0.f);
    return w;
  };
  PaddedSeq pred_w = widen(pred);
  PaddedSeq ref_w = widen(b.mel);
  CHECK(masked_mean_abs(pred_w, ref_w) == Approx(base));
}

TEST_CASE("manifest and mel files round-trip through a directory") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "ttts_corpus_test";
  fs::remove_all(dir);
  auto m = small_corpus(23, 2);
  save_corpus(m, dir);
  auto loaded = load_corpus(dir);
  CHECK(serialize_manifest(loaded) == serialize_manifest(m));
  for (std::size_t i = 0; i < m.utterances.size(); ++i)
    CHECK(loaded.utterances[i].mel.frames == m.utterances[i].mel.frames);
  fs::remove_all(dir);
}

TEST_CASE("held-out split is disjoint, stable, and covers every speaker") {
  auto m = small_corpus(29, 10);
  auto train = m.train_indices();
  auto held = m.heldout_indices();
  CHECK(train.size() + held.size() == m.utterances.size());
  for (int i : held)
    CHECK(std::find(train.begin(), train.end(), i) == train.end());
  std::set<std::string> held_speakers;
  for (int i : held) held_speakers.insert(m.utterances[i].speaker);
  CHECK(held_speakers.size() == m.speakers.size());
}

TEST_CASE("mel container rejects corruption") {
  MelSpectrogram mel;
  mel.frames = Mat<float>(2, 3);
  std::string bytes = serialize_mel(mel);
  auto as_span = [](const std::string& s) {
    return std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(s.data()), s.size());
  };
  CHECK(deserialize_mel(as_span(bytes)).frames.same_shape(mel.frames));
  std::string truncated = bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_mel(as_span(truncated)), IoError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_mel(as_span(bad)), IoError);
}
